// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <filesystem>

#include "jasnn/config.hpp"
#include "jasnn/errors.hpp"

using namespace jasnn;

namespace {

std::string error_of(std::string_view text) {
    try {
        parse_config(text, "t.cfg");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("empty config gives defaults", "[config]") {
    const auto c = parse_config("");
    CHECK(c.net.time_steps == 2);
    CHECK(c.net.share == ShareMode::Wft);
    CHECK(c.net.features == FeatureSource::Logits);
    CHECK(c.train.lambdas.lambda1 == 1.0);
    CHECK(c.train.lambdas.lambda2 == 0.3);
    CHECK(c.train.epochs == 40);
    CHECK(c.train.lr == 1e-3);
    CHECK(c.train.batch_size == 32);
    CHECK(c.net.stages.size() == 4);
}

TEST_CASE("config text round trips", "[config]") {
    const auto c = parse_config(R"(
        # comment line
        dataset = blobs
        classes = 4
        share_mode = full    # trailing comment
        channels = 8, 16
        blocks = 1
        lambda_kld = 0.25
        surrogate = rectangular
        norm_features = "pooled"
        use_kld = false
        seed = 77
    )");
    CHECK(c.net.stages.size() == 2);
    CHECK(c.net.stages[1].channels == 16);
    CHECK(c.net.stages[1].downsample);
    CHECK(c.net.share == ShareMode::Full);
    CHECK(c.net.lif.surrogate.kind == SurrogateKind::Rectangular);
    CHECK(c.net.features == FeatureSource::Pooled);
    CHECK(!c.train.use_kld);
    CHECK(c.train.seed == 77);

    const auto text = config_text(c);
    const auto back = parse_config(text);
    CHECK(config_text(back) == text);
    CHECK(back.train.lambdas.lambda1 == 0.25);
    CHECK(config_text(parse_config("")) == config_text(RunConfig{}));

    // Every canonical key appears exactly once.
    for (const auto& k : config_keys()) {
        if (k == "use_wft" || k == "norm_enabled") continue;
        CHECK((text.find("\n" + k + " = ") != std::string::npos || text.rfind(k + " = ", 0) == 0));
    }
}

TEST_CASE("unknown keys suggest the nearest one", "[config][errors]") {
    const auto msg = error_of("tau = 0.5\nlamda_kld = 1\n");
    CHECK(msg.find("t.cfg:2") != std::string::npos);
    CHECK(msg.find("lamda_kld") != std::string::npos);
    CHECK(msg.find("did you mean 'lambda_kld'") != std::string::npos);
    CHECK(nearest_key("time_step") == "time_steps");
}

TEST_CASE("malformed values and duplicates are rejected", "[config][errors]") {
    CHECK(error_of("tau = 0.5\ntau = 0.6").find("duplicate key 'tau' (first set on line 1)") != std::string::npos);
    CHECK(error_of("epochs = -3").find("epochs") != std::string::npos);
    CHECK(error_of("epochs = 0").find("epochs") != std::string::npos);
    CHECK(error_of("lr = abc").find("lr") != std::string::npos);
    CHECK(error_of("lr = nan").find("lr") != std::string::npos);
    CHECK(error_of("use_kld = maybe").find("boolean") != std::string::npos);
    CHECK(error_of("share_mode = half").find("share_mode") != std::string::npos);
    CHECK(error_of("just words").find("key = value") != std::string::npos);
    CHECK(error_of("stages = 3\nchannels = 4, 8").find("stages") != std::string::npos);
    CHECK(error_of("channels = 4, 8\nblocks = 1, 1, 1").find("blocks") != std::string::npos);
    CHECK(error_of("use_ann = false").find("use_ann") != std::string::npos);
    CHECK(error_of("dataset = mnist\nclasses = 4").find("10 classes") != std::string::npos);
    CHECK(error_of("time_steps = 0") != "");
    CHECK(error_of("tau = 1.5") != "");
}

TEST_CASE("aliases", "[config]") {
    CHECK(parse_config("use_wft = false").net.share == ShareMode::None);
    CHECK(parse_config("use_wft = true").net.share == ShareMode::Wft);
    const auto off = parse_config("norm_enabled = false");
    CHECK(!off.net.ann_norm);
    CHECK(!off.net.snn_norm);
}

TEST_CASE("bundled configs parse", "[config]") {
    const std::filesystem::path dir = std::filesystem::path(JASNN_SOURCE_DIR) / "configs";
    std::size_t n = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.path().extension() != ".cfg") continue;
        INFO(e.path());
        CHECK_NOTHROW(load_config(e.path()));
        ++n;
    }
    CHECK(n >= 3);
    CHECK_THROWS_AS(load_config(dir / "missing.cfg"), DataError);
}
