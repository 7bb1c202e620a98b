// SPDX-License-Identifier: Apache-2.0
#include "jasnn/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>

#include "jasnn/errors.hpp"

namespace jasnn {

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("epochs must be positive");
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be positive");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("weight_decay must be non-negative");
    lambdas.validate();
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ConfigError("adam betas must lie in [0, 1)");
    if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
    if (!use_ann && (use_ann_ce || use_kld || use_norm))
        throw ConfigError("use_ann = false requires use_ann_ce, use_kld and use_norm to be false");
    if (!use_ann_ce && !use_snn_ce && !use_kld && !use_norm) throw ConfigError("every loss term is disabled");
}

void RunConfig::validate() const {
    net.validate();
    train.validate();
    energy.validate();
    if (data.dataset == DatasetKind::Mnist || data.dataset == DatasetKind::Cifar10) {
        if (net.classes != 10) throw ConfigError(dataset_name(data.dataset) + " has 10 classes, config says " +
                                                 std::to_string(net.classes));
    }
    if ((data.dataset == DatasetKind::Blobs || data.dataset == DatasetKind::Spirals) &&
        (data.synthetic_train < net.classes || data.synthetic_test < net.classes))
        throw ConfigError("synthetic_train and synthetic_test must be at least classes");
}

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::string unquote(const std::string& s) {
    if (s.size() >= 2 && (s.front() == '"' || s.front() == '\'') && s.back() == s.front())
        return s.substr(1, s.size() - 2);
    return s;
}

double to_double(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size() || !std::isfinite(out))
        throw ConfigError(key + ": '" + v + "' is not a finite number");
    return out;
}

std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || p != v.data() + v.size())
        throw ConfigError(key + ": '" + v + "' is not a non-negative integer");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
    if (v == "false" || v == "0" || v == "no" || v == "off") return false;
    throw ConfigError(key + ": '" + v + "' is not a boolean");
}

std::vector<std::uint64_t> to_list(const std::string& key, const std::string& v) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(to_uint(key, trim(item)));
    if (out.empty()) throw ConfigError(key + ": empty list");
    return out;
}

std::string num(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

std::string flag(bool b) { return b ? "true" : "false"; }

template <class T>
std::string join(const std::vector<StageSpec>& stages, T field) {
    std::string out;
    for (std::size_t i = 0; i < stages.size(); ++i) out += (i ? "," : "") + std::to_string(field(stages[i]));
    return out;
}

// Stage layout keys are gathered first and applied together.
struct StageKeys {
    std::optional<std::size_t> stages;
    std::optional<std::vector<std::uint64_t>> channels, blocks, downsample;
};

struct Key {
    std::string name;
    std::function<void(RunConfig&, StageKeys&, const std::string&)> set;
    std::function<std::string(const RunConfig&)> get;
};

template <class E>
E pick(const std::string& key, const std::string& v, std::initializer_list<std::pair<const char*, E>> options) {
    std::string names;
    for (const auto& [n, e] : options) {
        if (v == n) return e;
        names += (names.empty() ? "" : ", ") + std::string(n);
    }
    throw ConfigError(key + ": '" + v + "' is not one of " + names);
}

const std::vector<Key>& keys() {
    using R = RunConfig;
    using S = StageKeys;
    using V = const std::string&;
#define JASNN_DOUBLE(NAME, FIELD)                                                     \
    Key { NAME, [](R& c, S&, V v) { c.FIELD = to_double(NAME, v); },                 \
          [](const R& c) { return num(c.FIELD); } }
#define JASNN_UINT(NAME, FIELD)                                                       \
    Key { NAME, [](R& c, S&, V v) { c.FIELD = to_uint(NAME, v); },                   \
          [](const R& c) { return std::to_string(c.FIELD); } }
#define JASNN_BOOL(NAME, FIELD)                                                       \
    Key { NAME, [](R& c, S&, V v) { c.FIELD = to_bool(NAME, v); },                   \
          [](const R& c) { return flag(c.FIELD); } }
    static const std::vector<Key> table = {
        {"arch",
         [](R& c, S&, V v) {
             c.net.arch = pick<Arch>("arch", v, {{"mini_resnet", Arch::MiniResnet}, {"mini_vgg", Arch::MiniVgg}});
         },
         [](const R& c) { return arch_name(c.net.arch); }},
        {"stages", [](R&, S& s, V v) { s.stages = to_uint("stages", v); },
         [](const R& c) { return std::to_string(c.net.stages.size()); }},
        {"channels", [](R&, S& s, V v) { s.channels = to_list("channels", v); },
         [](const R& c) { return join(c.net.stages, [](const StageSpec& st) { return st.channels; }); }},
        {"blocks", [](R&, S& s, V v) { s.blocks = to_list("blocks", v); },
         [](const R& c) { return join(c.net.stages, [](const StageSpec& st) { return st.blocks; }); }},
        {"downsample", [](R&, S& s, V v) { s.downsample = to_list("downsample", v); },
         [](const R& c) {
             return join(c.net.stages, [](const StageSpec& st) { return st.downsample ? 1 : 0; });
         }},
        JASNN_UINT("classes", net.classes),
        // Input geometry; the trainer overwrites these from the loaded dataset.
        JASNN_UINT("in_channels", net.in_channels),
        JASNN_UINT("image_h", net.image_h),
        JASNN_UINT("image_w", net.image_w),
        JASNN_UINT("time_steps", net.time_steps),
        {"stem_stride", [](R& c, S&, V v) { c.net.stem_stride = static_cast<int>(to_uint("stem_stride", v)); },
         [](const R& c) { return std::to_string(c.net.stem_stride); }},
        JASNN_DOUBLE("tau", net.lif.tau),
        JASNN_DOUBLE("v_th", net.lif.v_th),
        {"surrogate",
         [](R& c, S&, V v) {
             c.net.lif.surrogate.kind = pick<SurrogateKind>(
                 "surrogate", v,
                 {{"triangular", SurrogateKind::Triangular}, {"rectangular", SurrogateKind::Rectangular}});
         },
         [](const R& c) {
             return std::string(c.net.lif.surrogate.kind == SurrogateKind::Triangular ? "triangular" : "rectangular");
         }},
        JASNN_DOUBLE("surrogate_width", net.lif.surrogate.width),
        JASNN_BOOL("reset_detach", net.lif.reset_detach),
        {"share_mode",
         [](R& c, S&, V v) {
             c.net.share = pick<ShareMode>("share_mode", v,
                                           {{"wft", ShareMode::Wft}, {"full", ShareMode::Full}, {"none", ShareMode::None}});
         },
         [](const R& c) { return share_mode_name(c.net.share); }},
        // Alias: true selects wft, false selects independent weights.
        {"use_wft", [](R& c, S&, V v) { c.net.share = to_bool("use_wft", v) ? ShareMode::Wft : ShareMode::None; },
         nullptr},
        JASNN_BOOL("factorize_stem_and_heads", net.factorize_stem_and_heads),
        JASNN_BOOL("ann_norm", net.ann_norm),
        JASNN_BOOL("snn_norm", net.snn_norm),
        {"norm_enabled", [](R& c, S&, V v) { c.net.ann_norm = c.net.snn_norm = to_bool("norm_enabled", v); }, nullptr},
        {"norm_features",
         [](R& c, S&, V v) {
             c.net.features = pick<FeatureSource>("norm_features", v,
                                                  {{"logits", FeatureSource::Logits}, {"pooled", FeatureSource::Pooled}});
         },
         [](const R& c) { return std::string(c.net.features == FeatureSource::Logits ? "logits" : "pooled"); }},
        {"head_mode",
         [](R& c, S&, V v) {
             c.net.head = pick<HeadMode>("head_mode", v, {{"branch4", HeadMode::Branch4}, {"separate", HeadMode::Separate}});
         },
         [](const R& c) { return std::string(c.net.head == HeadMode::Branch4 ? "branch4" : "separate"); }},
        JASNN_UINT("epochs", train.epochs),
        JASNN_DOUBLE("lr", train.lr),
        JASNN_DOUBLE("weight_decay", train.weight_decay),
        JASNN_DOUBLE("lambda_kld", train.lambdas.lambda1),
        JASNN_DOUBLE("lambda_norm", train.lambdas.lambda2),
        JASNN_UINT("batch_size", train.batch_size),
        JASNN_UINT("seed", train.seed),
        JASNN_DOUBLE("adam_beta1", train.adam_beta1),
        JASNN_DOUBLE("adam_beta2", train.adam_beta2),
        JASNN_DOUBLE("adam_eps", train.adam_eps),
        JASNN_BOOL("use_ann", train.use_ann),
        JASNN_BOOL("use_ann_ce", train.use_ann_ce),
        JASNN_BOOL("use_snn_ce", train.use_snn_ce),
        JASNN_BOOL("use_kld", train.use_kld),
        JASNN_BOOL("use_norm", train.use_norm),
        {"ce_branches",
         [](R& c, S&, V v) {
             c.train.ce_branches = pick<CeBranches>("ce_branches", v, {{"all", CeBranches::All}, {"head", CeBranches::Head}});
         },
         [](const R& c) { return std::string(c.train.ce_branches == CeBranches::All ? "all" : "head"); }},
        JASNN_UINT("checkpoint_every", train.checkpoint_every),
        {"dataset", [](R& c, S&, V v) { c.data.dataset = parse_dataset_kind(v); },
         [](const R& c) { return dataset_name(c.data.dataset); }},
        JASNN_UINT("train_limit", data.train_limit),
        JASNN_UINT("test_limit", data.test_limit),
        JASNN_UINT("synthetic_train", data.synthetic_train),
        JASNN_UINT("synthetic_test", data.synthetic_test),
        JASNN_UINT("data_seed", data.data_seed),
        JASNN_BOOL("flip", data.flip),
        JASNN_DOUBLE("energy_mac_pj", energy.mac_pj),
        JASNN_DOUBLE("energy_acc_pj", energy.acc_pj),
        JASNN_DOUBLE("energy_move_min_pj", energy.move_min_pj),
        JASNN_DOUBLE("energy_move_max_pj", energy.move_max_pj),
        JASNN_UINT("energy_value_bits", energy.value_bits),
        JASNN_UINT("energy_spike_bits", energy.spike_bits),
        JASNN_UINT("energy_move_bits", energy.move_bits),
        JASNN_UINT("energy_ref_samples", energy.reference_samples),
    };
#undef JASNN_DOUBLE
#undef JASNN_UINT
#undef JASNN_BOOL
    return table;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0u : 1u)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

void apply_stages(RunConfig& c, const StageKeys& s) {
    if (!s.stages && !s.channels && !s.blocks && !s.downsample) return;
    std::size_t n = c.net.stages.size();
    if (s.channels) n = s.channels->size();
    if (s.stages) {
        if (s.channels && *s.stages != n)
            throw ConfigError("stages = " + std::to_string(*s.stages) + " but channels lists " + std::to_string(n));
        n = *s.stages;
    }
    auto expand = [&](const std::optional<std::vector<std::uint64_t>>& list, const char* key) {
        std::vector<std::uint64_t> out;
        if (!list) return out;
        if (list->size() == 1) return std::vector<std::uint64_t>(n, list->front());
        if (list->size() != n)
            throw ConfigError(std::string(key) + " lists " + std::to_string(list->size()) + " values for " +
                              std::to_string(n) + " stages");
        return *list;
    };
    const auto ch = expand(s.channels, "channels");
    const auto bl = expand(s.blocks, "blocks");
    const auto ds = expand(s.downsample, "downsample");
    std::vector<StageSpec> stages(n);
    const auto defaults = NetworkConfig::default_stages();
    for (std::size_t i = 0; i < n; ++i) {
        const StageSpec base = i < c.net.stages.size() ? c.net.stages[i] : defaults.back();
        stages[i].channels = ch.empty() ? base.channels : ch[i];
        stages[i].blocks = bl.empty() ? base.blocks : bl[i];
        stages[i].downsample = ds.empty() ? (i > 0) : ds[i] != 0;
    }
    c.net.stages = std::move(stages);
}

} // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> out;
    for (const auto& k : keys()) out.push_back(k.name);
    return out;
}

std::string nearest_key(const std::string& key) {
    std::string best;
    std::size_t best_d = SIZE_MAX;
    for (const auto& k : keys()) {
        const auto d = edit_distance(key, k.name);
        if (d < best_d) {
            best_d = d;
            best = k.name;
        }
    }
    return best;
}

RunConfig parse_config(std::string_view text, const std::string& origin) {
    RunConfig cfg;
    StageKeys stage_keys;
    std::map<std::string, std::size_t> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        std::string line(text.substr(pos, end - pos));
        pos = end + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::string where = origin + ":" + std::to_string(line_no) + ": ";
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value', got '" + line + "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = unquote(trim(line.substr(eq + 1)));
        const auto it = std::find_if(keys().begin(), keys().end(), [&](const Key& k) { return k.name == key; });
        if (it == keys().end())
            throw ConfigError(where + "unknown key '" + key + "' (did you mean '" + nearest_key(key) + "'?)");
        if (const auto prev = seen.find(key); prev != seen.end())
            throw ConfigError(where + "duplicate key '" + key + "' (first set on line " +
                              std::to_string(prev->second) + ")");
        seen[key] = line_no;
        try {
            it->set(cfg, stage_keys, value);
        } catch (const ConfigError& e) {
            throw ConfigError(where + e.what());
        }
    }
    apply_stages(cfg, stage_keys);
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::string config_text(const RunConfig& cfg) {
    std::string out;
    for (const auto& k : keys())
        if (k.get) out += k.name + " = " + k.get(cfg) + "\n";
    return out;
}

} // namespace jasnn
