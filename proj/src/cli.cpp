// SPDX-License-Identifier: Apache-2.0
#include "jasnn/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "jasnn/checkpoint.hpp"
#include "jasnn/config.hpp"
#include "jasnn/energy.hpp"
#include "jasnn/errors.hpp"
#include "jasnn/factorized.hpp"
#include "jasnn/trainer.hpp"

namespace jasnn {

namespace {

struct Options {
    std::string config;
    std::string data_dir = "data/mnist-5k";
    std::string out = "out";
    std::string checkpoint;
    std::string format = "json";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> time_steps;
    int verbose = 0;
};

int exit_code_for(const std::string& category) {
    if (category == "config") return kExitUsage;
    if (category == "numeric" || category == "tape") return kExitNumeric;
    return kExitData;
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

RunConfig configured(const Options& o) {
    if (o.config.empty()) throw ConfigError("--config is required");
    RunConfig cfg = load_config(o.config);
    if (o.seed) cfg.train.seed = *o.seed;
    if (o.time_steps) cfg.net.time_steps = *o.time_steps;
    cfg.validate();
    return cfg;
}

nlohmann::ordered_json eval_json(const EvalResult& r, std::size_t time_steps) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr); };
    nlohmann::ordered_json j;
    j["samples"] = r.samples;
    j["time_steps"] = time_steps;
    j["ann_top1"] = num(r.ann_top1);
    j["snn_top1"] = r.snn_top1;
    auto a = nlohmann::ordered_json::array(), s = nlohmann::ordered_json::array();
    for (double v : r.ann_branch_top1) a.push_back(num(v));
    for (double v : r.snn_branch_top1) s.push_back(v);
    j["ann_branch_top1"] = a;
    j["snn_branch_top1"] = s;
    return j;
}

int cmd_train(const Options& o, std::ostream& out, std::ostream& err) {
    std::filesystem::create_directories(o.out);
    const auto metrics_path = std::filesystem::path(o.out) / "metrics.jsonl";
    std::optional<Trainer> trainer;
    Dataset train, test;
    if (!o.checkpoint.empty()) {
        trainer.emplace(Trainer::resume(o.checkpoint));
        std::tie(train, test) = load_datasets(trainer->config(), o.data_dir);
    } else {
        RunConfig cfg = configured(o);
        std::tie(train, test) = load_datasets(cfg, o.data_dir);
        match_input(cfg, train);
        trainer.emplace(cfg);
        std::ofstream(metrics_path, std::ios::trunc);
    }
    const auto& cfg = trainer->config();
    std::ofstream metrics(metrics_path, std::ios::app);
    if (!metrics) throw DataError("cannot write " + metrics_path.string());
    if (o.verbose) err << "training " << train.size() << " samples, testing " << test.size() << "\n";
    const auto summary = trainer->fit(train, test, [&](const EpochMetrics& m) {
        metrics << m.json() << "\n";
        metrics.flush();
        if (o.verbose) err << m.json() << "\n";
        if (cfg.train.checkpoint_every && m.epoch % cfg.train.checkpoint_every == 0 && m.epoch < cfg.train.epochs)
            trainer->save(std::filesystem::path(o.out) / ("checkpoint-epoch" + std::to_string(m.epoch) + ".jasn"));
    });
    trainer->save(std::filesystem::path(o.out) / "checkpoint.jasn");
    nlohmann::ordered_json j;
    j["summary"] = "train complete";
    j["epochs"] = summary.last.epoch;
    j["last"] = nlohmann::ordered_json::parse(summary.last.json());
    j["best"] = nlohmann::ordered_json::parse(summary.best.json());
    out << j.dump() << "\n";
    return kExitOk;
}

int cmd_eval(const Options& o, std::ostream& out) {
    if (o.checkpoint.empty()) throw ConfigError("eval needs --checkpoint");
    Trainer t = Trainer::resume(o.checkpoint);
    auto [train, test] = load_datasets(t.config(), o.data_dir);
    const auto r = t.evaluate(test, o.time_steps);
    out << eval_json(r, o.time_steps.value_or(t.config().net.time_steps)).dump() << "\n";
    return kExitOk;
}

int cmd_energy(const Options& o, std::ostream& out) {
    ReportFormat format;
    if (o.format == "json") format = ReportFormat::Json;
    else if (o.format == "table") format = ReportFormat::Table;
    else throw ConfigError("--format must be json or table");
    std::optional<Trainer> t;
    Dataset test;
    if (!o.checkpoint.empty()) {
        t.emplace(Trainer::resume(o.checkpoint));
        test = load_datasets(t->config(), o.data_dir).second;
    } else {
        RunConfig cfg = configured(o);
        auto data = load_datasets(cfg, o.data_dir);
        match_input(cfg, data.first);
        t.emplace(cfg);
        test = std::move(data.second);
    }
    const auto& k = t->config().energy;
    const Dataset ref = test.head(k.reference_samples);
    auto& net = t->net();
    const auto ws = net.compose(Side::Snn);
    SpikeStats stats;
    ForwardOptions opts;
    opts.record_stats = true;
    opts.time_steps = o.time_steps;
    for (const auto& idx : batches(ref.size(), 64, std::nullopt))
        stats.merge(net.forward_snn(gather(ref, idx).images, ws, opts).stats);
    out << emit_report(build_energy_report(net.topology(), stats, k), format);
    return kExitOk;
}

std::string shape_text(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out;
}

int cmd_inspect(const Options& o, std::ostream& out) {
    if (o.checkpoint.empty()) throw ConfigError("inspect needs --checkpoint");
    std::ifstream in(o.checkpoint, std::ios::binary);
    if (!in) throw SerializationError("cannot open checkpoint " + o.checkpoint);
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    auto records = decode_checkpoint(bytes);
    std::stable_sort(records.begin(), records.end(), [](const Record& a, const Record& b) { return a.name < b.name; });
    std::ostringstream crc;
    crc << std::hex << std::setw(8) << std::setfill('0') << crc32_of(std::span(bytes).first(bytes.size() - 4));
    out << "checkpoint " << o.checkpoint << " version " << kCheckpointVersion << " records " << records.size()
        << " crc32 " << crc.str() << " ok\n";
    out << std::left << std::setw(44) << "name" << std::setw(14) << "shape" << std::right << std::setw(14) << "min"
        << std::setw(14) << "max" << std::setw(14) << "mean" << "\n";
    // Factorized layers: "<layer>.u[.k<i>_<j>]" with shape [c_in x r].
    std::map<std::string, std::pair<std::size_t, std::size_t>> layers; // name -> (entries, c_in)
    std::map<std::string, std::size_t> c_outs;
    for (const auto& r : records) {
        double lo = 0.0, hi = 0.0, mean = 0.0;
        if (!r.values.empty()) {
            lo = *std::min_element(r.values.begin(), r.values.end());
            hi = *std::max_element(r.values.begin(), r.values.end());
            for (double v : r.values) mean += v;
            mean /= static_cast<double>(r.values.size());
        }
        out << std::left << std::setw(44) << r.name << std::setw(14) << shape_text(r.shape) << std::right
            << std::setprecision(6) << std::setw(14) << lo << std::setw(14) << hi << std::setw(14) << mean << "\n";
        if (r.name.rfind("adam.", 0) == 0 || r.shape.size() != 2) continue;
        const auto k = r.name.rfind(".k");
        const std::string stem = (k != std::string::npos && r.name.find('_', k) != std::string::npos) ? r.name.substr(0, k) : r.name;
        if (stem.size() > 2 && stem.compare(stem.size() - 2, 2, ".u") == 0) {
            auto& e = layers[stem.substr(0, stem.size() - 2)];
            ++e.first;
            e.second = r.shape[0];
        } else if (stem.size() > 2 && stem.compare(stem.size() - 2, 2, ".v") == 0) {
            c_outs[stem.substr(0, stem.size() - 2)] = r.shape[1];
        }
    }
    if (!layers.empty()) {
        out << "\nfactorized layers (per kernel entry: c_in^2 + c_out^2 + 2r vs 2 c_in c_out)\n";
        out << std::left << std::setw(28) << "layer" << std::right << std::setw(6) << "c_in" << std::setw(7) << "c_out"
            << std::setw(8) << "entries" << std::setw(12) << "factorized" << std::setw(10) << "baseline"
            << std::setw(10) << "overhead" << std::setw(8) << "ratio" << "\n";
        for (const auto& [name, e] : layers) {
            const std::size_t c_in = e.second, c_out = c_outs[name];
            const auto pc = param_count(c_in, c_out);
            out << std::left << std::setw(28) << name << std::right << std::setw(6) << c_in << std::setw(7) << c_out
                << std::setw(8) << e.first << std::setw(12) << pc.factorized << std::setw(10) << pc.baseline
                << std::setw(10) << pc.overhead() << std::setw(8) << std::fixed << std::setprecision(3) << pc.ratio()
                << std::defaultfloat << "\n";
        }
    }
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"jasnn: joint ANN/SNN training with weight-factorized sharing"};
    app.require_subcommand(1, 1);
    // One option set per subcommand: CLI11 resets variables bound to unparsed subcommands.
    Options opts[4];
    auto add_common = [&](CLI::App* sub, Options& o) {
        sub->add_option("--config", o.config, "config file (key = value lines)");
        sub->add_option("--data-dir", o.data_dir, "dataset directory (IDX or CIFAR-10 binary)");
        sub->add_option("--checkpoint", o.checkpoint, "checkpoint file");
        sub->add_option("--seed", o.seed, "override the config seed");
        sub->add_option("--time-steps", o.time_steps, "override the SNN time steps")->check(CLI::PositiveNumber);
        sub->add_flag("-v,--verbose", o.verbose, "progress on stderr");
    };
    auto* train = app.add_subcommand("train", "train from a config, or resume from --checkpoint");
    add_common(train, opts[0]);
    train->add_option("--out", opts[0].out, "output directory for metrics.jsonl and checkpoints");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    add_common(eval, opts[1]);
    auto* energy = app.add_subcommand("energy", "inference energy report");
    add_common(energy, opts[2]);
    energy->add_option("--format", opts[2].format, "json or table");
    auto* inspect = app.add_subcommand("inspect", "list checkpoint records and verify the checksum");
    add_common(inspect, opts[3]);

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error[usage]: " << one_line(e.what()) << "\n";
        return kExitUsage;
    }
    try {
        if (train->parsed()) return cmd_train(opts[0], out, err);
        if (eval->parsed()) return cmd_eval(opts[1], out);
        if (energy->parsed()) return cmd_energy(opts[2], out);
        return cmd_inspect(opts[3], out);
    } catch (const Error& e) {
        err << "error[" << e.category() << "]: " << one_line(e.what()) << "\n";
        return exit_code_for(e.category());
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error[data]: " << one_line(e.what()) << "\n";
        return kExitData;
    }
}

} // namespace jasnn
