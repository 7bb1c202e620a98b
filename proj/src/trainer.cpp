// SPDX-License-Identifier: Apache-2.0
#include "jasnn/trainer.hpp"

#include <chrono>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "jasnn/errors.hpp"
#include "jasnn/losses.hpp"

namespace jasnn {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the combined words.
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    std::uint64_t h = mix(seed);
    for (std::uint64_t w : {purpose, a, b}) h = mix(h ^ w);
    return h;
}

std::string param_group_name(ParamGroup g) {
    switch (g) {
    case ParamGroup::SharedFactor: return "shared_factor";
    case ParamGroup::SigmaAnn: return "sigma_ann";
    case ParamGroup::SigmaSnn: return "sigma_snn";
    case ParamGroup::DenseShared: return "dense_shared";
    case ParamGroup::DenseAnn: return "dense_ann";
    case ParamGroup::DenseSnn: return "dense_snn";
    case ParamGroup::Norm: return "norm";
    case ParamGroup::Bias: return "bias";
    }
    return "?";
}

namespace {

nlohmann::ordered_json number_or_null(double v) {
    return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json list_json(const std::vector<double>& v) {
    auto a = nlohmann::ordered_json::array();
    for (double x : v) a.push_back(number_or_null(x));
    return a;
}

std::vector<double> list_from(const nlohmann::json& j) {
    std::vector<double> out;
    for (const auto& x : j) out.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
    return out;
}

EpochMetrics metrics_from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    EpochMetrics m;
    m.epoch = j.at("epoch").get<std::size_t>();
    m.lr = j.at("lr").get<double>();
    m.l_ce = j.at("l_ce").get<double>();
    m.l_kld = j.at("l_kld").get<double>();
    m.l_norm = j.at("l_norm").get<double>();
    m.l_total = j.at("l_total").get<double>();
    m.eval.ann_top1 = j.at("ann_top1").is_null() ? std::numeric_limits<double>::quiet_NaN() : j.at("ann_top1").get<double>();
    m.eval.snn_top1 = j.at("snn_top1").get<double>();
    m.eval.ann_branch_top1 = list_from(j.at("ann_branch_top1"));
    m.eval.snn_branch_top1 = list_from(j.at("snn_branch_top1"));
    m.wall_seconds = j.at("wall_seconds").get<double>();
    return m;
}

std::vector<Tensor> select_exits(const std::vector<Tensor>& logits, CeBranches which) {
    if (which == CeBranches::All) return logits;
    return {logits.back()};
}

void check_finite(double v, const char* name) {
    if (!std::isfinite(v)) throw NumericError(std::string("non-finite ") + name + " loss; training aborted");
}

} // namespace

std::string EpochMetrics::json() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["lr"] = lr;
    j["l_ce"] = l_ce;
    j["l_kld"] = l_kld;
    j["l_norm"] = l_norm;
    j["l_total"] = l_total;
    j["ann_top1"] = number_or_null(eval.ann_top1);
    j["snn_top1"] = eval.snn_top1;
    j["ann_branch_top1"] = list_json(eval.ann_branch_top1);
    j["snn_branch_top1"] = list_json(eval.snn_branch_top1);
    j["wall_seconds"] = wall_seconds;
    return j.dump();
}

std::pair<Dataset, Dataset> load_datasets(const RunConfig& cfg, const std::filesystem::path& data_dir) {
    std::pair<Dataset, Dataset> out;
    switch (cfg.data.dataset) {
    case DatasetKind::Mnist: out = load_mnist_idx(data_dir); break;
    case DatasetKind::Cifar10:
        out = load_cifar10_bin(data_dir);
        out.first.flip_augment = cfg.data.flip;
        break;
    case DatasetKind::Blobs:
    case DatasetKind::Spirals: {
        const auto kind = cfg.data.dataset == DatasetKind::Blobs ? SyntheticKind::Blobs : SyntheticKind::Spirals;
        out.first = make_synthetic(kind, cfg.data.synthetic_train, cfg.net.classes, cfg.data.data_seed);
        out.second = make_synthetic(kind, cfg.data.synthetic_test, cfg.net.classes, cfg.data.data_seed + 1);
        out.first.split = "train";
        out.second.split = "test";
        break;
    }
    }
    out.first = out.first.head(cfg.data.train_limit);
    out.second = out.second.head(cfg.data.test_limit);
    out.first.validate();
    out.second.validate();
    return out;
}

void match_input(RunConfig& cfg, const Dataset& ds) {
    cfg.net.in_channels = ds.channels();
    cfg.net.image_h = ds.height();
    cfg.net.image_w = ds.width();
    if (ds.classes != cfg.net.classes)
        throw ConfigError("dataset has " + std::to_string(ds.classes) + " classes, config says " +
                          std::to_string(cfg.net.classes));
}

Trainer::Trainer(RunConfig cfg)
    : cfg_(std::move(cfg)),
      adam_(AdamConfig{cfg_.train.adam_beta1, cfg_.train.adam_beta2, cfg_.train.adam_eps, cfg_.train.weight_decay}) {
    cfg_.validate();
    net_ = std::make_unique<JointNetwork>(cfg_.net, derive_seed(cfg_.train.seed, kSeedInit));
}

StepMetrics Trainer::train_step(const Batch& batch, double lr) {
    if (batch.labels.empty()) throw DataError("train_step needs a non-empty batch");
    const auto& t = cfg_.train;
    const bool need_snn = t.use_snn_ce || t.use_kld || t.use_norm;
    auto params = net_->parameters();
    for (auto& p : params) p.tensor.zero_grad();

    StepMetrics m;
    m.batch = batch.labels.size();
    {
        Tape tape;
        TapeScope scope(tape);
        SideOutputs ann;
        SnnOutputs snn;
        if (t.use_ann) ann = net_->forward_ann(batch.images, net_->compose(Side::Ann), true);
        if (need_snn) {
            ForwardOptions opts;
            opts.training = true;
            snn = net_->forward_snn(batch.images, net_->compose(Side::Snn), opts);
        }
        std::vector<Tensor> ce_terms;
        if (t.use_ann_ce) ce_terms.push_back(ce_loss(select_exits(ann.logits, t.ce_branches), batch.labels));
        if (t.use_snn_ce) ce_terms.push_back(ce_loss(select_exits(snn.logits, t.ce_branches), batch.labels));
        Tensor ce = ce_terms.empty() ? Tensor::scalar(0.0) : ce_terms.front();
        if (ce_terms.size() == 2) ce = ops::add(ce_terms[0], ce_terms[1]);
        const Tensor kld = t.use_kld ? kld_loss({ann.logits, snn.logits}) : Tensor::scalar(0.0);
        const Tensor norm = t.use_norm ? norm_loss(ann.features, snn.features) : Tensor::scalar(0.0);
        const Tensor total = total_loss(ce, kld, norm, t.lambdas);
        m.l_ce = ce.item();
        m.l_kld = kld.item();
        m.l_norm = norm.item();
        m.l_total = total.item();
        check_finite(m.l_ce, "cross-entropy");
        check_finite(m.l_kld, "KL divergence");
        check_finite(m.l_norm, "feature L2");
        check_finite(m.l_total, "total");
        tape.backward(total);
    }

    std::vector<double> sq(8, 0.0);
    std::vector<bool> present(8, false);
    for (const auto& p : params) {
        const auto g = static_cast<std::size_t>(p.group);
        present[g] = true;
        for (double v : p.tensor.grad()) {
            if (!std::isfinite(v)) throw NumericError("non-finite gradient in '" + p.name + "'; training aborted");
            sq[g] += v * v;
        }
    }
    for (std::size_t g = 0; g < sq.size(); ++g)
        if (present[g]) m.grad_norms.push_back({param_group_name(static_cast<ParamGroup>(g)), std::sqrt(sq[g])});

    adam_.step(params, lr);
    return m;
}

EvalResult Trainer::evaluate(const Dataset& ds, std::optional<std::size_t> time_steps, std::size_t batch_size) {
    if (ds.size() == 0) throw DataError("cannot evaluate on an empty dataset");
    const std::size_t exits = net_->exits();
    std::vector<double> ann_hits(exits, 0.0), snn_hits(exits, 0.0);
    const bool ann_on = cfg_.train.use_ann;
    const auto wa = net_->compose(Side::Ann);
    const auto ws = net_->compose(Side::Snn);
    auto count = [&](const std::vector<Tensor>& logits, const std::vector<int>& labels, std::vector<double>& hits) {
        for (std::size_t e = 0; e < logits.size(); ++e) {
            const auto v = logits[e].values();
            const std::size_t classes = logits[e].dim(1);
            for (std::size_t i = 0; i < labels.size(); ++i) {
                std::size_t arg = 0;
                for (std::size_t c = 1; c < classes; ++c)
                    if (v[i * classes + c] > v[i * classes + arg]) arg = c;
                if (static_cast<int>(arg) == labels[i]) hits[e] += 1.0;
            }
        }
    };
    for (const auto& idx : batches(ds.size(), batch_size, std::nullopt)) {
        const Batch b = gather(ds, idx);
        if (ann_on) count(net_->forward_ann(b.images, wa, false).logits, b.labels, ann_hits);
        ForwardOptions opts;
        opts.time_steps = time_steps;
        count(net_->forward_snn(b.images, ws, opts).logits, b.labels, snn_hits);
    }
    EvalResult r;
    r.samples = ds.size();
    const double n = static_cast<double>(ds.size());
    for (std::size_t e = 0; e < exits; ++e) {
        r.ann_branch_top1.push_back(ann_on ? 100.0 * ann_hits[e] / n : std::numeric_limits<double>::quiet_NaN());
        r.snn_branch_top1.push_back(100.0 * snn_hits[e] / n);
    }
    r.ann_top1 = r.ann_branch_top1.back();
    r.snn_top1 = r.snn_branch_top1.back();
    return r;
}

std::vector<StepMetrics> Trainer::train_steps(const Dataset& train, std::size_t max_steps) {
    if (epoch_ >= cfg_.train.epochs) return {};
    const auto order = batches(train.size(), cfg_.train.batch_size,
                               derive_seed(cfg_.train.seed, kSeedShuffle, epoch_));
    const double lr = cosine_lr(epoch_, cfg_.train.epochs, cfg_.train.lr);
    std::vector<StepMetrics> out;
    while (cursor_ < order.size() && out.size() < max_steps) {
        std::mt19937_64 flip(derive_seed(cfg_.train.seed, kSeedFlip, epoch_, cursor_));
        const Batch b = gather(train, order[cursor_], train.flip_augment ? &flip : nullptr);
        const auto m = train_step(b, lr);
        sums_[0] += m.l_ce;
        sums_[1] += m.l_kld;
        sums_[2] += m.l_norm;
        sums_[3] += m.l_total;
        sums_[4] += 1.0;
        ++cursor_;
        out.push_back(m);
    }
    return out;
}

EpochMetrics Trainer::run_epoch(const Dataset& train, const Dataset& test) {
    if (epoch_ >= cfg_.train.epochs) throw ConfigError("all configured epochs are already complete");
    const auto start = std::chrono::steady_clock::now();
    train_steps(train, std::numeric_limits<std::size_t>::max());
    EpochMetrics m;
    m.epoch = epoch_ + 1;
    m.lr = cosine_lr(epoch_, cfg_.train.epochs, cfg_.train.lr);
    const double steps = sums_[4] > 0 ? sums_[4] : 1.0;
    m.l_ce = sums_[0] / steps;
    m.l_kld = sums_[1] / steps;
    m.l_norm = sums_[2] / steps;
    m.l_total = sums_[3] / steps;
    m.eval = evaluate(test);
    m.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    ++epoch_;
    cursor_ = 0;
    for (double& s : sums_) s = 0.0;
    if (!best_ || m.eval.snn_top1 > best_->eval.snn_top1) best_ = m;
    return m;
}

FitSummary Trainer::fit(const Dataset& train, const Dataset& test,
                        const std::function<void(const EpochMetrics&)>& on_epoch) {
    FitSummary s;
    bool any = false;
    while (epoch_ < cfg_.train.epochs) {
        s.last = run_epoch(train, test);
        any = true;
        if (on_epoch) on_epoch(s.last);
    }
    if (!any) throw ConfigError("training already complete; nothing to fit");
    s.best = *best_;
    return s;
}

std::vector<Record> Trainer::checkpoint_records() {
    std::vector<Record> out;
    for (const auto& p : net_->parameters())
        out.push_back({p.name, p.tensor.shape(), {p.tensor.values().begin(), p.tensor.values().end()}});
    for (const auto& b : net_->buffers()) out.push_back({b.name, {b.values->size()}, *b.values});
    for (const auto& mo : adam_.moments()) {
        out.push_back({"adam.m." + mo.name, {mo.m.size()}, mo.m});
        out.push_back({"adam.v." + mo.name, {mo.v.size()}, mo.v});
    }
    out.push_back({"adam.step", {1}, {static_cast<double>(adam_.steps())}});
    out.push_back({"meta.epoch", {1}, {static_cast<double>(epoch_)}});
    out.push_back({"meta.batch", {1}, {static_cast<double>(cursor_)}});
    out.push_back({"meta.epoch_sums", {5}, {sums_, sums_ + 5}});
    out.push_back(text_record("meta.config", config_text(cfg_)));
    if (best_) out.push_back(text_record("meta.best", best_->json()));
    return out;
}

void Trainer::save(const std::filesystem::path& path) { write_checkpoint(path, checkpoint_records()); }

void Trainer::restore(const std::vector<Record>& records) {
    if (record_text(find_record(records, "meta.config")) != config_text(cfg_))
        throw SerializationError("checkpoint was written by a different configuration");
    auto load = [&](const std::string& name, std::span<double> dst) {
        const auto& r = find_record(records, name);
        if (r.values.size() != dst.size())
            throw SerializationError("record '" + name + "' holds " + std::to_string(r.values.size()) +
                                     " values, expected " + std::to_string(dst.size()));
        std::copy(r.values.begin(), r.values.end(), dst.begin());
    };
    auto params = net_->parameters();
    for (auto& p : params) {
        if (find_record(records, p.name).shape != p.tensor.shape())
            throw SerializationError("record '" + p.name + "' has shape " +
                                     shape_str(find_record(records, p.name).shape) + ", expected " +
                                     shape_str(p.tensor.shape()));
        load(p.name, p.tensor.mutable_values());
    }
    for (auto& b : net_->buffers()) load(b.name, *b.values);
    auto& moments = adam_.moments();
    moments.clear();
    for (const auto& r : records) {
        if (r.name.rfind("adam.m.", 0) != 0) continue;
        const std::string name = r.name.substr(7);
        moments.push_back({name, r.values, find_record(records, "adam.v." + name).values});
    }
    adam_.reindex();
    adam_.set_steps(static_cast<std::uint64_t>(find_record(records, "adam.step").values.at(0)));
    epoch_ = static_cast<std::size_t>(find_record(records, "meta.epoch").values.at(0));
    cursor_ = static_cast<std::size_t>(find_record(records, "meta.batch").values.at(0));
    const auto& sums = find_record(records, "meta.epoch_sums").values;
    if (sums.size() != 5) throw SerializationError("meta.epoch_sums must hold 5 values");
    std::copy(sums.begin(), sums.end(), sums_);
    best_.reset();
    for (const auto& r : records)
        if (r.name == "meta.best") best_ = metrics_from_json(record_text(r));
}

Trainer Trainer::resume(const std::filesystem::path& path) {
    const auto records = read_checkpoint(path);
    Trainer t(parse_config(record_text(find_record(records, "meta.config")), path.string() + ":meta.config"));
    t.restore(records);
    return t;
}

} // namespace jasnn
