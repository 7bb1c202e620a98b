// SPDX-License-Identifier: Apache-2.0
#include "jasnn/network.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "jasnn/errors.hpp"

namespace jasnn {

std::string arch_name(Arch arch) { return arch == Arch::MiniResnet ? "mini_resnet" : "mini_vgg"; }

std::string share_mode_name(ShareMode mode) {
    switch (mode) {
    case ShareMode::Wft: return "wft";
    case ShareMode::Full: return "full";
    case ShareMode::None: return "none";
    }
    return "?";
}

std::vector<StageSpec> NetworkConfig::default_stages() {
    return {{1, 16, false}, {1, 32, true}, {1, 64, true}, {1, 128, true}};
}

void NetworkConfig::validate() const {
    if (stages.empty()) throw ConfigError("network needs at least one stage");
    for (std::size_t i = 0; i < stages.size(); ++i) {
        if (stages[i].blocks == 0 || stages[i].channels == 0)
            throw ConfigError("stage " + std::to_string(i + 1) + " needs positive blocks and channels");
    }
    if (in_channels == 0 || image_h == 0 || image_w == 0) throw ConfigError("input shape must be positive");
    if (classes < 2) throw ConfigError("need at least two classes");
    if (stem_stride != 1 && stem_stride != 2) throw ConfigError("stem_stride must be 1 or 2");
    if (time_steps < 1) throw ConfigError("time_steps must be at least 1");
    lif.validate();
}

const SiteSpikes& SpikeStats::site(const std::string& name) const {
    for (const auto& s : sites)
        if (s.name == name) return s;
    throw ConfigError("no spike statistics recorded for site '" + name + "'");
}

double SpikeStats::total_spikes() const {
    double total = 0.0;
    for (const auto& s : sites)
        for (double v : s.total) total += v;
    return total;
}

void SpikeStats::merge(const SpikeStats& other) {
    if (sites.empty()) {
        *this = other;
        return;
    }
    if (other.time_steps != time_steps || other.sites.size() != sites.size())
        throw ConfigError("cannot merge spike statistics of different networks or time steps");
    samples += other.samples;
    for (std::size_t i = 0; i < sites.size(); ++i) {
        auto& a = sites[i];
        const auto& b = other.sites[i];
        for (std::size_t t = 0; t < time_steps; ++t) {
            a.total[t] += b.total[t];
            a.active_channels[t] += b.active_channels[t];
            for (std::size_t p = 0; p < a.position[t].size(); ++p) a.position[t][p] += b.position[t][p];
        }
    }
}

Tensor JointNetwork::Weight::compose(Side side) const {
    switch (mode) {
    case ShareMode::Wft: return conv ? compose_conv(grid, k, side) : jasnn::compose(grid.front(), side);
    case ShareMode::Full: return shared;
    case ShareMode::None: return side == Side::Ann ? ann : snn;
    }
    return {};
}

JointNetwork::JointNetwork(NetworkConfig cfg, std::uint64_t init_seed) : cfg_(std::move(cfg)) {
    cfg_.validate();
    std::mt19937_64 rng(init_seed);
    const bool edge_factorized = cfg_.factorize_stem_and_heads;
    const std::size_t stem_channels = cfg_.stages.front().channels;
    stem_.weight = add_weight("stem.conv", true, cfg_.in_channels, stem_channels, 3, edge_factorized, rng);
    stem_.stride = cfg_.stem_stride;
    stem_.padding = 1;
    stem_.norm = add_norm("stem.bn", stem_channels);

    std::size_t channels = stem_channels;
    for (std::size_t s = 0; s < cfg_.stages.size(); ++s) {
        const auto& spec = cfg_.stages[s];
        Stage stage;
        for (std::size_t b = 0; b < spec.blocks; ++b) {
            Block block;
            block.name = "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
            const int stride = (b == 0 && spec.downsample) ? 2 : 1;
            if (cfg_.arch == Arch::MiniResnet) {
                block.residual = true;
                ConvUnit c1{add_weight(block.name + ".conv1", true, channels, spec.channels, 3, true, rng), stride, 1,
                            add_norm(block.name + ".bn1", spec.channels)};
                ConvUnit c2{add_weight(block.name + ".conv2", true, spec.channels, spec.channels, 3, true, rng), 1, 1,
                            add_norm(block.name + ".bn2", spec.channels)};
                block.main = {c1, c2};
                if (stride != 1 || channels != spec.channels) {
                    block.shortcut = ConvUnit{
                        add_weight(block.name + ".proj", true, channels, spec.channels, 1, true, rng), stride, 0,
                        add_norm(block.name + ".proj_bn", spec.channels)};
                }
            } else {
                block.residual = false;
                block.main = {ConvUnit{add_weight(block.name + ".conv", true, channels, spec.channels, 3, true, rng),
                                       stride, 1, add_norm(block.name + ".bn", spec.channels)}};
            }
            channels = spec.channels;
            stage.blocks.push_back(std::move(block));
        }
        stages_.push_back(std::move(stage));

        Exit exit;
        exit.name = "branch" + std::to_string(s + 1) + ".fc";
        exit.after_stage = s;
        exits_.push_back(std::move(exit));
    }
    if (cfg_.head == HeadMode::Separate) {
        Exit head;
        head.name = "head.fc";
        head.after_stage = cfg_.stages.size() - 1;
        exits_.push_back(std::move(head));
    }
    for (auto& exit : exits_) {
        const std::size_t c_in = cfg_.stages[exit.after_stage].channels;
        exit.weight = add_weight(exit.name, false, c_in, cfg_.classes, 1, edge_factorized, rng);
        for (int side = 0; side < 2; ++side) exit.bias[side] = Tensor::parameter({cfg_.classes}, std::vector<double>(cfg_.classes, 0.0));
    }
}

std::size_t JointNetwork::exits() const { return exits_.size(); }

std::size_t JointNetwork::add_weight(const std::string& name, bool conv, std::size_t c_in, std::size_t c_out,
                                     std::size_t k, bool factorize, std::mt19937_64& rng) {
    Weight w;
    w.name = name;
    w.conv = conv;
    w.c_in = c_in;
    w.c_out = c_out;
    w.k = k;
    w.mode = factorize ? cfg_.share : ShareMode::None;

    // Kaiming-uniform (ReLU gain) over the fan-in.
    const double bound = std::sqrt(6.0 / static_cast<double>(c_in * k * k));
    std::uniform_real_distribution<double> dist(-bound, bound);
    const Shape shape = conv ? Shape{c_out, c_in, k, k} : Shape{c_in, c_out};
    std::vector<double> dense(shape_numel(shape));
    for (auto& v : dense) v = dist(rng);

    switch (w.mode) {
    case ShareMode::Wft:
        if (conv) {
            const std::size_t kk = k * k;
            for (std::size_t e = 0; e < kk; ++e) {
                std::vector<double> entry(c_in * c_out);
                for (std::size_t c = 0; c < c_in; ++c)
                    for (std::size_t o = 0; o < c_out; ++o) entry[c * c_out + o] = dense[(o * c_in + c) * kk + e];
                auto fw = init_factorized(Tensor::from({c_in, c_out}, std::move(entry)));
                fw.kernel_index = std::make_pair(e / k, e % k);
                w.grid.push_back(std::move(fw));
            }
        } else {
            w.grid.push_back(init_factorized(Tensor::from(shape, dense)));
        }
        break;
    case ShareMode::Full: w.shared = Tensor::parameter(shape, dense); break;
    case ShareMode::None:
        w.ann = Tensor::parameter(shape, dense);
        w.snn = Tensor::parameter(shape, dense);
        break;
    }
    weights_.push_back(std::move(w));
    return weights_.size() - 1;
}

std::size_t JointNetwork::add_norm(const std::string& name, std::size_t channels) {
    Norm n;
    n.name = name;
    for (int side = 0; side < 2; ++side) {
        n.gamma[side] = Tensor::parameter({channels}, std::vector<double>(channels, 1.0));
        n.beta[side] = Tensor::parameter({channels}, std::vector<double>(channels, 0.0));
        n.state[side] = ops::BatchNormState::fresh(channels);
    }
    norms_.push_back(std::move(n));
    return norms_.size() - 1;
}

ComposedWeights JointNetwork::compose(Side side) const {
    ComposedWeights out;
    out.side = side;
    out.weights.reserve(weights_.size());
    for (const auto& w : weights_) out.weights.push_back(w.compose(side));
    return out;
}

// One forward pass of one side. The SNN side runs all T steps as a
// time-stacked batch [T*batch, ...]: convolutions and normalization are
// stateless per step, and LIF layers carry the membrane across the blocks.
class JointNetwork::Pass {
public:
    Pass(JointNetwork& net, const ComposedWeights& weights, bool training, std::size_t steps,
         const ForwardOptions* opts, SnnOutputs* snn)
        : net_(net), weights_(weights), side_(weights.side), training_(training), steps_(steps), opts_(opts),
          snn_(snn) {}

    SideOutputs run(const Tensor& images) {
        const auto& cfg = net_.cfg_;
        if (images.rank() != 4 || images.dim(1) != cfg.in_channels || images.dim(2) != cfg.image_h ||
            images.dim(3) != cfg.image_w)
            throw DimensionError("network expects images [batch, " + std::to_string(cfg.in_channels) + ", " +
                                 std::to_string(cfg.image_h) + ", " + std::to_string(cfg.image_w) + "], got " +
                                 shape_str(images.shape()));
        batch_ = images.dim(0);
        if (snn_) {
            snn_->stats.time_steps = steps_;
            snn_->stats.samples = batch_;
        }
        Tensor x = side_ == Side::Snn ? ops::repeat0(images, steps_) : images;
        x = activate(conv(net_.stem_, x), "stem.act");

        SideOutputs out;
        for (std::size_t s = 0; s < net_.stages_.size(); ++s) {
            for (const auto& block : net_.stages_[s].blocks) x = run_block(block, x);
            for (const auto& exit : net_.exits_)
                if (exit.after_stage == s) emit(exit, x, out);
        }
        return out;
    }

private:
    Tensor conv(const ConvUnit& unit, const Tensor& x) {
        Tensor y = ops::conv2d(x, weights_.weights[unit.weight], unit.stride, unit.padding);
        if (unit.norm && net_.norm_on(side_)) {
            auto& n = net_.norms_[*unit.norm];
            const int s = side_ == Side::Ann ? 0 : 1;
            y = ops::batch_norm(y, n.gamma[s], n.beta[s], n.state[s], training_);
        }
        return y;
    }

    Tensor run_block(const Block& block, const Tensor& x) {
        if (!block.residual) return activate(conv(block.main.front(), x), block.name + ".act");
        Tensor h = x;
        for (std::size_t i = 0; i < block.main.size(); ++i) {
            h = conv(block.main[i], h);
            if (i + 1 < block.main.size()) h = activate(h, block.name + ".act" + std::to_string(i + 1));
        }
        const Tensor skip = block.shortcut ? conv(*block.shortcut, x) : x;
        return activate(ops::add(h, skip), block.name + ".out");
    }

    Tensor activate(const Tensor& x, const std::string& site) {
        if (side_ == Side::Ann) return ops::relu(x);
        LifTrace trace;
        const bool keep_trace = opts_ && opts_->keep_traces;
        Tensor spikes = lif_sequence_stacked(x, steps_, net_.cfg_.lif, keep_trace ? &trace : nullptr);
        if (opts_ && opts_->record_stats) record(site, spikes);
        if (opts_ && opts_->keep_spikes) snn_->spikes.emplace_back(site, spikes);
        if (keep_trace) snn_->traces.emplace_back(site, std::move(trace));
        return spikes;
    }

    void record(const std::string& site, const Tensor& spikes) {
        SiteSpikes st;
        st.name = site;
        st.channels = spikes.dim(1);
        st.h = spikes.dim(2);
        st.w = spikes.dim(3);
        const std::size_t plane = st.h * st.w;
        st.total.assign(steps_, 0.0);
        st.active_channels.assign(steps_, 0.0);
        st.position.assign(steps_, std::vector<double>(plane, 0.0));
        const auto v = spikes.values();
        for (std::size_t t = 0; t < steps_; ++t)
            for (std::size_t b = 0; b < batch_; ++b)
                for (std::size_t c = 0; c < st.channels; ++c) {
                    const double* map = v.data() + (((t * batch_ + b) * st.channels) + c) * plane;
                    bool any = false;
                    for (std::size_t p = 0; p < plane; ++p) {
                        if (map[p] != 0.0) {
                            any = true;
                            st.position[t][p] += map[p];
                            st.total[t] += map[p];
                        }
                    }
                    if (any) st.active_channels[t] += 1.0;
                }
        snn_->stats.sites.push_back(std::move(st));
    }

    void emit(const Exit& exit, const Tensor& x, SideOutputs& out) {
        const int s = side_ == Side::Ann ? 0 : 1;
        Tensor pooled = ops::global_avg_pool(x);
        Tensor logits = ops::add_row_bias(ops::matmul(pooled, weights_.weights[exit.weight]), exit.bias[s]);
        if (side_ == Side::Snn) {
            // Integrate-only output neuron: average of the per-step currents.
            logits = ops::block_mean0(logits, steps_);
            pooled = ops::block_mean0(pooled, steps_);
        }
        out.features.push_back(net_.cfg_.features == FeatureSource::Logits ? logits : pooled);
        out.logits.push_back(std::move(logits));
    }

    JointNetwork& net_;
    const ComposedWeights& weights_;
    Side side_;
    bool training_;
    std::size_t steps_;
    const ForwardOptions* opts_;
    SnnOutputs* snn_;
    std::size_t batch_ = 0;
};

SideOutputs JointNetwork::forward_ann(const Tensor& images, const ComposedWeights& weights, bool training) {
    if (weights.side != Side::Ann) throw ConfigError("forward_ann given weights composed for the SNN side");
    return Pass(*this, weights, training, 1, nullptr, nullptr).run(images);
}

SideOutputs JointNetwork::forward_ann(const Tensor& images, bool training) {
    return forward_ann(images, compose(Side::Ann), training);
}

SnnOutputs JointNetwork::forward_snn(const Tensor& images, const ComposedWeights& weights,
                                     const ForwardOptions& opts) {
    if (weights.side != Side::Snn) throw ConfigError("forward_snn given weights composed for the ANN side");
    const std::size_t steps = opts.time_steps.value_or(cfg_.time_steps);
    if (steps < 1) throw ConfigError("time_steps must be at least 1");
    SnnOutputs out;
    SideOutputs side = Pass(*this, weights, opts.training, steps, &opts, &out).run(images);
    out.logits = std::move(side.logits);
    out.features = std::move(side.features);
    return out;
}

SnnOutputs JointNetwork::forward_snn(const Tensor& images, const ForwardOptions& opts) {
    return forward_snn(images, compose(Side::Snn), opts);
}

std::vector<NamedParam> JointNetwork::parameters() const {
    std::vector<NamedParam> out;
    for (const auto& w : weights_) {
        switch (w.mode) {
        case ShareMode::Wft:
            for (const auto& fw : w.grid) {
                std::string suffix;
                if (w.conv && fw.kernel_index)
                    suffix = ".k" + std::to_string(fw.kernel_index->first) + "_" + std::to_string(fw.kernel_index->second);
                out.push_back({w.name + ".u" + suffix, fw.u_factor, ParamGroup::SharedFactor, true});
                out.push_back({w.name + ".v" + suffix, fw.v_factor, ParamGroup::SharedFactor, true});
                out.push_back({w.name + ".sigma_ann" + suffix, fw.sigma_ann, ParamGroup::SigmaAnn, true});
                out.push_back({w.name + ".sigma_snn" + suffix, fw.sigma_snn, ParamGroup::SigmaSnn, true});
            }
            break;
        case ShareMode::Full: out.push_back({w.name + ".weight", w.shared, ParamGroup::DenseShared, true}); break;
        case ShareMode::None:
            out.push_back({w.name + ".weight_ann", w.ann, ParamGroup::DenseAnn, true});
            out.push_back({w.name + ".weight_snn", w.snn, ParamGroup::DenseSnn, true});
            break;
        }
    }
    for (const auto& n : norms_) {
        for (int s = 0; s < 2; ++s) {
            const std::string side = s == 0 ? "ann" : "snn";
            out.push_back({n.name + ".gamma_" + side, n.gamma[s], ParamGroup::Norm, false});
            out.push_back({n.name + ".beta_" + side, n.beta[s], ParamGroup::Norm, false});
        }
    }
    for (const auto& e : exits_) {
        out.push_back({e.name + ".bias_ann", e.bias[0], ParamGroup::Bias, false});
        out.push_back({e.name + ".bias_snn", e.bias[1], ParamGroup::Bias, false});
    }
    return out;
}

std::vector<NamedBuffer> JointNetwork::buffers() {
    std::vector<NamedBuffer> out;
    for (auto& n : norms_) {
        for (int s = 0; s < 2; ++s) {
            const std::string side = s == 0 ? "ann" : "snn";
            out.push_back({n.name + ".running_mean_" + side, &n.state[s].running_mean});
            out.push_back({n.name + ".running_var_" + side, &n.state[s].running_var});
        }
    }
    return out;
}

std::vector<LayerParamInfo> JointNetwork::factorization_report() const {
    std::vector<LayerParamInfo> out;
    for (const auto& w : weights_) {
        if (w.mode != ShareMode::Wft) continue;
        LayerParamInfo info;
        info.name = w.name;
        info.c_in = w.c_in;
        info.c_out = w.c_out;
        info.entries = w.grid.size();
        info.per_entry = param_count(w.c_in, w.c_out);
        for (const auto& fw : w.grid)
            info.stored += fw.u_factor.numel() + fw.v_factor.numel() + fw.sigma_ann.numel() + fw.sigma_snn.numel();
        out.push_back(info);
    }
    return out;
}

Topology JointNetwork::topology() const {
    Topology topo;
    std::size_t h = cfg_.image_h, w = cfg_.image_w;
    int source = -1;
    auto add_conv = [&](const ConvUnit& unit, std::size_t in_h, std::size_t in_w, int input) {
        const auto& wt = weights_[unit.weight];
        SynapticLayer l;
        l.name = wt.name;
        l.conv = true;
        l.c_in = wt.c_in;
        l.c_out = wt.c_out;
        l.k = wt.k;
        l.stride = unit.stride;
        l.padding = unit.padding;
        l.in_h = in_h;
        l.in_w = in_w;
        l.out_h = ops::conv_output_extent(in_h, wt.k, unit.stride, unit.padding);
        l.out_w = ops::conv_output_extent(in_w, wt.k, unit.stride, unit.padding);
        l.input_site = input;
        topo.layers.push_back(l);
        return l;
    };
    auto add_site = [&](const std::string& name, std::size_t channels, std::size_t sh, std::size_t sw, bool integrate) {
        topo.sites.push_back({name, channels, sh, sw, integrate});
        return static_cast<int>(topo.sites.size() - 1);
    };

    auto stem = add_conv(stem_, h, w, -1);
    h = stem.out_h;
    w = stem.out_w;
    source = add_site("stem.act", stem.c_out, h, w, false);
    for (std::size_t s = 0; s < stages_.size(); ++s) {
        for (const auto& block : stages_[s].blocks) {
            if (!block.residual) {
                auto l = add_conv(block.main.front(), h, w, source);
                h = l.out_h;
                w = l.out_w;
                source = add_site(block.name + ".act", l.c_out, h, w, false);
                continue;
            }
            const int block_in = source;
            const std::size_t in_h = h, in_w = w;
            int cur = source;
            std::size_t ch = h, cw = w, channels = 0;
            for (std::size_t i = 0; i < block.main.size(); ++i) {
                auto l = add_conv(block.main[i], ch, cw, cur);
                ch = l.out_h;
                cw = l.out_w;
                channels = l.c_out;
                if (i + 1 < block.main.size())
                    cur = add_site(block.name + ".act" + std::to_string(i + 1), l.c_out, ch, cw, false);
            }
            if (block.shortcut) add_conv(*block.shortcut, in_h, in_w, block_in);
            h = ch;
            w = cw;
            source = add_site(block.name + ".out", channels, h, w, false);
        }
        for (const auto& e : exits_) {
            if (e.after_stage != s) continue;
            const auto& wt = weights_[e.weight];
            SynapticLayer l;
            l.name = wt.name;
            l.conv = false;
            l.c_in = wt.c_in;
            l.c_out = wt.c_out;
            l.in_h = h;
            l.in_w = w;
            l.input_site = source;
            l.pooled_input = true;
            topo.layers.push_back(l);
            add_site(e.name, wt.c_out, 1, 1, true);
        }
    }
    return topo;
}

std::string JointNetwork::describe() const {
    std::ostringstream os;
    const auto topo = topology();
    os << "arch " << arch_name(cfg_.arch) << " share " << share_mode_name(cfg_.share) << " T " << cfg_.time_steps
       << " input " << cfg_.in_channels << "x" << cfg_.image_h << "x" << cfg_.image_w << "\n";
    for (const auto& l : topo.layers) {
        if (l.conv)
            os << "conv " << l.name << " " << l.c_in << "->" << l.c_out << " k" << l.k << " s" << l.stride << " out "
               << l.out_h << "x" << l.out_w << "\n";
        else
            os << "exit " << l.name << " gap+fc " << l.c_in << "->" << l.c_out << "\n";
    }
    return os.str();
}

const JointNetwork::Weight& JointNetwork::weight(const std::string& name) const {
    for (const auto& w : weights_)
        if (w.name == name) return w;
    throw ConfigError("no weight named '" + name + "'");
}

JointNetwork::Weight& JointNetwork::weight(const std::string& name) {
    return const_cast<Weight&>(static_cast<const JointNetwork*>(this)->weight(name));
}

std::vector<std::string> JointNetwork::weight_names() const {
    std::vector<std::string> out;
    for (const auto& w : weights_) out.push_back(w.name);
    return out;
}

} // namespace jasnn
