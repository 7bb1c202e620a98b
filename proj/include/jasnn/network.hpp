// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "jasnn/factorized.hpp"
#include "jasnn/lif.hpp"
#include "jasnn/ops.hpp"
#include "jasnn/tensor.hpp"

namespace jasnn {

enum class Arch { MiniResnet, MiniVgg };
// wft: shared U/V with per-side sigma; full: one dense weight used by both
// sides; none: independent dense weights per side.
enum class ShareMode { Wft, Full, None };
enum class FeatureSource { Logits, Pooled };
// branch4: the stage-4 exit is the classifier head (4 exits).
// separate: an extra GAP+FC head after stage 4 (5 exits).
enum class HeadMode { Branch4, Separate };

struct StageSpec {
    std::size_t blocks = 1;
    std::size_t channels = 16;
    bool downsample = false;
};

struct NetworkConfig {
    Arch arch = Arch::MiniResnet;
    std::vector<StageSpec> stages = default_stages();
    std::size_t in_channels = 1;
    std::size_t image_h = 28;
    std::size_t image_w = 28;
    std::size_t classes = 10;
    int stem_stride = 1;
    std::size_t time_steps = 2;
    LifConfig lif{};
    ShareMode share = ShareMode::Wft;
    bool factorize_stem_and_heads = true;
    bool ann_norm = true;
    bool snn_norm = true;
    FeatureSource features = FeatureSource::Logits;
    HeadMode head = HeadMode::Branch4;

    static std::vector<StageSpec> default_stages();
    void validate() const;
};

enum class ParamGroup { SharedFactor, SigmaAnn, SigmaSnn, DenseShared, DenseAnn, DenseSnn, Norm, Bias };

struct NamedParam {
    std::string name;
    Tensor tensor;
    ParamGroup group;
    bool decay; // weight decay applies (weights and singular values only)
};

struct NamedBuffer {
    std::string name;
    std::vector<double>* values;
};

// Spike statistics of one LIF site, accumulated over all recorded samples.
struct SiteSpikes {
    std::string name;
    std::size_t channels = 0, h = 0, w = 0;
    std::vector<double> total;                 // [T] spikes at step t
    std::vector<std::vector<double>> position; // [T][h*w] spikes summed over batch and channels
    std::vector<double> active_channels;       // [T] (sample, channel) maps with >= 1 spike
};

struct SpikeStats {
    std::size_t time_steps = 0;
    std::size_t samples = 0;
    std::vector<SiteSpikes> sites;

    const SiteSpikes& site(const std::string& name) const;
    double total_spikes() const;
    void merge(const SpikeStats& other);
};

// Synaptic layer as seen by the energy model.
struct SynapticLayer {
    std::string name;
    bool conv = true;
    std::size_t c_in = 0, c_out = 0, k = 1;
    int stride = 1, padding = 0;
    std::size_t in_h = 1, in_w = 1, out_h = 1, out_w = 1;
    int input_site = -1;       // index into Topology::sites, -1 = analog image
    bool pooled_input = false; // fully-connected layer fed by global average pooling
};

struct NeuronSite {
    std::string name;
    std::size_t channels = 0, h = 1, w = 1;
    bool integrate_only = false; // branch outputs: integrate, never fire

    std::size_t size() const { return channels * h * w; }
};

struct Topology {
    std::vector<SynapticLayer> layers;
    std::vector<NeuronSite> sites;
};

struct ForwardOptions {
    bool training = false;
    std::optional<std::size_t> time_steps; // overrides NetworkConfig::time_steps
    bool record_stats = false;
    bool keep_spikes = false; // keep every LIF output (time-stacked) for inspection
    bool keep_traces = false; // keep membrane traces of every LIF site
};

struct SideOutputs {
    std::vector<Tensor> logits;   // one [batch x classes] tensor per exit
    std::vector<Tensor> features; // tensors compared by the feature L2 loss
};

struct SnnOutputs : SideOutputs {
    SpikeStats stats;
    std::vector<std::pair<std::string, Tensor>> spikes; // when keep_spikes
    std::vector<std::pair<std::string, LifTrace>> traces;
};

// Weights of one side composed for a forward pass, indexed like the network's weights.
struct ComposedWeights {
    Side side = Side::Ann;
    std::vector<Tensor> weights;
};

struct LayerParamInfo {
    std::string name;
    std::size_t c_in = 0, c_out = 0, entries = 1;
    ParamCount per_entry;       // full-SVD accounting per kernel entry
    std::size_t stored = 0;     // elements actually held (thin factors, both sigmas)
};

class JointNetwork {
public:
    JointNetwork(NetworkConfig cfg, std::uint64_t init_seed);

    const NetworkConfig& config() const { return cfg_; }
    std::size_t exits() const;

    ComposedWeights compose(Side side) const;

    SideOutputs forward_ann(const Tensor& images, const ComposedWeights& weights, bool training);
    SideOutputs forward_ann(const Tensor& images, bool training);
    SnnOutputs forward_snn(const Tensor& images, const ComposedWeights& weights, const ForwardOptions& opts);
    SnnOutputs forward_snn(const Tensor& images, const ForwardOptions& opts);

    std::vector<NamedParam> parameters() const;
    std::vector<NamedBuffer> buffers();
    std::vector<LayerParamInfo> factorization_report() const;
    Topology topology() const;
    std::string describe() const;

    // Direct access for tests and tools.
    struct Weight {
        std::string name;
        bool conv = true;
        std::size_t c_in = 0, c_out = 0, k = 1;
        ShareMode mode = ShareMode::Wft;
        std::vector<FactorizedWeight> grid; // wft: k*k entries (1 for linear)
        Tensor shared;                      // full
        Tensor ann, snn;                    // none

        Tensor compose(Side side) const;
    };

    const Weight& weight(const std::string& name) const;
    Weight& weight(const std::string& name);
    std::vector<std::string> weight_names() const;

private:
    struct Norm {
        std::string name;
        Tensor gamma[2], beta[2];
        ops::BatchNormState state[2];
    };
    struct ConvUnit {
        std::size_t weight = 0;
        int stride = 1, padding = 1;
        std::optional<std::size_t> norm;
    };
    struct Block {
        std::string name;
        std::vector<ConvUnit> main;
        std::optional<ConvUnit> shortcut;
        bool residual = true;
    };
    struct Exit {
        std::string name;
        std::size_t weight = 0;
        Tensor bias[2];
        std::size_t after_stage = 0;
    };
    struct Stage {
        std::vector<Block> blocks;
    };

    class Pass;

    std::size_t add_weight(const std::string& name, bool conv, std::size_t c_in, std::size_t c_out,
                           std::size_t k, bool factorize, std::mt19937_64& rng);
    std::size_t add_norm(const std::string& name, std::size_t channels);
    bool norm_on(Side side) const { return side == Side::Ann ? cfg_.ann_norm : cfg_.snn_norm; }

    NetworkConfig cfg_;
    std::vector<Weight> weights_;
    std::vector<Norm> norms_;
    ConvUnit stem_;
    std::vector<Stage> stages_;
    std::vector<Exit> exits_;
};

std::string arch_name(Arch arch);
std::string share_mode_name(ShareMode mode);

} // namespace jasnn
