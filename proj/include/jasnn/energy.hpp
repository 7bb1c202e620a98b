// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "jasnn/network.hpp"

namespace jasnn {

// 45nm CMOS figures: one MAC, one accumulate, one 64-bit cache move.
inline constexpr double kMacPicojoules = 4.6;
inline constexpr double kAccPicojoules = 0.9;
inline constexpr double kMoveMinPicojoules = 10.0;
inline constexpr double kMoveMaxPicojoules = 100.0;
inline constexpr double kPicojoule = 1e-12;

struct EnergyConstants {
    double mac_pj = kMacPicojoules;
    double acc_pj = kAccPicojoules;
    double move_min_pj = kMoveMinPicojoules;
    double move_max_pj = kMoveMaxPicojoules;
    std::size_t value_bits = 32; // activation / membrane potential
    std::size_t spike_bits = 1;
    std::size_t move_bits = 64; // unit of the move cost
    std::size_t reference_samples = 256;

    void validate() const;
};

struct LayerEnergy {
    std::string name;
    bool first = false;            // consumes the analog image
    double ann_macs = 0.0;
    double synapses = 0.0;         // synaptic events for an all-ones input at one step
    double snn_adds = 0.0;         // summed over T
    double snn_mults = 0.0;        // summed over T (first layer only)
    double ann_energy_j = 0.0;
    double snn_energy_j = 0.0;
};

struct Movement {
    double volume_bits = 0.0;
    double e_min_j = 0.0;
    double e_max_j = 0.0;
};

// Per-sample figures; spike-dependent counts are averaged over the recorded samples.
struct EnergyReport {
    std::size_t time_steps = 0;
    std::size_t samples = 0;
    EnergyConstants constants;
    std::vector<LayerEnergy> layers;
    double ann_macs = 0.0;
    double snn_adds = 0.0;
    double snn_mults = 0.0;
    double compute_energy_ann_j = 0.0;
    double compute_energy_snn_j = 0.0;
    Movement movement_ann;
    Movement movement_snn;
    double spikes_per_sample = 0.0;
};

// c_out * c_in * k^2 * h_out * w_out per conv, c_in * c_out per fully-connected layer.
std::vector<double> count_ann_ops(const Topology& topo);
// Exact number of (input neuron, output neuron) connections, padding taps excluded.
std::vector<double> count_synapses(const Topology& topo);

struct SnnOps {
    std::vector<double> adds;  // per layer, summed over T, per sample
    std::vector<double> mults; // per layer, summed over T, per sample
};

// Non-first layers: each incoming spike at step t costs one accumulate per
// outgoing synapse. Layers fed by global average pooling cost c_out accumulates
// per (sample, channel) map carrying at least one spike. The first layer costs
// its dense MACs at every step.
SnnOps count_snn_ops(const Topology& topo, const SpikeStats& stats);

double compute_energy_ann(double macs, const EnergyConstants& k = {});
double compute_energy_snn(double adds, double mults, const EnergyConstants& k = {});

Movement movement_from_volume(double volume_bits, const EnergyConstants& k = {});
// ANN: every activation is written once and read once.
Movement movement_energy_ann(const Topology& topo, const EnergyConstants& k = {});
// SNN: the same traffic for membrane potentials at every step, plus the
// binary spike maps of firing sites at every step.
Movement movement_energy_snn(const Topology& topo, std::size_t time_steps, const EnergyConstants& k = {});

EnergyReport build_energy_report(const Topology& topo, const SpikeStats& stats, const EnergyConstants& k = {});

enum class ReportFormat { Json, Table };

std::string emit_report(const EnergyReport& report, ReportFormat format);
EnergyReport parse_report_json(const std::string& text);

} // namespace jasnn
