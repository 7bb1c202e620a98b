// SPDX-License-Identifier: Apache-2.0
#include "jasnn/energy.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "jasnn/errors.hpp"

namespace jasnn {

void EnergyConstants::validate() const {
    for (double v : {mac_pj, acc_pj, move_min_pj, move_max_pj})
        if (!std::isfinite(v) || v < 0.0) throw ConfigError("energy constants must be finite and non-negative");
    if (value_bits == 0 || spike_bits == 0 || move_bits == 0) throw ConfigError("energy bit widths must be positive");
    if (reference_samples == 0) throw ConfigError("energy_ref_samples must be positive");
}

namespace {

// Number of output positions along one axis that read input index i.
std::size_t reach(std::size_t i, std::size_t k, int stride, int padding, std::size_t out) {
    std::size_t n = 0;
    for (std::size_t o = 0; o < out; ++o) {
        const long long tap = static_cast<long long>(i) + padding - static_cast<long long>(o) * stride;
        if (tap >= 0 && tap < static_cast<long long>(k)) ++n;
    }
    return n;
}

// fan[p]: synapses leaving one input neuron at spatial position p, per output channel.
std::vector<double> fan_out(const SynapticLayer& l) {
    std::vector<double> fan(l.in_h * l.in_w);
    for (std::size_t y = 0; y < l.in_h; ++y) {
        const auto ry = reach(y, l.k, l.stride, l.padding, l.out_h);
        for (std::size_t x = 0; x < l.in_w; ++x)
            fan[y * l.in_w + x] = static_cast<double>(ry * reach(x, l.k, l.stride, l.padding, l.out_w));
    }
    return fan;
}

} // namespace

std::vector<double> count_ann_ops(const Topology& topo) {
    std::vector<double> out;
    for (const auto& l : topo.layers) {
        const double dense = static_cast<double>(l.c_in * l.c_out);
        out.push_back(l.conv ? dense * static_cast<double>(l.k * l.k * l.out_h * l.out_w) : dense);
    }
    return out;
}

std::vector<double> count_synapses(const Topology& topo) {
    std::vector<double> out;
    for (const auto& l : topo.layers) {
        if (!l.conv) {
            out.push_back(static_cast<double>(l.c_in * l.c_out));
            continue;
        }
        double total = 0.0;
        for (double f : fan_out(l)) total += f;
        out.push_back(total * static_cast<double>(l.c_in * l.c_out));
    }
    return out;
}

SnnOps count_snn_ops(const Topology& topo, const SpikeStats& stats) {
    if (stats.sites.empty() || stats.samples == 0 || stats.time_steps == 0)
        throw ConfigError("count_snn_ops needs spike statistics recorded by forward_snn");
    const auto macs = count_ann_ops(topo);
    const double samples = static_cast<double>(stats.samples);
    SnnOps ops;
    for (std::size_t i = 0; i < topo.layers.size(); ++i) {
        const auto& l = topo.layers[i];
        double adds = 0.0, mults = 0.0;
        if (l.input_site < 0) {
            mults = macs[i] * static_cast<double>(stats.time_steps);
        } else {
            const auto& site = stats.site(topo.sites.at(static_cast<std::size_t>(l.input_site)).name);
            if (l.pooled_input) {
                for (double a : site.active_channels) adds += a * static_cast<double>(l.c_out);
            } else {
                if (site.h != l.in_h || site.w != l.in_w)
                    throw ConfigError("spike statistics of '" + site.name + "' do not match layer " + l.name);
                const auto fan = fan_out(l);
                for (std::size_t t = 0; t < stats.time_steps; ++t)
                    for (std::size_t p = 0; p < fan.size(); ++p) adds += site.position[t][p] * fan[p];
                adds *= static_cast<double>(l.c_out);
            }
            adds /= samples;
        }
        ops.adds.push_back(adds);
        ops.mults.push_back(mults);
    }
    return ops;
}

double compute_energy_ann(double macs, const EnergyConstants& k) { return macs * k.mac_pj * kPicojoule; }

double compute_energy_snn(double adds, double mults, const EnergyConstants& k) {
    return (adds * k.acc_pj + mults * k.mac_pj) * kPicojoule;
}

Movement movement_from_volume(double volume_bits, const EnergyConstants& k) {
    Movement m;
    m.volume_bits = volume_bits;
    const double moves = volume_bits / static_cast<double>(k.move_bits);
    m.e_min_j = moves * k.move_min_pj * kPicojoule;
    // Scaled from e_min so that the max/min ratio of the constants holds exactly.
    m.e_max_j = k.move_min_pj > 0.0 ? m.e_min_j * (k.move_max_pj / k.move_min_pj) : moves * k.move_max_pj * kPicojoule;
    return m;
}

Movement movement_energy_ann(const Topology& topo, const EnergyConstants& k) {
    double bits = 0.0;
    for (const auto& s : topo.sites) bits += 2.0 * static_cast<double>(s.size() * k.value_bits);
    return movement_from_volume(bits, k);
}

Movement movement_energy_snn(const Topology& topo, std::size_t time_steps, const EnergyConstants& k) {
    const double t = static_cast<double>(time_steps);
    double bits = 0.0;
    for (const auto& s : topo.sites) {
        const double size = static_cast<double>(s.size());
        bits += 2.0 * size * t * static_cast<double>(k.value_bits);
        if (!s.integrate_only) bits += size * t * static_cast<double>(k.spike_bits);
    }
    return movement_from_volume(bits, k);
}

EnergyReport build_energy_report(const Topology& topo, const SpikeStats& stats, const EnergyConstants& k) {
    k.validate();
    const auto macs = count_ann_ops(topo);
    const auto syn = count_synapses(topo);
    const auto snn = count_snn_ops(topo, stats);
    EnergyReport r;
    r.time_steps = stats.time_steps;
    r.samples = stats.samples;
    r.constants = k;
    for (std::size_t i = 0; i < topo.layers.size(); ++i) {
        LayerEnergy le;
        le.name = topo.layers[i].name;
        le.first = topo.layers[i].input_site < 0;
        le.ann_macs = macs[i];
        le.synapses = syn[i];
        le.snn_adds = snn.adds[i];
        le.snn_mults = snn.mults[i];
        le.ann_energy_j = compute_energy_ann(le.ann_macs, k);
        le.snn_energy_j = compute_energy_snn(le.snn_adds, le.snn_mults, k);
        r.ann_macs += le.ann_macs;
        r.snn_adds += le.snn_adds;
        r.snn_mults += le.snn_mults;
        r.layers.push_back(le);
    }
    r.compute_energy_ann_j = compute_energy_ann(r.ann_macs, k);
    r.compute_energy_snn_j = compute_energy_snn(r.snn_adds, r.snn_mults, k);
    r.movement_ann = movement_energy_ann(topo, k);
    r.movement_snn = movement_energy_snn(topo, stats.time_steps, k);
    r.spikes_per_sample = stats.total_spikes() / static_cast<double>(stats.samples);
    return r;
}

namespace {

nlohmann::ordered_json movement_json(const Movement& m) {
    return {{"volume_bits", m.volume_bits}, {"e_min_j", m.e_min_j}, {"e_max_j", m.e_max_j}};
}

Movement movement_from(const nlohmann::json& j) {
    return {j.at("volume_bits").get<double>(), j.at("e_min_j").get<double>(), j.at("e_max_j").get<double>()};
}

std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

std::string table(const EnergyReport& r) {
    std::ostringstream os;
    os << "energy per sample, T=" << r.time_steps << ", spike statistics over " << r.samples << " samples\n";
    os << std::left << std::setw(28) << "layer" << std::right << std::setw(14) << "ANN #Mult" << std::setw(14)
       << "SNN #Add" << std::setw(14) << "SNN #Mult" << std::setw(14) << "ANN uJ" << std::setw(14) << "SNN uJ"
       << "\n";
    auto row = [&](const std::string& name, double macs, double adds, double mults, double ea, double es) {
        os << std::left << std::setw(28) << name << std::right << std::setw(14) << fixed(macs, 0) << std::setw(14)
           << fixed(adds, 1) << std::setw(14) << fixed(mults, 0) << std::setw(14) << fixed(ea * 1e6, 4)
           << std::setw(14) << fixed(es * 1e6, 4) << "\n";
    };
    for (const auto& l : r.layers) row(l.name, l.ann_macs, l.snn_adds, l.snn_mults, l.ann_energy_j, l.snn_energy_j);
    row("total", r.ann_macs, r.snn_adds, r.snn_mults, r.compute_energy_ann_j, r.compute_energy_snn_j);
    os << "data movement      volume(bits)      min uJ      max uJ\n";
    for (const auto& [name, m] : {std::pair{"ANN", r.movement_ann}, std::pair{"SNN", r.movement_snn}})
        os << std::left << std::setw(8) << name << std::right << std::setw(22) << fixed(m.volume_bits, 0)
           << std::setw(12) << fixed(m.e_min_j * 1e6, 4) << std::setw(12) << fixed(m.e_max_j * 1e6, 4) << "\n";
    os << "spikes per sample " << fixed(r.spikes_per_sample, 1) << "\n";
    return os.str();
}

} // namespace

std::string emit_report(const EnergyReport& r, ReportFormat format) {
    if (format == ReportFormat::Table) return table(r);
    nlohmann::ordered_json j;
    j["time_steps"] = r.time_steps;
    j["samples"] = r.samples;
    j["constants"] = {{"mac_pj", r.constants.mac_pj},
                      {"acc_pj", r.constants.acc_pj},
                      {"move_min_pj", r.constants.move_min_pj},
                      {"move_max_pj", r.constants.move_max_pj},
                      {"value_bits", r.constants.value_bits},
                      {"spike_bits", r.constants.spike_bits},
                      {"move_bits", r.constants.move_bits},
                      {"reference_samples", r.constants.reference_samples}};
    auto layers = nlohmann::ordered_json::array();
    for (const auto& l : r.layers)
        layers.push_back({{"name", l.name},
                          {"first", l.first},
                          {"ann_macs", l.ann_macs},
                          {"synapses", l.synapses},
                          {"snn_adds", l.snn_adds},
                          {"snn_mults", l.snn_mults},
                          {"ann_energy_j", l.ann_energy_j},
                          {"snn_energy_j", l.snn_energy_j}});
    j["layers"] = layers;
    j["ann_macs"] = r.ann_macs;
    j["snn_adds"] = r.snn_adds;
    j["snn_mults"] = r.snn_mults;
    j["compute_energy_ann_j"] = r.compute_energy_ann_j;
    j["compute_energy_snn_j"] = r.compute_energy_snn_j;
    j["movement_ann"] = movement_json(r.movement_ann);
    j["movement_snn"] = movement_json(r.movement_snn);
    j["spikes_per_sample"] = r.spikes_per_sample;
    return j.dump(2) + "\n";
}

EnergyReport parse_report_json(const std::string& text) {
    EnergyReport r;
    try {
        const auto j = nlohmann::json::parse(text);
        r.time_steps = j.at("time_steps").get<std::size_t>();
        r.samples = j.at("samples").get<std::size_t>();
        const auto& c = j.at("constants");
        r.constants.mac_pj = c.at("mac_pj").get<double>();
        r.constants.acc_pj = c.at("acc_pj").get<double>();
        r.constants.move_min_pj = c.at("move_min_pj").get<double>();
        r.constants.move_max_pj = c.at("move_max_pj").get<double>();
        r.constants.value_bits = c.at("value_bits").get<std::size_t>();
        r.constants.spike_bits = c.at("spike_bits").get<std::size_t>();
        r.constants.move_bits = c.at("move_bits").get<std::size_t>();
        r.constants.reference_samples = c.at("reference_samples").get<std::size_t>();
        for (const auto& l : j.at("layers")) {
            LayerEnergy le;
            le.name = l.at("name").get<std::string>();
            le.first = l.at("first").get<bool>();
            le.ann_macs = l.at("ann_macs").get<double>();
            le.synapses = l.at("synapses").get<double>();
            le.snn_adds = l.at("snn_adds").get<double>();
            le.snn_mults = l.at("snn_mults").get<double>();
            le.ann_energy_j = l.at("ann_energy_j").get<double>();
            le.snn_energy_j = l.at("snn_energy_j").get<double>();
            r.layers.push_back(le);
        }
        r.ann_macs = j.at("ann_macs").get<double>();
        r.snn_adds = j.at("snn_adds").get<double>();
        r.snn_mults = j.at("snn_mults").get<double>();
        r.compute_energy_ann_j = j.at("compute_energy_ann_j").get<double>();
        r.compute_energy_snn_j = j.at("compute_energy_snn_j").get<double>();
        r.movement_ann = movement_from(j.at("movement_ann"));
        r.movement_snn = movement_from(j.at("movement_snn"));
        r.spikes_per_sample = j.at("spikes_per_sample").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("energy report: ") + e.what());
    }
    return r;
}

} // namespace jasnn
