// SPDX-License-Identifier: Apache-2.0
#include "jasnn/optimizer.hpp"

#include <cmath>
#include <numbers>

#include "jasnn/errors.hpp"

namespace jasnn {

void adam_update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
                 std::uint64_t t, double lr, const AdamConfig& cfg, bool decay) {
    if (g.size() != p.size() || m.size() != p.size() || v.size() != p.size())
        throw DimensionError("adam: parameter, gradient and moment sizes disagree");
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double gi = decay ? g[i] + cfg.weight_decay * p[i] : g[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
        p[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
}

void Adam::reindex() {
    index_.clear();
    for (std::size_t i = 0; i < moments_.size(); ++i) index_[moments_[i].name] = i;
}

Adam::Moments& Adam::slot(const std::string& name, std::size_t n) {
    if (const auto it = index_.find(name); it != index_.end()) {
        auto& s = moments_[it->second];
        if (s.m.size() != n || s.v.size() != n)
            throw DimensionError("adam: moments of '" + name + "' have the wrong size");
        return s;
    }
    index_[name] = moments_.size();
    moments_.push_back({name, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
    return moments_.back();
}

void Adam::step(std::vector<NamedParam>& params, double lr) {
    ++t_;
    for (auto& np : params) {
        auto values = np.tensor.mutable_values();
        std::vector<double> p(values.begin(), values.end());
        const std::vector<double> g = np.tensor.grad_or_zeros();
        auto& s = slot(np.name, p.size());
        adam_update(p, g, s.m, s.v, t_, lr, cfg_, np.decay);
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(p[i])) throw NumericError("adam produced a non-finite value in '" + np.name + "'");
            values[i] = p[i];
        }
    }
}

double cosine_lr(std::size_t epoch, std::size_t epochs, double lr0) {
    if (epochs == 0) throw ConfigError("cosine_lr needs epochs > 0");
    return 0.5 * lr0 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) / static_cast<double>(epochs)));
}

} // namespace jasnn
