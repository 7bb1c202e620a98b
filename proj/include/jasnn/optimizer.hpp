// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "jasnn/network.hpp"

namespace jasnn {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;
};

// Bias-corrected Adam; weight decay is added to the gradient (g += wd * p)
// before the moment update, for parameters flagged `decay`. A parameter that
// received no gradient is stepped with a zero gradient.
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    void step(std::vector<NamedParam>& params, double lr);

    std::uint64_t steps() const { return t_; }
    void set_steps(std::uint64_t t) { t_ = t; }
    const AdamConfig& config() const { return cfg_; }

    // Moments keyed by parameter name, created on first use.
    struct Moments {
        std::string name;
        std::vector<double> m, v;
    };
    // Callers replacing the moments must call reindex().
    std::vector<Moments>& moments() { return moments_; }
    void reindex();
    const std::vector<Moments>& moments() const { return moments_; }

private:
    Moments& slot(const std::string& name, std::size_t n);

    AdamConfig cfg_;
    std::uint64_t t_ = 0;
    std::vector<Moments> moments_;
    std::unordered_map<std::string, std::size_t> index_;
};

// One Adam update of a single flat parameter vector; exposed for oracle tests.
void adam_update(std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m, std::vector<double>& v,
                 std::uint64_t t, double lr, const AdamConfig& cfg, bool decay);

// 0.5 * lr0 * (1 + cos(pi * epoch / epochs)).
double cosine_lr(std::size_t epoch, std::size_t epochs, double lr0);

} // namespace jasnn
