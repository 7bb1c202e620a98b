// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "jasnn/data.hpp"
#include "jasnn/energy.hpp"
#include "jasnn/losses.hpp"
#include "jasnn/network.hpp"

namespace jasnn {

enum class CeBranches { All, Head };

struct TrainConfig {
    std::size_t epochs = 40;
    double lr = 1e-3;
    double weight_decay = 5e-4;
    LossWeights lambdas{};
    std::size_t batch_size = 32;
    std::uint64_t seed = 1;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    // Ablation toggles.
    bool use_ann = true;    // train the ANN side at all
    bool use_ann_ce = true; // label loss on ANN exits
    bool use_snn_ce = true; // label loss on SNN exits
    bool use_kld = true;
    bool use_norm = true;
    CeBranches ce_branches = CeBranches::All;

    std::size_t checkpoint_every = 0; // epochs, 0 = final checkpoint only

    void validate() const;
};

struct DataConfig {
    DatasetKind dataset = DatasetKind::Mnist;
    std::size_t train_limit = 0; // 0 = all
    std::size_t test_limit = 0;
    std::size_t synthetic_train = 512;
    std::size_t synthetic_test = 256;
    std::uint64_t data_seed = 2024; // synthetic generation only
    bool flip = true;               // horizontal flips (CIFAR-10 only)
};

struct RunConfig {
    NetworkConfig net;
    TrainConfig train;
    DataConfig data;
    EnergyConstants energy;

    void validate() const;
};

// Flat `key = value` lines; `#` starts a comment; string values may be quoted.
// Unknown keys and malformed values are ConfigErrors naming the line.
RunConfig parse_config(std::string_view text, const std::string& origin = "config");
RunConfig load_config(const std::filesystem::path& path);

// Canonical text listing every key; parse_config(config_text(c)) reproduces c.
std::string config_text(const RunConfig& cfg);

std::vector<std::string> config_keys();
// Closest known key by edit distance.
std::string nearest_key(const std::string& key);

} // namespace jasnn
