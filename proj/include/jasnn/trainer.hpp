// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "jasnn/checkpoint.hpp"
#include "jasnn/config.hpp"
#include "jasnn/data.hpp"
#include "jasnn/network.hpp"
#include "jasnn/optimizer.hpp"

namespace jasnn {

struct GroupNorm {
    std::string group;
    double norm = 0.0;
};

struct StepMetrics {
    double l_ce = 0.0;
    double l_kld = 0.0;
    double l_norm = 0.0;
    double l_total = 0.0;
    std::vector<GroupNorm> grad_norms; // L2 norm of the gradient per parameter group
    std::size_t batch = 0;
};

// Accuracies in percent. ann_top1 is NaN when the ANN side is not trained.
struct EvalResult {
    double ann_top1 = 0.0;
    double snn_top1 = 0.0;
    std::vector<double> ann_branch_top1;
    std::vector<double> snn_branch_top1;
    std::size_t samples = 0;
};

struct EpochMetrics {
    std::size_t epoch = 0; // 1-based count of completed epochs
    double lr = 0.0;
    double l_ce = 0.0, l_kld = 0.0, l_norm = 0.0, l_total = 0.0; // means over the epoch's steps
    EvalResult eval;
    double wall_seconds = 0.0;

    std::string json() const;
};

struct FitSummary {
    EpochMetrics last; // the figure comparable to a "last epoch" report
    EpochMetrics best; // epoch with the highest SNN top-1
};

// Independent seeds per purpose, derived from the run seed.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t purpose, std::uint64_t a = 0, std::uint64_t b = 0);
inline constexpr std::uint64_t kSeedInit = 1;
inline constexpr std::uint64_t kSeedShuffle = 2;
inline constexpr std::uint64_t kSeedFlip = 3;

// Train/test split for the configured dataset, with limits applied.
std::pair<Dataset, Dataset> load_datasets(const RunConfig& cfg, const std::filesystem::path& data_dir);
// Copies the sample shape of `ds` into the network config.
void match_input(RunConfig& cfg, const Dataset& ds);

class Trainer {
public:
    explicit Trainer(RunConfig cfg);

    const RunConfig& config() const { return cfg_; }
    JointNetwork& net() { return *net_; }
    const JointNetwork& net() const { return *net_; }
    Adam& optimizer() { return adam_; }

    // One Algorithm-1 step on one batch: compose, forward both sides, losses,
    // one backward, one Adam update.
    StepMetrics train_step(const Batch& batch, double lr);

    // Eval mode (running normalization statistics), no gradient recording.
    EvalResult evaluate(const Dataset& ds, std::optional<std::size_t> time_steps = std::nullopt,
                        std::size_t batch_size = 100);

    // Position in the training schedule.
    std::size_t epoch() const { return epoch_; }
    std::size_t batch_cursor() const { return cursor_; }

    // Runs up to `max_steps` steps from the cursor, stopping at the end of the epoch.
    // Returns the metrics of the steps taken.
    std::vector<StepMetrics> train_steps(const Dataset& train, std::size_t max_steps);
    // Finishes the current epoch, evaluates on `test`.
    EpochMetrics run_epoch(const Dataset& train, const Dataset& test);
    FitSummary fit(const Dataset& train, const Dataset& test,
                   const std::function<void(const EpochMetrics&)>& on_epoch = {});

    std::vector<Record> checkpoint_records();
    void save(const std::filesystem::path& path);
    // Restores parameters, buffers, optimizer state and schedule position.
    // The checkpoint's config must equal this trainer's config.
    void restore(const std::vector<Record>& records);
    static Trainer resume(const std::filesystem::path& path);

private:
    RunConfig cfg_;
    std::unique_ptr<JointNetwork> net_;
    Adam adam_;
    std::size_t epoch_ = 0;
    std::size_t cursor_ = 0;
    double sums_[5] = {0, 0, 0, 0, 0}; // ce, kld, norm, total, steps of the current epoch
    std::optional<EpochMetrics> best_;
};

std::string param_group_name(ParamGroup g);

} // namespace jasnn
