// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "jasnn/tensor.hpp"

namespace jasnn {

enum class DatasetKind { Mnist, Cifar10, Blobs, Spirals };

std::string dataset_name(DatasetKind kind);
DatasetKind parse_dataset_kind(const std::string& name);

struct Dataset {
    Tensor images;           // [n, c, h, w]
    std::vector<int> labels; // n entries in [0, classes)
    std::size_t classes = 0;
    std::string split;
    bool flip_augment = false; // horizontal flips when batching for training

    std::size_t size() const { return labels.size(); }
    std::size_t channels() const { return images.dim(1); }
    std::size_t height() const { return images.dim(2); }
    std::size_t width() const { return images.dim(3); }

    void validate() const;
    // First `limit` samples (all when limit is 0 or exceeds the size).
    Dataset head(std::size_t limit) const;
};

inline constexpr double kMnistMean = 0.1307;
inline constexpr double kMnistStd = 0.3081;
inline constexpr double kCifarMean[3] = {0.4914, 0.4822, 0.4465};
inline constexpr double kCifarStd[3] = {0.2470, 0.2435, 0.2616};

// train-{images-idx3,labels-idx1}-ubyte and t10k-... in `dir`.
std::pair<Dataset, Dataset> load_mnist_idx(const std::filesystem::path& dir);
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const std::string& split);

// data_batch_1..5.bin and test_batch.bin in `dir`.
std::pair<Dataset, Dataset> load_cifar10_bin(const std::filesystem::path& dir);
Dataset load_cifar10_file(const std::filesystem::path& file, const std::string& split);

enum class SyntheticKind { Blobs, Spirals };
inline constexpr std::size_t kSyntheticSide = 8;

// Balanced 2-d point clouds rendered as 1x8x8 images (a Gaussian bump at the point).
Dataset make_synthetic(SyntheticKind kind, std::size_t n, std::size_t classes, std::uint64_t seed);

// Batch index lists covering 0..n-1 exactly once. Fisher-Yates shuffled when
// a seed is given, identity order otherwise. The last short batch is kept.
std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::optional<std::uint64_t> shuffle_seed);

struct Batch {
    Tensor images;
    std::vector<int> labels;
};

// Gathers the samples `index`. With `flip_rng`, each image is mirrored with probability 1/2.
Batch gather(const Dataset& ds, std::span<const std::size_t> index, std::mt19937_64* flip_rng = nullptr);

} // namespace jasnn
