// SPDX-License-Identifier: Apache-2.0
#include "jasnn/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numbers>

#include "jasnn/errors.hpp"

namespace jasnn {

std::string dataset_name(DatasetKind kind) {
    switch (kind) {
    case DatasetKind::Mnist: return "mnist";
    case DatasetKind::Cifar10: return "cifar10";
    case DatasetKind::Blobs: return "blobs";
    case DatasetKind::Spirals: return "spirals";
    }
    return "?";
}

DatasetKind parse_dataset_kind(const std::string& name) {
    for (auto k : {DatasetKind::Mnist, DatasetKind::Cifar10, DatasetKind::Blobs, DatasetKind::Spirals})
        if (dataset_name(k) == name) return k;
    throw ConfigError("unknown dataset '" + name + "' (mnist, cifar10, blobs, spirals)");
}

void Dataset::validate() const {
    if (!images.defined() || images.rank() != 4) throw DataError(split + ": images must be [n, c, h, w]");
    if (images.dim(0) != labels.size())
        throw DataError(split + ": " + std::to_string(images.dim(0)) + " images but " +
                        std::to_string(labels.size()) + " labels");
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= classes)
            throw DataError(split + ": label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                            " outside [0, " + std::to_string(classes) + ")");
}

Dataset Dataset::head(std::size_t limit) const {
    if (limit == 0 || limit >= size()) return *this;
    Dataset out = *this;
    const std::size_t per = images.numel() / size();
    Shape shape = images.shape();
    shape[0] = limit;
    const auto v = images.values();
    out.images = Tensor::from(shape, {v.begin(), v.begin() + static_cast<std::ptrdiff_t>(limit * per)});
    out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(limit));
    return out;
}

namespace {

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t offset, const std::filesystem::path& path) {
    if (offset + 4 > b.size())
        throw DataError(path.string() + ": truncated header at byte offset " + std::to_string(offset));
    return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
           (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

void expect_magic(const std::vector<unsigned char>& b, std::uint32_t magic, const std::filesystem::path& path) {
    const auto got = be32(b, 0, path);
    if (got != magic) {
        char buf[96];
        std::snprintf(buf, sizeof buf, ": bad magic 0x%08x at byte offset 0 (expected 0x%08x)", got, magic);
        throw DataError(path.string() + buf);
    }
}

void expect_length(const std::vector<unsigned char>& b, std::size_t want, const std::filesystem::path& path) {
    if (b.size() < want)
        throw DataError(path.string() + ": truncated payload, file ends at byte offset " + std::to_string(b.size()) +
                        ", expected " + std::to_string(want) + " bytes");
    if (b.size() > want)
        throw DataError(path.string() + ": " + std::to_string(b.size() - want) +
                        " trailing bytes from byte offset " + std::to_string(want));
}

} // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const std::string& split) {
    const auto ib = read_file(images);
    const auto lb = read_file(labels);
    expect_magic(ib, 0x00000803, images);
    expect_magic(lb, 0x00000801, labels);
    const std::size_t n = be32(ib, 4, images), rows = be32(ib, 8, images), cols = be32(ib, 12, images);
    const std::size_t nl = be32(lb, 4, labels);
    if (n != nl)
        throw DataError(labels.string() + ": count " + std::to_string(nl) + " at byte offset 4 does not match " +
                        std::to_string(n) + " images in " + images.string());
    if (rows == 0 || cols == 0) throw DataError(images.string() + ": zero image extent at byte offset 8");
    expect_length(ib, 16 + n * rows * cols, images);
    expect_length(lb, 8 + n, labels);

    Dataset ds;
    ds.split = split;
    ds.classes = 10;
    std::vector<double> px(n * rows * cols);
    for (std::size_t i = 0; i < px.size(); ++i) px[i] = (ib[16 + i] / 255.0 - kMnistMean) / kMnistStd;
    ds.images = Tensor::from({n, 1, rows, cols}, std::move(px));
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        if (lb[8 + i] >= 10)
            throw DataError(labels.string() + ": label " + std::to_string(lb[8 + i]) + " at byte offset " +
                            std::to_string(8 + i));
        ds.labels[i] = lb[8 + i];
    }
    return ds;
}

std::pair<Dataset, Dataset> load_mnist_idx(const std::filesystem::path& dir) {
    return {load_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte", "train"),
            load_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte", "test")};
}

Dataset load_cifar10_file(const std::filesystem::path& file, const std::string& split) {
    constexpr std::size_t record = 3073, plane = 1024;
    const auto b = read_file(file);
    if (b.empty() || b.size() % record != 0)
        throw DataError(file.string() + ": length " + std::to_string(b.size()) + " is not a multiple of " +
                        std::to_string(record) + "; partial record at byte offset " +
                        std::to_string(b.size() - b.size() % record));
    const std::size_t n = b.size() / record;
    Dataset ds;
    ds.split = split;
    ds.classes = 10;
    std::vector<double> px(n * 3 * plane);
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t at = i * record;
        if (b[at] >= 10)
            throw DataError(file.string() + ": label " + std::to_string(b[at]) + " at byte offset " +
                            std::to_string(at));
        ds.labels[i] = b[at];
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t p = 0; p < plane; ++p)
                px[(i * 3 + c) * plane + p] = (b[at + 1 + c * plane + p] / 255.0 - kCifarMean[c]) / kCifarStd[c];
    }
    ds.images = Tensor::from({n, 3, 32, 32}, std::move(px));
    return ds;
}

std::pair<Dataset, Dataset> load_cifar10_bin(const std::filesystem::path& dir) {
    std::vector<Dataset> parts;
    for (int i = 1; i <= 5; ++i)
        parts.push_back(load_cifar10_file(dir / ("data_batch_" + std::to_string(i) + ".bin"), "train"));
    std::vector<double> px;
    std::vector<int> labels;
    for (const auto& p : parts) {
        px.insert(px.end(), p.images.values().begin(), p.images.values().end());
        labels.insert(labels.end(), p.labels.begin(), p.labels.end());
    }
    Dataset train;
    train.split = "train";
    train.classes = 10;
    train.flip_augment = true;
    train.images = Tensor::from({labels.size(), 3, 32, 32}, std::move(px));
    train.labels = std::move(labels);
    return {std::move(train), load_cifar10_file(dir / "test_batch.bin", "test")};
}

Dataset make_synthetic(SyntheticKind kind, std::size_t n, std::size_t classes, std::uint64_t seed) {
    if (classes < 2) throw ConfigError("synthetic data needs at least two classes");
    if (n < classes) throw ConfigError("synthetic data needs n >= classes");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    constexpr std::size_t side = kSyntheticSide;
    constexpr double pi = std::numbers::pi;

    Dataset ds;
    ds.split = kind == SyntheticKind::Blobs ? "blobs" : "spirals";
    ds.classes = classes;
    ds.labels.resize(n);
    std::vector<double> px(n * side * side);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t c = i % classes;
        ds.labels[i] = static_cast<int>(c);
        const double phase = 2.0 * pi * static_cast<double>(c) / static_cast<double>(classes);
        double x, y;
        if (kind == SyntheticKind::Blobs) {
            x = 0.6 * std::cos(phase) + 0.08 * noise(rng);
            y = 0.6 * std::sin(phase) + 0.08 * noise(rng);
        } else {
            const double t = 0.15 + 0.85 * unit(rng);
            const double angle = phase + 1.5 * pi * t;
            x = 0.85 * t * std::cos(angle) + 0.03 * noise(rng);
            y = 0.85 * t * std::sin(angle) + 0.03 * noise(rng);
        }
        // [-1, 1]^2 onto pixel centres, bump of one pixel width.
        const double cx = (x + 1.0) * 0.5 * (side - 1), cy = (y + 1.0) * 0.5 * (side - 1);
        for (std::size_t r = 0; r < side; ++r)
            for (std::size_t q = 0; q < side; ++q) {
                const double d2 = (static_cast<double>(q) - cx) * (static_cast<double>(q) - cx) +
                                  (static_cast<double>(r) - cy) * (static_cast<double>(r) - cy);
                px[i * side * side + r * side + q] = std::exp(-0.5 * d2);
            }
    }
    ds.images = Tensor::from({n, 1, side, side}, std::move(px));
    return ds;
}

namespace {

// Uniform integer in [0, bound) by rejection, independent of library distributions.
std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do x = rng();
    while (x >= limit);
    return x % bound;
}

} // namespace

std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size,
                                              std::optional<std::uint64_t> shuffle_seed) {
    if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    if (shuffle_seed) {
        std::mt19937_64 rng(*shuffle_seed);
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[draw_below(rng, i)]);
    }
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t at = 0; at < n; at += batch_size)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(at),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, at + batch_size)));
    return out;
}

Batch gather(const Dataset& ds, std::span<const std::size_t> index, std::mt19937_64* flip_rng) {
    const std::size_t c = ds.channels(), h = ds.height(), w = ds.width(), per = c * h * w;
    std::vector<double> px(index.size() * per);
    Batch b;
    b.labels.reserve(index.size());
    const auto v = ds.images.values();
    for (std::size_t i = 0; i < index.size(); ++i) {
        if (index[i] >= ds.size()) throw DataError("sample index " + std::to_string(index[i]) + " out of range");
        const double* src = v.data() + index[i] * per;
        double* dst = px.data() + i * per;
        const bool flip = flip_rng && ((*flip_rng)() >> 63) != 0;
        if (!flip) {
            std::copy(src, src + per, dst);
        } else {
            for (std::size_t p = 0; p < c * h; ++p)
                for (std::size_t x = 0; x < w; ++x) dst[p * w + x] = src[p * w + (w - 1 - x)];
        }
        b.labels.push_back(ds.labels[index[i]]);
    }
    b.images = Tensor::from({index.size(), c, h, w}, std::move(px));
    return b;
}

} // namespace jasnn
