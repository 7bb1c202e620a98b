// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>
#include <set>

#include "jasnn/data.hpp"
#include "jasnn/errors.hpp"

using namespace jasnn;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
    auto p = fs::temp_directory_path() / ("jasnn_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void put_be32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<unsigned char>(v >> s));
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& b) {
    std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<long>(b.size()));
}

// n images of rows x cols, pixel value (i + r + c) % 256, label i % 10.
std::pair<std::vector<unsigned char>, std::vector<unsigned char>> idx_pair(std::uint32_t n, std::uint32_t rows,
                                                                           std::uint32_t cols) {
    std::vector<unsigned char> img, lab;
    put_be32(img, 0x803);
    put_be32(img, n);
    put_be32(img, rows);
    put_be32(img, cols);
    for (std::uint32_t i = 0; i < n; ++i)
        for (std::uint32_t r = 0; r < rows; ++r)
            for (std::uint32_t c = 0; c < cols; ++c) img.push_back(static_cast<unsigned char>((i + r + c) % 256));
    put_be32(lab, 0x801);
    put_be32(lab, n);
    for (std::uint32_t i = 0; i < n; ++i) lab.push_back(static_cast<unsigned char>(i % 10));
    return {img, lab};
}

std::string error_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const DataError& e) {
        return e.what();
    }
    return "";
}

} // namespace

TEST_CASE("IDX parsing and normalization", "[data][idx]") {
    const auto dir = temp_dir("idx");
    auto [img, lab] = idx_pair(12, 3, 4);
    write_bytes(dir / "i", img);
    write_bytes(dir / "l", lab);
    const auto ds = load_idx(dir / "i", dir / "l", "train");
    REQUIRE(ds.size() == 12);
    CHECK(ds.images.shape() == Shape{12, 1, 3, 4});
    CHECK(ds.labels[11] == 1);
    CHECK(ds.classes == 10);
    // sample 5, row 2, col 3 -> raw 10
    CHECK_THAT(ds.images.values()[5 * 12 + 2 * 4 + 3], Catch::Matchers::WithinAbs((10 / 255.0 - kMnistMean) / kMnistStd, 1e-15));
    const auto again = load_idx(dir / "i", dir / "l", "train");
    CHECK(std::equal(again.images.values().begin(), again.images.values().end(), ds.images.values().begin()));
}

TEST_CASE("IDX corruption is reported with a byte offset", "[data][idx][errors]") {
    const auto dir = temp_dir("idx_bad");
    auto [img, lab] = idx_pair(4, 2, 2);
    write_bytes(dir / "l", lab);

    auto bad_magic = img;
    bad_magic[3] = 0x02;
    write_bytes(dir / "i", bad_magic);
    auto msg = error_of([&] { load_idx(dir / "i", dir / "l", "t"); });
    CHECK(msg.find("magic") != std::string::npos);
    CHECK(msg.find("offset 0") != std::string::npos);

    write_bytes(dir / "i", std::vector<unsigned char>(img.begin(), img.end() - 3));
    msg = error_of([&] { load_idx(dir / "i", dir / "l", "t"); });
    CHECK(msg.find("truncated") != std::string::npos);

    write_bytes(dir / "i", std::vector<unsigned char>(img.begin(), img.begin() + 10));
    CHECK(error_of([&] { load_idx(dir / "i", dir / "l", "t"); }).find("offset") != std::string::npos);

    auto [img5, lab5] = idx_pair(5, 2, 2);
    write_bytes(dir / "i", img5);
    msg = error_of([&] { load_idx(dir / "i", dir / "l", "t"); });
    CHECK(msg.find("count") != std::string::npos);

    auto bad_label = lab;
    bad_label[9] = 10;
    write_bytes(dir / "i", img);
    write_bytes(dir / "l", bad_label);
    CHECK(error_of([&] { load_idx(dir / "i", dir / "l", "t"); }).find("label 10") != std::string::npos);

    CHECK(!error_of([&] { load_idx(dir / "missing", dir / "l", "t"); }).empty());
}

TEST_CASE("CIFAR-10 binary records", "[data][cifar]") {
    const auto dir = temp_dir("cifar");
    std::vector<unsigned char> b;
    for (int i = 0; i < 3; ++i) {
        b.push_back(static_cast<unsigned char>(i + 4));
        for (int c = 0; c < 3; ++c)
            for (int p = 0; p < 1024; ++p) b.push_back(static_cast<unsigned char>(c * 100 + (p % 7)));
    }
    write_bytes(dir / "x.bin", b);
    const auto ds = load_cifar10_file(dir / "x.bin", "test");
    REQUIRE(ds.size() == 3);
    CHECK(ds.labels == std::vector<int>{4, 5, 6});
    CHECK(ds.images.shape() == Shape{3, 3, 32, 32});
    // sample 1, channel 2, pixel 9 -> raw 202
    CHECK_THAT(ds.images.values()[(1 * 3 + 2) * 1024 + 9],
               Catch::Matchers::WithinAbs((202 / 255.0 - kCifarMean[2]) / kCifarStd[2], 1e-15));

    write_bytes(dir / "y.bin", std::vector<unsigned char>(b.begin(), b.end() - 1));
    const auto msg = error_of([&] { load_cifar10_file(dir / "y.bin", "test"); });
    CHECK(msg.find("offset 6146") != std::string::npos);
    b[3073] = 11;
    write_bytes(dir / "z.bin", b);
    CHECK(error_of([&] { load_cifar10_file(dir / "z.bin", "test"); }).find("offset 3073") != std::string::npos);
}

TEST_CASE("bundled MNIST subset loads", "[data][mnist]") {
    const fs::path dir = fs::path(JASNN_SOURCE_DIR) / "data" / "mnist-5k";
    if (!fs::exists(dir / "train-images-idx3-ubyte")) SKIP("bundled subset not present");
    const auto [train, test] = load_mnist_idx(dir);
    CHECK(train.images.shape() == Shape{train.size(), 1, 28, 28});
    CHECK(test.size() > 0);
    std::set<int> seen(train.labels.begin(), train.labels.end());
    CHECK(seen.size() == 10);
    train.validate();
}

TEST_CASE("batches cover every index once", "[data][batches]") {
    for (std::size_t n : {0u, 1u, 7u, 64u, 100u})
        for (std::size_t bs : {1u, 8u, 32u, 200u})
            for (auto seed : {std::optional<std::uint64_t>{}, std::optional<std::uint64_t>{5}}) {
                const auto bl = batches(n, bs, seed);
                std::vector<std::size_t> all;
                for (std::size_t i = 0; i < bl.size(); ++i) {
                    if (i + 1 < bl.size()) CHECK(bl[i].size() == bs);
                    all.insert(all.end(), bl[i].begin(), bl[i].end());
                }
                CHECK(bl.size() == (n + bs - 1) / bs);
                std::sort(all.begin(), all.end());
                for (std::size_t i = 0; i < n; ++i) CHECK(all[i] == i);
            }
    CHECK(batches(50, 8, 3) == batches(50, 8, 3));
    CHECK(batches(50, 8, 3) != batches(50, 8, 4));
    CHECK(batches(5, 2, std::nullopt)[0] == std::vector<std::size_t>{0, 1});
    CHECK_THROWS_AS(batches(5, 0, std::nullopt), ConfigError);
}

TEST_CASE("gather copies and flips", "[data][batches]") {
    Dataset ds;
    ds.classes = 2;
    ds.images = Tensor::from({2, 1, 1, 3}, {1, 2, 3, 4, 5, 6});
    ds.labels = {0, 1};
    const std::vector<std::size_t> idx{1, 0};
    auto b = gather(ds, idx);
    CHECK(b.labels == std::vector<int>{1, 0});
    CHECK(std::vector<double>(b.images.values().begin(), b.images.values().end()) ==
          std::vector<double>{4, 5, 6, 1, 2, 3});
    std::mt19937_64 rng(0);
    int flipped = 0;
    for (int i = 0; i < 200; ++i) {
        const std::vector<std::size_t> one{0};
        const auto f = gather(ds, one, &rng);
        if (f.images.values()[0] == 3.0) {
            ++flipped;
            CHECK(f.images.values()[2] == 1.0);
        }
    }
    CHECK(flipped > 70);
    CHECK(flipped < 130);
    const std::vector<std::size_t> bad{2};
    CHECK_THROWS_AS(gather(ds, bad), DataError);
}

TEST_CASE("synthetic sets are deterministic and balanced", "[data][synthetic]") {
    for (auto kind : {SyntheticKind::Blobs, SyntheticKind::Spirals}) {
        const auto a = make_synthetic(kind, 100, 4, 9), b = make_synthetic(kind, 100, 4, 9),
                   c = make_synthetic(kind, 100, 4, 10);
        CHECK(std::equal(a.images.values().begin(), a.images.values().end(), b.images.values().begin()));
        CHECK(!std::equal(a.images.values().begin(), a.images.values().end(), c.images.values().begin()));
        CHECK(a.images.shape() == Shape{100, 1, kSyntheticSide, kSyntheticSide});
        std::vector<int> count(4, 0);
        for (int l : a.labels) ++count[l];
        CHECK(count == std::vector<int>{25, 25, 25, 25});
        a.validate();
    }
    CHECK_THROWS_AS(make_synthetic(SyntheticKind::Blobs, 3, 4, 1), ConfigError);
    CHECK_THROWS_AS(make_synthetic(SyntheticKind::Blobs, 3, 1, 1), ConfigError);
}

TEST_CASE("blobs are linearly separable", "[data][synthetic]") {
    const std::size_t classes = 4;
    const auto train = make_synthetic(SyntheticKind::Blobs, 400, classes, 1);
    const auto test = make_synthetic(SyntheticKind::Blobs, 400, classes, 2);
    const std::size_t d = kSyntheticSide * kSyntheticSide;
    auto design = [&](const Dataset& ds) {
        Eigen::MatrixXd x(ds.size(), d + 1);
        for (std::size_t i = 0; i < ds.size(); ++i) {
            for (std::size_t j = 0; j < d; ++j) x(i, j) = ds.images.values()[i * d + j];
            x(i, d) = 1.0;
        }
        return x;
    };
    const Eigen::MatrixXd x = design(train);
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(train.size(), classes);
    for (std::size_t i = 0; i < train.size(); ++i) y(i, train.labels[i]) = 1.0;
    const Eigen::MatrixXd a = x.transpose() * x + 1e-3 * Eigen::MatrixXd::Identity(d + 1, d + 1);
    const Eigen::MatrixXd w = a.ldlt().solve(x.transpose() * y);
    const Eigen::MatrixXd scores = design(test) * w;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.size(); ++i) {
        Eigen::Index k;
        scores.row(static_cast<Eigen::Index>(i)).maxCoeff(&k);
        correct += (static_cast<int>(k) == test.labels[i]) ? 1 : 0;
    }
    const double accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
    CHECK(accuracy >= 0.99);
}

TEST_CASE("head and validate", "[data]") {
    const auto ds = make_synthetic(SyntheticKind::Blobs, 20, 2, 1);
    CHECK(ds.head(5).size() == 5);
    CHECK(ds.head(0).size() == 20);
    CHECK(ds.head(50).size() == 20);
    CHECK(ds.head(5).images.dim(0) == 5);
    Dataset broken = ds;
    broken.labels[0] = 7;
    CHECK_THROWS_AS(broken.validate(), DataError);
    CHECK(parse_dataset_kind("spirals") == DatasetKind::Spirals);
    CHECK_THROWS_AS(parse_dataset_kind("imagenet"), ConfigError);
}
