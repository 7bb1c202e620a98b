// SPDX-License-Identifier: Apache-2.0
#include <catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <zlib.h>

#include "jasnn/checkpoint.hpp"
#include "jasnn/errors.hpp"

using namespace jasnn;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("jasnn_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

std::vector<Record> sample_records() {
    return {{"zeta", {2, 2}, {1.0, -2.5, 3.25, 1e-300}},
            {"alpha", {3}, {0.1, 0.2, 0.3}},
            {"mid.k0_1", {1, 1, 1, 1}, {42.0}}};
}

std::uint32_t read_u32(const std::vector<unsigned char>& b, std::size_t at) {
    return std::uint32_t(b[at]) | std::uint32_t(b[at + 1]) << 8 | std::uint32_t(b[at + 2]) << 16 |
           std::uint32_t(b[at + 3]) << 24;
}

} // namespace

TEST_CASE("byte layout", "[checkpoint][format]") {
    auto bytes = encode_checkpoint({{"ab", {2}, {1.0, 2.0}}});
    REQUIRE(bytes.size() == 4 + 4 + 8 + (4 + 2 + 4 + 8 + 16) + 4);
    CHECK(std::memcmp(bytes.data(), "JASN", 4) == 0);
    CHECK(read_u32(bytes, 4) == kCheckpointVersion);
    CHECK(read_u32(bytes, 8) == 1);
    CHECK(read_u32(bytes, 12) == 0);
    CHECK(read_u32(bytes, 16) == 2);
    CHECK(bytes[20] == 'a');
    CHECK(read_u32(bytes, 22) == 1);
    CHECK(read_u32(bytes, 26) == 2);
    double first;
    std::memcpy(&first, bytes.data() + 34, 8);
    CHECK(first == 1.0);
    const auto crc = ::crc32(0L, bytes.data(), static_cast<uInt>(bytes.size() - 4));
    CHECK(read_u32(bytes, bytes.size() - 4) == crc);
    CHECK(crc32_of(std::span(bytes).first(bytes.size() - 4)) == crc);
}

TEST_CASE("round trip sorts by name and preserves every bit", "[checkpoint]") {
    auto dir = temp_dir("roundtrip");
    write_checkpoint(dir / "a.jasn", sample_records());
    auto back = read_checkpoint(dir / "a.jasn");
    REQUIRE(back.size() == 3);
    CHECK(back[0].name == "alpha");
    CHECK(back[1].name == "mid.k0_1");
    CHECK(back[2].name == "zeta");
    CHECK(find_record(back, "zeta").values == sample_records()[0].values);
    CHECK(find_record(back, "zeta").shape == Shape{2, 2});
    CHECK_THROWS_AS(find_record(back, "missing"), SerializationError);

    // save -> load -> save is byte-identical.
    write_checkpoint(dir / "b.jasn", back);
    std::ifstream a(dir / "a.jasn", std::ios::binary), b(dir / "b.jasn", std::ios::binary);
    std::vector<char> ab{std::istreambuf_iterator<char>(a), {}}, bb{std::istreambuf_iterator<char>(b), {}};
    CHECK(ab == bb);
    CHECK(!std::filesystem::exists(dir / "a.jasn.tmp"));
}

TEST_CASE("text records", "[checkpoint]") {
    auto r = text_record("meta.config", "tau = 0.5\nname = \"x\"\n");
    CHECK(record_text(r) == "tau = 0.5\nname = \"x\"\n");
    CHECK(record_text(text_record("empty", "")) == "");
}

TEST_CASE("corrupted files are rejected", "[checkpoint][errors]") {
    const auto good = encode_checkpoint(sample_records());
    CHECK_NOTHROW(decode_checkpoint(good));

    for (std::size_t at : {std::size_t{0}, std::size_t{5}, std::size_t{20}, good.size() / 2, good.size() - 1}) {
        auto bad = good;
        bad[at] ^= 0x5a;
        INFO("flipped byte " << at);
        CHECK_THROWS_AS(decode_checkpoint(bad), SerializationError);
    }
    for (std::size_t len : {std::size_t{0}, std::size_t{3}, std::size_t{15}, good.size() - 5}) {
        std::vector<unsigned char> cut(good.begin(), good.begin() + static_cast<long>(len));
        CHECK_THROWS_AS(decode_checkpoint(cut), SerializationError);
    }
    auto longer = good;
    longer.insert(longer.end() - 4, 0);
    CHECK_THROWS_AS(decode_checkpoint(longer), SerializationError);

    // Version bump with a valid checksum.
    auto v2 = good;
    v2[4] = 2;
    const auto crc = ::crc32(0L, v2.data(), static_cast<uInt>(v2.size() - 4));
    for (int i = 0; i < 4; ++i) v2[v2.size() - 4 + i] = static_cast<unsigned char>(crc >> (8 * i));
    try {
        decode_checkpoint(v2);
        FAIL("expected a version error");
    } catch (const SerializationError& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }

    CHECK_THROWS_AS(encode_checkpoint({{"x", {1}, {1.0}}, {"x", {1}, {2.0}}}), SerializationError);
    CHECK_THROWS_AS(read_checkpoint("/nonexistent/path.jasn"), SerializationError);
}
