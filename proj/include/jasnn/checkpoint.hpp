// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "jasnn/tensor.hpp"

namespace jasnn {

// File layout, all integers little-endian:
//   "JASN" | u32 version | u64 count |
//   count x (u32 name_len | name (UTF-8) | u32 rank | rank x u64 extent | f64 payload) |
//   u32 CRC32 of every preceding byte
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Record {
    std::string name;
    Shape shape;
    std::vector<double> values;
};

// Records are written sorted by name; duplicate names are rejected.
std::vector<unsigned char> encode_checkpoint(std::vector<Record> records);
std::vector<Record> decode_checkpoint(std::span<const unsigned char> bytes);

void write_checkpoint(const std::filesystem::path& path, std::vector<Record> records);
std::vector<Record> read_checkpoint(const std::filesystem::path& path);

const Record& find_record(const std::vector<Record>& records, const std::string& name);

// Text stored byte-per-value in a rank-1 record.
Record text_record(const std::string& name, const std::string& text);
std::string record_text(const Record& r);

std::uint32_t crc32_of(std::span<const unsigned char> bytes);

} // namespace jasnn
