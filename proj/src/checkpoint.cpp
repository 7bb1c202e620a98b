// SPDX-License-Identifier: Apache-2.0
#include "jasnn/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "jasnn/errors.hpp"

namespace jasnn {

std::uint32_t crc32_of(std::span<const unsigned char> bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in bounded chunks.
    std::size_t at = 0;
    while (at < bytes.size()) {
        const std::size_t n = std::min<std::size_t>(bytes.size() - at, 1u << 30);
        crc = crc32(crc, bytes.data() + at, static_cast<uInt>(n));
        at += n;
    }
    return static_cast<std::uint32_t>(crc);
}

namespace {

template <class T>
void put(std::vector<unsigned char>& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>(v >> (8 * i)));
}

void put_f64(std::vector<unsigned char>& out, double v) { put(out, std::bit_cast<std::uint64_t>(v)); }

class Reader {
public:
    explicit Reader(std::span<const unsigned char> b) : b_(b) {}

    template <class T>
    T get(const char* what) {
        need(sizeof(T), what);
        T v = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T{b_[at_ + i]} << (8 * i));
        at_ += sizeof(T);
        return v;
    }
    std::string bytes(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(b_.data() + at_), n);
        at_ += n;
        return s;
    }
    std::size_t offset() const { return at_; }

private:
    void need(std::size_t n, const char* what) {
        if (n > b_.size() - at_)
            throw SerializationError(std::string("checkpoint truncated reading ") + what + " at byte offset " +
                                     std::to_string(at_));
    }
    std::span<const unsigned char> b_;
    std::size_t at_ = 0;
};

} // namespace

std::vector<unsigned char> encode_checkpoint(std::vector<Record> records) {
    std::sort(records.begin(), records.end(), [](const Record& a, const Record& b) { return a.name < b.name; });
    for (std::size_t i = 1; i < records.size(); ++i)
        if (records[i].name == records[i - 1].name)
            throw SerializationError("duplicate checkpoint record '" + records[i].name + "'");
    std::vector<unsigned char> out = {'J', 'A', 'S', 'N'};
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, records.size());
    for (const auto& r : records) {
        if (shape_numel(r.shape) != r.values.size())
            throw SerializationError("record '" + r.name + "' shape " + shape_str(r.shape) + " holds " +
                                     std::to_string(r.values.size()) + " values");
        put<std::uint32_t>(out, static_cast<std::uint32_t>(r.name.size()));
        out.insert(out.end(), r.name.begin(), r.name.end());
        put<std::uint32_t>(out, static_cast<std::uint32_t>(r.shape.size()));
        for (auto e : r.shape) put<std::uint64_t>(out, e);
        for (double v : r.values) put_f64(out, v);
    }
    put<std::uint32_t>(out, crc32_of(out));
    return out;
}

std::vector<Record> decode_checkpoint(std::span<const unsigned char> bytes) {
    if (bytes.size() < 4 + 4 + 8 + 4) throw SerializationError("checkpoint too short (" + std::to_string(bytes.size()) + " bytes)");
    if (std::memcmp(bytes.data(), "JASN", 4) != 0) throw SerializationError("checkpoint magic is not JASN");
    const auto body = bytes.first(bytes.size() - 4);
    Reader tail(bytes.subspan(bytes.size() - 4));
    const auto stored = tail.get<std::uint32_t>("checksum");
    const auto actual = crc32_of(body);
    if (stored != actual)
        throw SerializationError("checkpoint checksum mismatch (stored " + std::to_string(stored) + ", computed " +
                                 std::to_string(actual) + ")");
    Reader r(body);
    r.bytes(4, "magic");
    const auto version = r.get<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw SerializationError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
    const auto count = r.get<std::uint64_t>("record count");
    std::vector<Record> out;
    for (std::uint64_t i = 0; i < count; ++i) {
        Record rec;
        const auto len = r.get<std::uint32_t>("name length");
        rec.name = r.bytes(len, "name");
        const auto rank = r.get<std::uint32_t>("rank");
        if (rank > 8) throw SerializationError("record '" + rec.name + "' has implausible rank " + std::to_string(rank));
        std::uint64_t n = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            const auto e = r.get<std::uint64_t>("extent");
            rec.shape.push_back(e);
            n *= e;
        }
        if (n > (body.size() - r.offset()) / 8)
            throw SerializationError("record '" + rec.name + "' payload of " + std::to_string(n) +
                                     " values exceeds the file at byte offset " + std::to_string(r.offset()));
        rec.values.resize(n);
        for (auto& v : rec.values) v = std::bit_cast<double>(r.get<std::uint64_t>("payload"));
        out.push_back(std::move(rec));
    }
    if (r.offset() != body.size())
        throw SerializationError("checkpoint has " + std::to_string(body.size() - r.offset()) +
                                 " unexpected bytes at byte offset " + std::to_string(r.offset()));
    return out;
}

void write_checkpoint(const std::filesystem::path& path, std::vector<Record> records) {
    const auto bytes = encode_checkpoint(std::move(records));
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw SerializationError("cannot write " + tmp);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw SerializationError("short write to " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

std::vector<Record> read_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SerializationError("cannot open checkpoint " + path.string());
    const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return decode_checkpoint(bytes);
}

const Record& find_record(const std::vector<Record>& records, const std::string& name) {
    for (const auto& r : records)
        if (r.name == name) return r;
    throw SerializationError("checkpoint has no record '" + name + "'");
}

Record text_record(const std::string& name, const std::string& text) {
    Record r{name, {text.size()}, {}};
    for (unsigned char c : text) r.values.push_back(c);
    return r;
}

std::string record_text(const Record& r) {
    std::string s;
    for (double v : r.values) {
        if (v < 0.0 || v > 255.0 || v != static_cast<double>(static_cast<int>(v)))
            throw SerializationError("record '" + r.name + "' is not text");
        s.push_back(static_cast<char>(static_cast<unsigned char>(v)));
    }
    return s;
}

} // namespace jasnn
