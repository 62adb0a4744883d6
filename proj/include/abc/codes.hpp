#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "abc/errors.hpp"

namespace abc {

/// N binary codes of k bits each, packed LSB-first: bit j of code i lives in
/// byte floor(j/8) at bit position j mod 8. Unused high bits of the last byte
/// of each row are kept zero so whole-byte popcounts are exact.
class PackedCodeMatrix {
public:
    PackedCodeMatrix() = default;

    PackedCodeMatrix(int count, int bits) : count_(count), bits_(bits) {
        if (count <= 0 || bits <= 0) throw DataError("code matrix: empty input (N and k must be >= 1)");
        row_bytes_ = (bits + 7) / 8;
        bytes_.assign(static_cast<std::size_t>(count) * row_bytes_, 0);
        labels_.resize(static_cast<std::size_t>(count));
    }

    int count() const { return count_; }
    int bits() const { return bits_; }
    int row_bytes() const { return row_bytes_; }

    const std::uint8_t* row(int i) const { return bytes_.data() + static_cast<std::size_t>(i) * row_bytes_; }
    std::uint8_t* row(int i) { return bytes_.data() + static_cast<std::size_t>(i) * row_bytes_; }

    bool bit(int i, int j) const { return (row(i)[j / 8] >> (j % 8)) & 1; }

    void set_bit(int i, int j, bool v) {
        std::uint8_t& byte = row(i)[j / 8];
        const std::uint8_t mask = static_cast<std::uint8_t>(1u << (j % 8));
        if (v)
            byte |= mask;
        else
            byte &= static_cast<std::uint8_t>(~mask);
    }

    const std::vector<std::uint8_t>& bytes() const { return bytes_; }

    const std::vector<std::uint16_t>& labels(int i) const { return labels_[static_cast<std::size_t>(i)]; }
    void set_labels(int i, std::vector<std::uint16_t> labels) {
        labels_[static_cast<std::size_t>(i)] = std::move(labels);
    }

    /// All per-row label sets, indexable by code id.
    const std::vector<std::vector<std::uint16_t>>& all_labels() const { return labels_; }

    /// Throws DataError if any padding bit beyond k is set.
    void validate_padding() const {
        const int spare = row_bytes_ * 8 - bits_;
        if (spare == 0) return;
        const std::uint8_t mask = static_cast<std::uint8_t>(0xFFu << (8 - spare));
        for (int i = 0; i < count_; ++i) {
            if (row(i)[row_bytes_ - 1] & mask) {
                throw DataError("code matrix: dirty padding bits in row " + std::to_string(i));
            }
        }
    }

    bool same_codes(const PackedCodeMatrix& other) const {
        return count_ == other.count_ && bits_ == other.bits_ && bytes_ == other.bytes_ &&
               labels_ == other.labels_;
    }

    // ---- "BNC1" file format -------------------------------------------------
    // magic "BNC1" | u32 N (LE) | u32 k (LE) | N rows of ceil(k/8) packed bytes
    // | per row: varint label count, then that many u16 (LE) label ids.

    void write(std::ostream& os) const {
        os.write("BNC1", 4);
        write_u32(os, static_cast<std::uint32_t>(count_));
        write_u32(os, static_cast<std::uint32_t>(bits_));
        os.write(reinterpret_cast<const char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
        for (int i = 0; i < count_; ++i) {
            write_varint(os, labels_[static_cast<std::size_t>(i)].size());
            for (std::uint16_t id : labels_[static_cast<std::size_t>(i)]) write_u16(os, id);
        }
        if (!os) throw IoError("BNC1: write failed");
    }

    void save(const std::string& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("BNC1: cannot open " + path + " for writing");
        write(os);
    }

    static PackedCodeMatrix read(std::istream& is) {
        char magic[4];
        is.read(magic, 4);
        if (!is || std::memcmp(magic, "BNC1", 4) != 0) throw FormatError("BNC1: bad magic");
        const std::uint32_t n = read_u32(is);
        const std::uint32_t k = read_u32(is);
        if (n == 0 || k == 0) throw FormatError("BNC1: zero count or code length");
        PackedCodeMatrix m(static_cast<int>(n), static_cast<int>(k));
        is.read(reinterpret_cast<char*>(m.bytes_.data()), static_cast<std::streamsize>(m.bytes_.size()));
        if (!is) throw FormatError("BNC1: truncated code block");
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::uint64_t cnt = read_varint(is);
            std::vector<std::uint16_t> labels(cnt);
            for (std::uint64_t j = 0; j < cnt; ++j) labels[j] = read_u16(is);
            m.labels_[i] = std::move(labels);
        }
        if (!is) throw FormatError("BNC1: truncated label block");
        m.validate_padding();
        return m;
    }

    static PackedCodeMatrix load(const std::string& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw IoError("BNC1: cannot open " + path);
        return read(is);
    }

private:
    static void write_u32(std::ostream& os, std::uint32_t v) {
        char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
        os.write(b, 4);
    }
    static void write_u16(std::ostream& os, std::uint16_t v) {
        char b[2] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF)};
        os.write(b, 2);
    }
    static void write_varint(std::ostream& os, std::uint64_t v) {
        while (v >= 0x80) {
            os.put(static_cast<char>((v & 0x7F) | 0x80));
            v >>= 7;
        }
        os.put(static_cast<char>(v));
    }
    static std::uint32_t read_u32(std::istream& is) {
        unsigned char b[4];
        is.read(reinterpret_cast<char*>(b), 4);
        if (!is) throw FormatError("BNC1: truncated header");
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    }
    static std::uint16_t read_u16(std::istream& is) {
        unsigned char b[2];
        is.read(reinterpret_cast<char*>(b), 2);
        if (!is) throw FormatError("BNC1: truncated label id");
        return static_cast<std::uint16_t>(static_cast<std::uint16_t>(b[0]) |
                                          (static_cast<std::uint16_t>(b[1]) << 8));
    }
    static std::uint64_t read_varint(std::istream& is) {
        std::uint64_t v = 0;
        int shift = 0;
        while (true) {
            const int c = is.get();
            if (c == EOF) throw FormatError("BNC1: truncated varint");
            v |= static_cast<std::uint64_t>(c & 0x7F) << shift;
            if (!(c & 0x80)) break;
            shift += 7;
            if (shift > 63) throw FormatError("BNC1: varint overflow");
        }
        return v;
    }

    int count_ = 0;
    int bits_ = 0;
    int row_bytes_ = 0;
    std::vector<std::uint8_t> bytes_;
    std::vector<std::vector<std::uint16_t>> labels_;
};

}  // namespace abc
