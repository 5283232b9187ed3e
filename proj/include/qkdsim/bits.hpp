#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace qkdsim {

using Bytes = std::vector<uint8_t>;

// Bit string with one bit per element (values strictly 0/1). Unpacked storage
// keeps indexing trivial; pack()/unpack() give the MSB-first wire form.
class BitVector {
public:
    BitVector() = default;
    explicit BitVector(size_t n) : v_(n, 0) {}

    static BitVector from_bits(std::initializer_list<int> bits) {
        BitVector b;
        b.v_.reserve(bits.size());
        for (int x : bits) b.v_.push_back(static_cast<uint8_t>(x & 1));
        return b;
    }

    // Parses "0101..." strings; anything but '0'/'1' is rejected.
    static BitVector from_string(std::string_view s) {
        BitVector b;
        b.v_.reserve(s.size());
        for (char c : s) {
            if (c != '0' && c != '1') throw std::invalid_argument("BitVector: bad bit char");
            b.v_.push_back(static_cast<uint8_t>(c - '0'));
        }
        return b;
    }

    // MSB-first unpack of nbits from a packed byte buffer.
    static BitVector unpack(std::span<const uint8_t> bytes, size_t nbits) {
        if (bytes.size() * 8 < nbits) throw std::invalid_argument("BitVector: short buffer");
        BitVector b;
        b.v_.resize(nbits);
        for (size_t i = 0; i < nbits; ++i)
            b.v_[i] = (bytes[i / 8] >> (7 - (i % 8))) & 1;
        return b;
    }

    size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    uint8_t operator[](size_t i) const { return v_[i]; }
    uint8_t at(size_t i) const {
        if (i >= v_.size()) throw std::out_of_range("BitVector::at");
        return v_[i];
    }

    void set(size_t i, uint8_t bit) { v_[i] = bit & 1; }
    void flip(size_t i) { v_[i] ^= 1; }
    void push_back(uint8_t bit) { v_.push_back(bit & 1); }
    void append(const BitVector& o) { v_.insert(v_.end(), o.v_.begin(), o.v_.end()); }
    void clear() { v_.clear(); }
    void reserve(size_t n) { v_.reserve(n); }

    BitVector slice(size_t pos, size_t len) const {
        if (pos + len > v_.size()) throw std::out_of_range("BitVector::slice");
        BitVector b;
        b.v_.assign(v_.begin() + pos, v_.begin() + pos + len);
        return b;
    }

    // XOR of v_[pos, pos+len)
    uint8_t parity(size_t pos, size_t len) const {
        if (pos + len > v_.size()) throw std::out_of_range("BitVector::parity");
        uint8_t p = 0;
        for (size_t i = pos; i < pos + len; ++i) p ^= v_[i];
        return p;
    }

    size_t count_ones() const {
        size_t n = 0;
        for (uint8_t b : v_) n += b;
        return n;
    }

    BitVector xored(const BitVector& o) const {
        if (o.size() != size()) throw std::invalid_argument("BitVector: length mismatch");
        BitVector r(*this);
        for (size_t i = 0; i < r.v_.size(); ++i) r.v_[i] ^= o.v_[i];
        return r;
    }

    Bytes pack() const {
        Bytes out((v_.size() + 7) / 8, 0);
        for (size_t i = 0; i < v_.size(); ++i)
            if (v_[i]) out[i / 8] |= static_cast<uint8_t>(1u << (7 - (i % 8)));
        return out;
    }

    std::string to_string() const {
        std::string s(v_.size(), '0');
        for (size_t i = 0; i < v_.size(); ++i) s[i] = char('0' + v_[i]);
        return s;
    }

    bool operator==(const BitVector&) const = default;

private:
    std::vector<uint8_t> v_;
};

inline std::string to_hex(std::span<const uint8_t> data) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(data.size() * 2);
    for (uint8_t b : data) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xf]);
    }
    return s;
}

inline Bytes from_hex(std::string_view s) {
    auto nibble = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    if (s.size() % 2 != 0) throw std::invalid_argument("from_hex: odd length");
    Bytes out;
    out.reserve(s.size() / 2);
    for (size_t i = 0; i < s.size(); i += 2) {
        int hi = nibble(s[i]), lo = nibble(s[i + 1]);
        if (hi < 0 || lo < 0) throw std::invalid_argument("from_hex: bad digit");
        out.push_back(static_cast<uint8_t>(hi << 4 | lo));
    }
    return out;
}

// Big-endian integer helpers for wire encodings.
inline void put_u16be(Bytes& b, uint16_t v) {
    b.push_back(uint8_t(v >> 8));
    b.push_back(uint8_t(v));
}

inline void put_u32be(Bytes& b, uint32_t v) {
    for (int s = 24; s >= 0; s -= 8) b.push_back(uint8_t(v >> s));
}

inline void put_u64be(Bytes& b, uint64_t v) {
    for (int s = 56; s >= 0; s -= 8) b.push_back(uint8_t(v >> s));
}

class ByteReader {
public:
    explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

    uint8_t u8() { return take(1)[0]; }
    uint16_t u16be() {
        auto s = take(2);
        return uint16_t(s[0]) << 8 | s[1];
    }
    uint32_t u32be() {
        auto s = take(4);
        uint32_t v = 0;
        for (uint8_t b : s) v = v << 8 | b;
        return v;
    }
    uint64_t u64be() {
        auto s = take(8);
        uint64_t v = 0;
        for (uint8_t b : s) v = v << 8 | b;
        return v;
    }
    Bytes bytes(size_t n) {
        auto s = take(n);
        return Bytes(s.begin(), s.end());
    }
    size_t remaining() const { return data_.size() - pos_; }
    bool done() const { return pos_ == data_.size(); }

private:
    std::span<const uint8_t> take(size_t n) {
        if (pos_ + n > data_.size()) throw std::out_of_range("ByteReader: truncated");
        auto s = data_.subspan(pos_, n);
        pos_ += n;
        return s;
    }
    std::span<const uint8_t> data_;
    size_t pos_ = 0;
};

}  // namespace qkdsim
