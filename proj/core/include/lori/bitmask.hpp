#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lori/errors.hpp"

namespace lori {

/// Bit-packed 2-D mask with the same (rows, cols) addressing as the matrix
/// it gates. Bits are stored row-major, LSB-first within each byte — the
/// same layout the adapter file format uses, so serialization is a memcpy.
class BitMask {
public:
    BitMask() = default;
    /// All bits clear.
    BitMask(std::size_t rows, std::size_t cols);
    static BitMask ones(std::size_t rows, std::size_t cols);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return rows_ * cols_; }

    bool get(std::size_t i, std::size_t j) const { return get_flat(i * cols_ + j); }
    bool get_flat(std::size_t k) const {
        return (bytes_[k >> 3] >> (k & 7)) & 1u;
    }
    void set(std::size_t i, std::size_t j, bool v) { set_flat(i * cols_ + j, v); }
    void set_flat(std::size_t k, bool v) {
        const std::uint8_t bit = static_cast<std::uint8_t>(1u << (k & 7));
        if (v) {
            bytes_[k >> 3] |= bit;
        } else {
            bytes_[k >> 3] &= static_cast<std::uint8_t>(~bit);
        }
    }

    /// Number of set bits.
    std::size_t count() const;
    bool all_set() const { return count() == size(); }
    bool none_set() const { return count() == 0; }

    std::span<const std::uint8_t> bytes() const { return bytes_; }
    std::span<std::uint8_t> bytes() { return bytes_; }
    static std::size_t byte_size(std::size_t bits) { return (bits + 7) / 8; }

    bool operator==(const BitMask& other) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> bytes_;
};

/// Bitwise AND; shapes must match.
BitMask mask_and(const BitMask& a, const BitMask& b);

/// Fraction of positions set in both masks: popcount(a AND b) / size.
double mask_overlap(const BitMask& a, const BitMask& b);

} // namespace lori
