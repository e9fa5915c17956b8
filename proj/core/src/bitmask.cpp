#include "lori/bitmask.hpp"

#include <bit>
#include <string>

namespace lori {

BitMask::BitMask(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), bytes_(byte_size(rows * cols), 0) {}

BitMask BitMask::ones(std::size_t rows, std::size_t cols) {
    BitMask m(rows, cols);
    for (auto& b : m.bytes_) b = 0xFF;
    // Clear padding bits past the last valid position.
    const std::size_t bits = rows * cols;
    for (std::size_t k = bits; k < m.bytes_.size() * 8; ++k) m.set_flat(k, false);
    return m;
}

std::size_t BitMask::count() const {
    std::size_t n = 0;
    for (std::uint8_t b : bytes_) n += static_cast<std::size_t>(std::popcount(b));
    return n;
}

BitMask mask_and(const BitMask& a, const BitMask& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError("mask_and: " + std::to_string(a.rows()) + "x" + std::to_string(a.cols()) +
                             " vs " + std::to_string(b.rows()) + "x" + std::to_string(b.cols()));
    }
    BitMask c(a.rows(), a.cols());
    auto out = c.bytes();
    auto xs = a.bytes();
    auto ys = b.bytes();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xs[i] & ys[i];
    return c;
}

double mask_overlap(const BitMask& a, const BitMask& b) {
    const BitMask both = mask_and(a, b);
    return static_cast<double>(both.count()) / static_cast<double>(a.size());
}

} // namespace lori
