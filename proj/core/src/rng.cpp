#include "lori/rng.hpp"

#include <cmath>
#include <numbers>

namespace lori {

namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t splitmix_finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

std::uint64_t mix_key(std::uint64_t a, std::uint64_t b) {
    return splitmix_finalize(a ^ (b + kGolden + (a << 6) + (a >> 2)));
}

} // namespace

RngStream::RngStream(const StreamKey& key)
    : RngStream(key.seed, key.task_id, key.layer, key.projection) {}

RngStream::RngStream(std::uint64_t seed, std::string_view task_id, std::uint64_t layer,
                     std::string_view projection) {
    std::uint64_t k = splitmix_finalize(seed + kGolden);
    k = mix_key(k, fnv1a(task_id));
    k = mix_key(k, layer);
    k = mix_key(k, fnv1a(projection));
    state_ = k;
}

RngStream RngStream::fork(std::uint64_t index) const {
    return RngStream(mix_key(state_, index));
}

std::uint64_t RngStream::next_u64() {
    state_ += kGolden;
    return splitmix_finalize(state_);
}

double RngStream::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
}

double RngStream::normal() {
    // u1 in (0, 1] keeps the log argument positive.
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t RngStream::below(std::uint64_t n) {
    if (n == 0) throw ArgumentError("RngStream::below: n must be >= 1");
    // Lemire's multiply-shift with rejection; unbiased and integer-only.
    std::uint64_t x = next_u64();
    __uint128_t m = static_cast<__uint128_t>(x) * n;
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
        const std::uint64_t threshold = (0 - n) % n;
        while (lo < threshold) {
            x = next_u64();
            m = static_cast<__uint128_t>(x) * n;
            lo = static_cast<std::uint64_t>(m);
        }
    }
    return static_cast<std::uint64_t>(m >> 64);
}

std::vector<std::size_t> RngStream::permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(below(i));
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

Matrix kaiming_uniform(std::size_t d_in, std::size_t r, RngStream& stream) {
    if (d_in < 1 || r < 1) {
        throw ArgumentError("kaiming_uniform: dimensions must be >= 1, got d_in=" +
                            std::to_string(d_in) + ", r=" + std::to_string(r));
    }
    const double a = std::sqrt(3.0 / static_cast<double>(d_in));
    Matrix m(d_in, r);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = a * (2.0 * stream.uniform01() - 1.0);
    }
    return m;
}

Matrix gaussian(std::size_t rows, std::size_t cols, RngStream& stream) {
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = stream.normal();
    return m;
}

} // namespace lori
