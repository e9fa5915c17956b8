#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "lori/matrix.hpp"

namespace lori {

/// Identifies one random stream: a global seed plus a structural key.
/// Identical (seed, key) always reproduces the identical sequence; distinct
/// keys give independent streams, so per-slot draws do not depend on the
/// order in which slots are visited.
struct StreamKey {
    std::uint64_t seed = 0;
    std::string task_id;
    std::uint64_t layer = 0;
    std::string projection;

    bool operator==(const StreamKey&) const = default;
};

/// Counter-based generator (splitmix64 over a derived key). All outputs are
/// produced with integer arithmetic only, so sequences are identical across
/// platforms and compilers.
class RngStream {
public:
    explicit RngStream(const StreamKey& key);
    RngStream(std::uint64_t seed, std::string_view task_id, std::uint64_t layer,
              std::string_view projection);
    /// Derives a substream; used to fan out per-trial / per-epoch streams.
    RngStream fork(std::uint64_t index) const;

    std::uint64_t next_u64();
    /// Uniform on [0, 1) with 53 random bits.
    double uniform01();
    double uniform(double lo, double hi);
    /// Standard normal via Box-Muller (two u64 draws per value).
    double normal();
    /// Uniform integer in [0, n); n >= 1.
    std::uint64_t below(std::uint64_t n);
    /// Fisher-Yates permutation of {0, ..., n-1}.
    std::vector<std::size_t> permutation(std::size_t n);

private:
    explicit RngStream(std::uint64_t raw_state) : state_(raw_state) {}
    std::uint64_t state_;
};

/// d_in x r matrix with i.i.d. entries uniform on [-a, a], a = sqrt(3/d_in),
/// drawn row-major from the stream. Entry variance is a^2/3 = 1/d_in.
Matrix kaiming_uniform(std::size_t d_in, std::size_t r, RngStream& stream);

/// rows x cols matrix of i.i.d. standard normals, row-major.
Matrix gaussian(std::size_t rows, std::size_t cols, RngStream& stream);

} // namespace lori
