#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

#include "lori/errors.hpp"

namespace lori {

/// The six linear projections each layer exposes for adaptation.
enum class Projection : std::uint8_t {
    attn_q,
    attn_k,
    attn_v,
    attn_o,
    ffn_up,
    ffn_down,
};

inline constexpr std::array<Projection, 6> kAllProjections = {
    Projection::attn_q, Projection::attn_k, Projection::attn_v,
    Projection::attn_o, Projection::ffn_up, Projection::ffn_down,
};

std::string_view to_string(Projection p);
Projection projection_from_string(std::string_view name);

/// True for the attention-like module group (q, k, v, o), false for ffn.
inline bool is_attention(Projection p) {
    return p == Projection::attn_q || p == Projection::attn_k ||
           p == Projection::attn_v || p == Projection::attn_o;
}

/// Addresses one base-weight matrix: (layer index, projection name).
struct SlotKey {
    int layer = 0;
    Projection proj = Projection::attn_q;

    auto operator<=>(const SlotKey&) const = default;
    std::string str() const {
        return std::to_string(layer) + "." + std::string(to_string(proj));
    }
};

} // namespace lori
