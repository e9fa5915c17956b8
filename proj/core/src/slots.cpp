#include "lori/slots.hpp"

namespace lori {

std::string_view to_string(Projection p) {
    switch (p) {
    case Projection::attn_q: return "attn.q";
    case Projection::attn_k: return "attn.k";
    case Projection::attn_v: return "attn.v";
    case Projection::attn_o: return "attn.o";
    case Projection::ffn_up: return "ffn.up";
    case Projection::ffn_down: return "ffn.down";
    }
    throw ArgumentError("unknown projection enum value");
}

Projection projection_from_string(std::string_view name) {
    for (Projection p : kAllProjections) {
        if (to_string(p) == name) return p;
    }
    throw ArgumentError("unknown projection name: " + std::string(name));
}

} // namespace lori
