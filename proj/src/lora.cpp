#include "mtsk/lora.hpp"

namespace mtsk {

Projection parse_projection(char c) {
  switch (c) {
    case 'q': return Projection::Query;
    case 'k': return Projection::Key;
    case 'v': return Projection::Value;
    default: throw ConfigError(std::string("unknown adapted projection '") + c + "' (expected q|k|v)");
  }
}

int rank_for(int d_model, int rank_divisor) {
  if (d_model < 1 || rank_divisor < 1) {
    throw ConfigError("rank_for: d_model and rank_divisor must be positive");
  }
  if (d_model % rank_divisor != 0) {
    throw ConfigError("rank_for: rank_divisor " + std::to_string(rank_divisor) +
                      " does not divide d_model " + std::to_string(d_model));
  }
  return d_model / rank_divisor;
}

}  // namespace mtsk
