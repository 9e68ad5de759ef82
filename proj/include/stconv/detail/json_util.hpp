#pragma once

#include <cstdint>

#include <json.hpp>

namespace stconv::detail {

// Integral and not negative, whether stored signed or unsigned.
inline bool is_count(const nlohmann::json& v) {
  return v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
}

}  // namespace stconv::detail
