#pragma once

#include "mtsk/types.hpp"

#include "json.hpp"

#include <initializer_list>
#include <string>
#include <string_view>

namespace mtsk {

/// Throws ConfigError if `j` is not an object or has a key outside `allowed`.
inline void require_known_keys(const nlohmann::json& j, std::string_view section,
                               std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError(std::string(section) + ": expected an object");
  for (const auto& item : j.items()) {
    bool ok = false;
    for (auto key : allowed) ok = ok || item.key() == key;
    if (!ok) throw ConfigError(std::string(section) + ": unknown key '" + item.key() + "'");
  }
}

/// Reads `key` into `out` when present, naming the field on type errors.
template <typename T>
void read_optional(const nlohmann::json& j, std::string_view section, const char* key, T& out) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    out = it->get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string(section) + "." + key + ": " + e.what());
  }
}

}  // namespace mtsk
