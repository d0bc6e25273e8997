#ifndef PEGAN_SRC_JSON_UTIL_HPP
#define PEGAN_SRC_JSON_UTIL_HPP

#include <initializer_list>
#include <string>

#include "json.hpp"
#include "pegan/errors.hpp"

namespace pegan::json_util {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                                const std::string& section) {
  if (!j.is_object()) throw ConfigError("'" + section + "' must be a JSON object");
  for (const auto& [key, _] : j.items()) {
    bool known = false;
    for (const char* a : allowed) known = known || key == a;
    if (!known) throw ConfigError("unknown key '" + key + "' in '" + section + "'");
  }
}

/// Reads j[key] into `out` when present; type errors become ConfigError.
template <typename T>
void read(const nlohmann::json& j, const char* key, T& out, const std::string& section) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return;
  try {
    out = it->template get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("bad value for '" + section + "." + key + "': " + it->dump());
  }
}

}  // namespace pegan::json_util

#endif  // PEGAN_SRC_JSON_UTIL_HPP
