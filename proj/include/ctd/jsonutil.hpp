#ifndef CTD_JSONUTIL_HPP
#define CTD_JSONUTIL_HPP

#include <json.hpp>
#include <set>
#include <string>

#include "ctd/errors.hpp"

namespace ctd {

// Strict key policy: configs reject anything they do not understand so a
// typo never silently falls back to a default.
inline void check_keys(const nlohmann::json& j,
                       const std::set<std::string>& allowed,
                       const std::string& context) {
  if (!j.is_object()) throw ParseError(context + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ConfigError(context + ": unknown key '" + it.key() + "'");
  }
}

template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("bad value for '" + key + "': " + e.what());
  }
}

}  // namespace ctd

#endif
