#pragma once

#include "tprobe/core/errors.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <set>
#include <string>

namespace tprobe {

/// Strict reader for one JSON object: typed field access with ConfigError
/// on a missing or mistyped field, and finish() rejecting unread fields.
class JsonFields {
 public:
  JsonFields(const nlohmann::json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) {
      throw ConfigError(fmt::format("{}: expected an object", where_));
    }
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const nlohmann::json& raw(const std::string& key) {
    if (!j_.contains(key)) {
      throw ConfigError(fmt::format("{}: missing field '{}'", where_, key));
    }
    used_.insert(key);
    return j_.at(key);
  }

  template <class T>
  T required(const std::string& key) {
    return convert<T>(key, raw(key));
  }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!j_.contains(key)) {
      return fallback;
    }
    return required<T>(key);
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.contains(key)) {
        throw ConfigError(fmt::format("{}: unknown field '{}'", where_, key));
      }
    }
  }

 private:
  template <class T>
  T convert(const std::string& key, const nlohmann::json& v) const {
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<std::int64_t>() < 0)) {
          throw ConfigError(fmt::format("{}: expected a nonnegative integer", path(key)));
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v.is_number()) {
          throw ConfigError(fmt::format("{}: expected a number", path(key)));
        }
      }
      return v.get<T>();
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(fmt::format("{}: {}", path(key), e.what()));
    }
  }

  const nlohmann::json& j_;
  std::string where_;
  std::set<std::string> used_;
};

}  // namespace tprobe
