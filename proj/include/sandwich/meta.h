/**
 * @file meta.h
 * @brief String conversions for flat key/value metadata.
 */
#pragma once

#include <cstdint>
#include <cstdio>
#include <map>
#include <string>
#include <type_traits>

#include "sandwich/errors.h"

namespace sandwich {

inline std::string meta_value(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}
inline std::string meta_value(int v) { return std::to_string(v); }
inline std::string meta_value(std::uint64_t v) { return std::to_string(v); }
inline std::string meta_value(bool v) { return v ? "true" : "false"; }
inline std::string meta_value(const std::string& v) { return v; }

/// Parses `text` into `out`; throws UsageError naming `key` on malformed input.
void parse_value(const std::string& key, const std::string& text, double& out);
void parse_value(const std::string& key, const std::string& text, int& out);
void parse_value(const std::string& key, const std::string& text, std::uint64_t& out);
void parse_value(const std::string& key, const std::string& text, bool& out);
void parse_value(const std::string& key, const std::string& text, std::string& out);

/// Leaves `out` untouched when `key` is absent.
template <typename T>
void read_meta(const std::map<std::string, std::string>& meta, const std::string& key, T& out) {
  if (const auto it = meta.find(key); it != meta.end()) parse_value(key, it->second, out);
}

}  // namespace sandwich
