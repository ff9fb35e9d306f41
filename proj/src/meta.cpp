#include "sandwich/meta.h"

#include <charconv>

namespace sandwich {

namespace {

template <typename T>
void parse_number(const std::string& key, const std::string& text, T& out) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end || text.empty())
    throw UsageError("bad value for " + key + ": '" + text + "'");
  out = value;
}

}  // namespace

void parse_value(const std::string& key, const std::string& text, double& out) { parse_number(key, text, out); }
void parse_value(const std::string& key, const std::string& text, int& out) { parse_number(key, text, out); }
void parse_value(const std::string& key, const std::string& text, std::uint64_t& out) {
  parse_number(key, text, out);
}

void parse_value(const std::string& key, const std::string& text, bool& out) {
  if (text == "true" || text == "1") {
    out = true;
  } else if (text == "false" || text == "0") {
    out = false;
  } else {
    throw UsageError("bad boolean for " + key + ": '" + text + "'");
  }
}

void parse_value(const std::string&, const std::string& text, std::string& out) { out = text; }

}  // namespace sandwich
