#pragma once

// Flat "key = value" scenario files. '#' starts a comment; unknown and
// duplicate keys are rejected.
//
//   scenario   = q05_delta5
//   q          = 0.5
//   delta      = 5
//   rho        = 1
//   nu         = 4
//   K          = 100
//   n_sats     = 8
//   n_mc       = 100
//   seed       = 1
//   estimators = stf, sts, kf_gated, rtss_gated

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "skewt_estim/bench/gnss.hpp"
#include "skewt_estim/errors.hpp"

namespace skewt_estim::bench {

class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end)
    throw ConfigError("config: bad value for '" + std::string(key) + "': '" + std::string(text) + "'");
  return value;
}

}  // namespace detail

inline bool is_known_estimator(std::string_view name) {
  static const std::set<std::string_view> known{"stf", "stf_rand", "sts", "kf_gated", "rtss_gated",
                                                "pf"};
  if (known.contains(name)) return true;
  if (name.starts_with("pf:")) {
    std::size_t n = 0;
    const auto digits = name.substr(3);
    const auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
    return ec == std::errc{} && ptr == digits.data() + digits.size() && n >= 100;
  }
  return false;
}

inline ScenarioConfig parse_config(std::istream& in) {
  ScenarioConfig cfg;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = detail::trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(detail::trim(view.substr(0, eq)));
    const std::string_view value = detail::trim(view.substr(eq + 1));
    if (!seen.insert(key).second) throw ConfigError("config: duplicate key '" + key + "'");

    if (key == "scenario") {
      if (value.empty() || value.find(',') != std::string_view::npos)
        throw ConfigError("config: scenario must be a non-empty name without commas");
      cfg.scenario = std::string(value);
    } else if (key == "q") {
      cfg.q = detail::parse_number<double>(key, value);
    } else if (key == "delta") {
      cfg.delta = detail::parse_number<double>(key, value);
    } else if (key == "rho") {
      cfg.rho = detail::parse_number<double>(key, value);
    } else if (key == "nu") {
      cfg.nu = detail::parse_number<double>(key, value);
    } else if (key == "K") {
      cfg.K = detail::parse_number<std::size_t>(key, value);
    } else if (key == "n_sats") {
      cfg.n_sats = detail::parse_number<std::size_t>(key, value);
    } else if (key == "n_mc") {
      cfg.n_mc = detail::parse_number<std::size_t>(key, value);
    } else if (key == "seed") {
      cfg.seed = detail::parse_number<std::uint64_t>(key, value);
    } else if (key == "estimators") {
      cfg.estimators.clear();
      std::string_view rest = value;
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        const auto name = detail::trim(rest.substr(0, comma));
        if (!name.empty()) {
          if (!is_known_estimator(name))
            throw ConfigError("config: unknown estimator '" + std::string(name) + "'");
          cfg.estimators.emplace_back(name);
        }
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
      }
    } else {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  try {
    cfg.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

inline ScenarioConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path + "'");
  return parse_config(in);
}

}  // namespace skewt_estim::bench
