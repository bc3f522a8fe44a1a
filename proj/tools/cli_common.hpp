#pragma once

#include "nbiot/apps/iq_io.hpp"
#include "nbiot/rate_model.hpp"
#include "nbiot/scheduler.hpp"

#include <CLI11.hpp>

#include <map>
#include <string>

namespace nbiot::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_failure = 1;
inline constexpr int exit_config = 2;
inline constexpr int exit_no_signal = 3;

inline const std::map<std::string, alloc_policy> policy_names{{"static", alloc_policy::static_alloc},
                                                              {"greedy", alloc_policy::greedy}};
inline const std::map<std::string, rlc_mode> mode_names{{"um", rlc_mode::um}, {"am", rlc_mode::am}};

/// "tcp:PORT" or "tcp:HOST:PORT" selects a socket; anything else is a file path.
struct iq_endpoint {
  bool tcp = false;
  std::string host = "127.0.0.1";
  uint16_t port = 0;
  std::string path;
};

inline iq_endpoint parse_endpoint(const std::string& spec)
{
  iq_endpoint e;
  if (spec.rfind("tcp:", 0) != 0) {
    e.path = spec;
    return e;
  }
  e.tcp = true;
  std::string rest = spec.substr(4);
  if (const auto colon = rest.rfind(':'); colon != std::string::npos) {
    e.host = rest.substr(0, colon);
    rest = rest.substr(colon + 1);
  }
  try {
    const unsigned long p = std::stoul(rest);
    if (p == 0 || p > 65535) {
      throw std::out_of_range(rest);
    }
    e.port = uint16_t(p);
  } catch (const std::exception&) {
    raise(error_code::invalid_config, "bad port in " + spec);
  }
  return e;
}

/// Maps library errors to the documented exit codes.
inline int exit_code_for(const error& e)
{
  switch (e.code()) {
    case error_code::invalid_config:
    case error_code::invalid_command:
    case error_code::out_of_range:
      return exit_config;
    case error_code::no_signal:
      return exit_no_signal;
    default:
      return exit_failure;
  }
}

} // namespace nbiot::cli
