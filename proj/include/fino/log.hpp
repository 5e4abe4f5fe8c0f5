#pragma once

#include <atomic>
#include <iostream>
#include <string>

namespace fino {

enum class LogLevel { Quiet = 0, Warn = 1, Info = 2 };

inline std::atomic<LogLevel>& log_level() {
  static std::atomic<LogLevel> level{LogLevel::Warn};
  return level;
}

inline void log_info(const std::string& msg) {
  if (log_level().load() >= LogLevel::Info) std::clog << "[info] " << msg << '\n';
}

inline void log_warn(const std::string& msg) {
  if (log_level().load() >= LogLevel::Warn) std::clog << "[warn] " << msg << '\n';
}

}  // namespace fino
