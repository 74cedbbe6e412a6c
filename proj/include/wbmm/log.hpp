#pragma once

#include <atomic>
#include <iostream>
#include <mutex>
#include <string_view>

namespace wbmm::log {

enum class Level { debug = 0, info = 1, warning = 2, error = 3, silent = 4 };

inline std::atomic<Level>& threshold() {
  static std::atomic<Level> level{Level::info};
  return level;
}

inline void write(Level level, std::string_view tag, std::string_view msg) {
  if (level < threshold().load()) return;
  static std::mutex m;
  std::lock_guard lock(m);
  std::clog << '[' << tag << "] " << msg << '\n';
}

inline void debug(std::string_view msg) { write(Level::debug, "debug", msg); }
inline void info(std::string_view msg) { write(Level::info, "info", msg); }
inline void warn(std::string_view msg) { write(Level::warning, "warn", msg); }
inline void error(std::string_view msg) { write(Level::error, "error", msg); }

}  // namespace wbmm::log
