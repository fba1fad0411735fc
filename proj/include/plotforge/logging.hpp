#pragma once

// Thin wrappers over spdlog. The level comes from PLOTFORGE_LOG
// (error, warn, info, debug; default info). Messages go to stderr so that
// command output on stdout stays machine-readable.

#include <spdlog/spdlog.h>

#include <string_view>

namespace plotforge::logging {

// Reads PLOTFORGE_LOG once and installs the stderr logger. Safe to call
// repeatedly; later calls are no-ops unless `force` is set.
void init(bool force = false);
void set_level(std::string_view level);

template <class... Args>
void debug(fmt::format_string<Args...> fmt, Args&&... args) {
  init();
  spdlog::debug(fmt, std::forward<Args>(args)...);
}
template <class... Args>
void info(fmt::format_string<Args...> fmt, Args&&... args) {
  init();
  spdlog::info(fmt, std::forward<Args>(args)...);
}
template <class... Args>
void warn(fmt::format_string<Args...> fmt, Args&&... args) {
  init();
  spdlog::warn(fmt, std::forward<Args>(args)...);
}
template <class... Args>
void error(fmt::format_string<Args...> fmt, Args&&... args) {
  init();
  spdlog::error(fmt, std::forward<Args>(args)...);
}

}  // namespace plotforge::logging
