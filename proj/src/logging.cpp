#include "plotforge/logging.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>
#include <mutex>

#include "plotforge/errors.hpp"

namespace plotforge::logging {

namespace {
std::once_flag g_once;

void install() {
  auto logger = spdlog::stderr_color_mt("plotforge");
  logger->set_pattern("[%l] %v");
  spdlog::set_default_logger(logger);
  const char* env = std::getenv("PLOTFORGE_LOG");
  set_level(env ? env : "info");
}
}  // namespace

void init(bool force) {
  std::call_once(g_once, install);
  if (force) {
    const char* env = std::getenv("PLOTFORGE_LOG");
    set_level(env ? env : "info");
  }
}

void set_level(std::string_view level) {
  spdlog::level::level_enum lv;
  if (level == "error") {
    lv = spdlog::level::err;
  } else if (level == "warn") {
    lv = spdlog::level::warn;
  } else if (level == "info") {
    lv = spdlog::level::info;
  } else if (level == "debug") {
    lv = spdlog::level::debug;
  } else {
    throw ValidationError("PLOTFORGE_LOG must be one of error, warn, info, debug (got '" + std::string(level) + "')");
  }
  spdlog::set_level(lv);
}

}  // namespace plotforge::logging
