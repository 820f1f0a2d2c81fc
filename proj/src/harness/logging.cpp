#include "berth/harness/logging.hpp"

#include <cstdlib>

#include <spdlog/spdlog.h>

namespace berth::harness {

void init_logging() {
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");
  spdlog::set_level(spdlog::level::info);
  if (const char* env = std::getenv("BERTH_LOG")) {
    const auto level = spdlog::level::from_str(env);
    // from_str maps unknown names to off; only honour it when asked for.
    if (level != spdlog::level::off || std::string_view(env) == "off") {
      spdlog::set_level(level);
    }
  }
}

}  // namespace berth::harness
