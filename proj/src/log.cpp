#include "east/log.hpp"

#include <spdlog/sinks/stdout_sinks.h>

#include <cstdlib>
#include <string>

namespace east {

void init_logging() {
    auto logger = spdlog::stderr_logger_mt("east");
    spdlog::set_default_logger(logger);
    spdlog::set_pattern("[%H:%M:%S.%e] [%l] %v");
    auto level = spdlog::level::warn;
    if (const char * env = std::getenv("EAST_LOG"); env != nullptr && *env != '\0') {
        level = spdlog::level::from_str(env);
    }
    spdlog::set_level(level);
}

} // namespace east
