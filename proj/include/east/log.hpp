#pragma once

#include <spdlog/spdlog.h>

namespace east {

// Routes the default spdlog logger to stderr at the level named by EAST_LOG
// (trace, debug, info, warn, error, off; default warn).
void init_logging();

} // namespace east
