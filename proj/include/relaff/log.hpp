#pragma once

#include <spdlog/spdlog.h>

namespace relaff {

// Reads RELAFF_LOG (error|info|debug, default info) and configures the
// default logger to write to stderr. Safe to call more than once.
void init_logging();

}  // namespace relaff
