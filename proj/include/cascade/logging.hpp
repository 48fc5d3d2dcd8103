#pragma once

#include <string>

namespace cascade {

enum class LogLevel { Error = 0, Warn = 1, Info = 2, Debug = 3 };

/// Resolved once from CASCADE_LOG_LEVEL (error|warn|info|debug), warn by
/// default. Unknown values fall back to warn.
LogLevel log_level();

bool log_enabled(LogLevel level);

/// Writes "[level] message" to stderr when the level is enabled.
void log_message(LogLevel level, const std::string& message);

} // namespace cascade
