#include "cascade/logging.hpp"

#include <cstdlib>
#include <iostream>
#include <mutex>

namespace cascade {

namespace {

LogLevel parse_level(const char* raw) {
    if (raw == nullptr) return LogLevel::Warn;
    const std::string value(raw);
    if (value == "error") return LogLevel::Error;
    if (value == "warn") return LogLevel::Warn;
    if (value == "info") return LogLevel::Info;
    if (value == "debug") return LogLevel::Debug;
    return LogLevel::Warn;
}

const char* level_name(LogLevel level) {
    switch (level) {
    case LogLevel::Error: return "error";
    case LogLevel::Warn: return "warn";
    case LogLevel::Info: return "info";
    case LogLevel::Debug: return "debug";
    }
    return "warn";
}

std::mutex& log_mutex() {
    static std::mutex m;
    return m;
}

} // namespace

LogLevel log_level() {
    static const LogLevel level = parse_level(std::getenv("CASCADE_LOG_LEVEL"));
    return level;
}

bool log_enabled(LogLevel level) {
    return static_cast<int>(level) <= static_cast<int>(log_level());
}

void log_message(LogLevel level, const std::string& message) {
    if (!log_enabled(level)) return;
    std::lock_guard<std::mutex> lock(log_mutex());
    std::cerr << '[' << level_name(level) << "] " << message << '\n';
}

} // namespace cascade
