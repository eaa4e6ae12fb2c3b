#pragma once

#include <cstdlib>
#include <iostream>
#include <stdexcept>
#include <string>

namespace sdplab {

// Base class for every structured error the library throws.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Shape / conformability violations (names both shapes in the message).
struct DimensionError : Error {
    using Error::Error;
};

// Invalid argument values (negative std, NaN keys, tau <= 0, ...).
struct ValueError : Error {
    using Error::Error;
};

// Filesystem problems: missing file, unwritable path.
struct IoError : Error {
    using Error::Error;
};

// Malformed textual input (CSV cells, config lines); messages are positional.
struct ParseError : Error {
    using Error::Error;
};

// Experiment configuration rejected during validate-then-run.
struct ConfigError : Error {
    using Error::Error;
};

// Checkpoint file defects, split by kind so callers can distinguish them.
struct CheckpointError : Error {
    enum class Kind { version, truncated, shape };
    Kind kind;
    CheckpointError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

// Training loss went non-finite.
struct DivergenceError : Error {
    using Error::Error;
};

// A forward trace no longer matches the network it came from.
struct StaleTraceError : Error {
    using Error::Error;
};

// Minimal stderr logger, level from SDPLAB_LOG (quiet|info|debug, default info).
enum class LogLevel { quiet = 0, info = 1, debug = 2 };

inline LogLevel log_level() {
    static const LogLevel level = [] {
        const char* env = std::getenv("SDPLAB_LOG");
        if (env == nullptr) return LogLevel::info;
        const std::string v(env);
        if (v == "quiet") return LogLevel::quiet;
        if (v == "debug") return LogLevel::debug;
        return LogLevel::info;
    }();
    return level;
}

inline void log_note(const std::string& msg) {
    if (log_level() >= LogLevel::info) std::cerr << "[sdplab] " << msg << "\n";
}

inline void log_debug(const std::string& msg) {
    if (log_level() >= LogLevel::debug) std::cerr << "[sdplab:debug] " << msg << "\n";
}

}  // namespace sdplab
