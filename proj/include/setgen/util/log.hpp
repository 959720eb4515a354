#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

namespace setgen::log {

enum class Level { debug = 0, info = 1, warn = 2, err = 3, off = 4 };

// Verbosity comes from SETGEN_LOG (debug|info|warn|error|off), default warn
// so library users and tests stay quiet unless they opt in.
inline Level& threshold() {
    static Level lvl = [] {
        const char* env = std::getenv("SETGEN_LOG");
        if (!env) return Level::warn;
        if (!std::strcmp(env, "debug")) return Level::debug;
        if (!std::strcmp(env, "info")) return Level::info;
        if (!std::strcmp(env, "warn")) return Level::warn;
        if (!std::strcmp(env, "error")) return Level::err;
        if (!std::strcmp(env, "off")) return Level::off;
        return Level::warn;
    }();
    return lvl;
}

inline void emit(Level lvl, const char* tag, const std::string& msg) {
    if (lvl < threshold()) return;
    std::fprintf(stderr, "[%s] %s\n", tag, msg.c_str());
}

inline void debug(const std::string& msg) { emit(Level::debug, "debug", msg); }
inline void info(const std::string& msg) { emit(Level::info, "info", msg); }
inline void warn(const std::string& msg) { emit(Level::warn, "warn", msg); }
inline void error(const std::string& msg) { emit(Level::err, "error", msg); }

}  // namespace setgen::log
