#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace rlplace::log {

enum class Level { Debug = 0, Info = 1, Warn = 2 };

// Level comes from RLPLACE_LOG=debug|info|warn; default warn so library
// output stays quiet unless asked for.
inline Level threshold() {
    static Level lvl = [] {
        const char* env = std::getenv("RLPLACE_LOG");
        if (env) {
            if (std::strcmp(env, "debug") == 0) return Level::Debug;
            if (std::strcmp(env, "info") == 0) return Level::Info;
        }
        return Level::Warn;
    }();
    return lvl;
}

template <typename... Args>
void emit(Level lvl, const char* tag, const char* fmt, Args... args) {
    if (lvl < threshold()) return;
    std::fprintf(stderr, "[%s] ", tag);
    std::fprintf(stderr, fmt, args...);
    std::fprintf(stderr, "\n");
}

template <typename... Args>
void debug(const char* fmt, Args... args) { emit(Level::Debug, "debug", fmt, args...); }
template <typename... Args>
void info(const char* fmt, Args... args) { emit(Level::Info, "info", fmt, args...); }
template <typename... Args>
void warn(const char* fmt, Args... args) { emit(Level::Warn, "warn", fmt, args...); }

}  // namespace rlplace::log
