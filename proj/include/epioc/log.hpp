#pragma once

#include <fmt/core.h>

#include <cstdio>
#include <cstdlib>
#include <string_view>

namespace epioc::log {

enum class Level { error = 0, info = 1, debug = 2 };

/// Level from EPI_OC_LOG (error|info|debug); defaults to error.
inline Level level() {
    static const Level lvl = [] {
        const char* env = std::getenv("EPI_OC_LOG");
        if (!env) return Level::error;
        const std::string_view v(env);
        if (v == "debug") return Level::debug;
        if (v == "info") return Level::info;
        return Level::error;
    }();
    return lvl;
}

template <class... Args>
void write(Level lvl, fmt::format_string<Args...> f, Args&&... args) {
    if (static_cast<int>(lvl) > static_cast<int>(level())) return;
    static constexpr const char* tag[] = {"error", "info", "debug"};
    fmt::print(stderr, "[{}] {}\n", tag[static_cast<int>(lvl)], fmt::format(f, std::forward<Args>(args)...));
}

template <class... Args>
void error(fmt::format_string<Args...> f, Args&&... args) {
    write(Level::error, f, std::forward<Args>(args)...);
}
template <class... Args>
void info(fmt::format_string<Args...> f, Args&&... args) {
    write(Level::info, f, std::forward<Args>(args)...);
}
template <class... Args>
void debug(fmt::format_string<Args...> f, Args&&... args) {
    write(Level::debug, f, std::forward<Args>(args)...);
}

}  // namespace epioc::log
