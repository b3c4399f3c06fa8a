#ifndef CONEBOOT_LOG_HPP
#define CONEBOOT_LOG_HPP

#include <cstdlib>
#include <string>

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

namespace coneboot {

/// Routes logging to stderr. The level comes from `level` when non-empty,
/// else from CONEBOOT_LOG, else "info".
inline void configure_logging(const std::string& level = {}) {
    static const auto logger = [] {
        auto l = spdlog::stderr_color_mt("coneboot");
        spdlog::set_default_logger(l);
        spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
        return l;
    }();
    std::string name = level;
    if (name.empty()) {
        const char* env = std::getenv("CONEBOOT_LOG");
        name = env != nullptr ? env : "info";
    }
    const auto parsed = spdlog::level::from_str(name);
    // from_str maps unknown names to "off"; only honor that when asked for.
    logger->set_level(parsed == spdlog::level::off && name != "off" ? spdlog::level::info : parsed);
}

} // namespace coneboot

#endif
