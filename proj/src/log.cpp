#include "hsi/log.hpp"
#include "hsi/common.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <cstdlib>

namespace hsi {

void init_logging(const std::optional<std::string>& level)
{
    std::string name = "info";
    if (level) {
        name = *level;
    } else if (const char* env = std::getenv("HSI_LOG"); env && *env) {
        name = env;
    }
    const auto parsed = spdlog::level::from_str(name);
    // from_str maps unknown names to off; only accept "off" when asked for.
    if (parsed == spdlog::level::off && name != "off") {
        throw Error("unknown log level '" + name + "' (trace, debug, info, warn, error, critical, off)");
    }
    static const auto logger = [] {
        auto l = spdlog::stderr_color_mt("hsi");
        spdlog::set_default_logger(l);
        return l;
    }();
    logger->set_level(parsed);
    spdlog::set_pattern("[%H:%M:%S.%e] [%^%l%$] %v");
}

} // namespace hsi
