#pragma once

#include <optional>
#include <string>

namespace hsi {

// Routes the default logger to stderr. The level comes from `level` when
// given, else from HSI_LOG, else "info". Throws on an unknown level name.
void init_logging(const std::optional<std::string>& level = std::nullopt);

} // namespace hsi
