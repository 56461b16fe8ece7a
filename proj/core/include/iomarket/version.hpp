#pragma once

namespace iomarket {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace iomarket
