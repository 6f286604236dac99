#pragma once

namespace robustrisk {

inline constexpr const char* kVersion = "0.1.0";

} // namespace robustrisk
