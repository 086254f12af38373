#pragma once

namespace tcace {

inline constexpr const char* library_name = "tcace";
inline constexpr const char* library_version = "0.1.0";

}  // namespace tcace
