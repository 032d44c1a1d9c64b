#pragma once

namespace reloop {

inline constexpr const char* kToolName = "reloop";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace reloop
