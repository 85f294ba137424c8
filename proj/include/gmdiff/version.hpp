#pragma once

namespace gmdiff {

inline constexpr const char* kToolName = "gmdiff";
inline constexpr const char* kVersion = "1.0.0";

}  // namespace gmdiff
