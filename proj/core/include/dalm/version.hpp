#pragma once

namespace dalm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace dalm
