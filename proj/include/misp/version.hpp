#pragma once

namespace misp {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace misp
