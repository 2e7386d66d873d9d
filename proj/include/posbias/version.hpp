#pragma once

namespace posbias {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace posbias
