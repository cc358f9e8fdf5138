#pragma once

namespace interfere {

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace interfere
