#pragma once

#include <string_view>

namespace vlslice {

inline constexpr std::string_view kToolVersion = "vlslice 0.1.0";

}  // namespace vlslice
