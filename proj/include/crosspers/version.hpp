#pragma once

namespace crosspers {

inline constexpr const char* kVersion = "crosspers 0.1.0";

}
