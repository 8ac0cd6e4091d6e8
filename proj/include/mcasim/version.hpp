#pragma once

namespace mcasim {
inline constexpr const char* kVersion = "0.1.0";
}
