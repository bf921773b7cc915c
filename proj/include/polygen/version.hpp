#pragma once

namespace polygen {

inline constexpr const char* kVersion = "0.1.0";

}
