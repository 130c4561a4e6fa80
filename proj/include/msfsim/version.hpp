#pragma once

namespace msfsim {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace msfsim
