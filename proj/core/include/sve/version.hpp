#pragma once

namespace sve {

inline constexpr const char* kVersionString = "sve 0.1.0";

} // namespace sve
