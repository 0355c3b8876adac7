#pragma once

namespace ratchet {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace ratchet
