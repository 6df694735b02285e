#pragma once

namespace sdesched {

/// Library/tool release version (CMake project version mirrors this).
inline constexpr const char* kToolVersion = "1.0.0";
/// On-disk format version shared by the CSV/JSON/binary writers.
inline constexpr int kFormatVersion = 1;

}  // namespace sdesched
