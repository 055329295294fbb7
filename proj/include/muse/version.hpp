#pragma once

namespace muse {

inline constexpr const char* kArtifactVersion = "0.1.0";
inline constexpr int kRecordSchemaVersion = 1;

}  // namespace muse
