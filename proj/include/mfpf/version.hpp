#pragma once

namespace mfpf {
inline constexpr const char* kToolVersion = "mfpf 1.0.0";
}
