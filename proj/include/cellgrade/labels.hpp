// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>

namespace cellgrade {

using ClassId = int;

inline constexpr ClassId kUninfected = 0;
inline constexpr ClassId kParasitized = 1;
inline constexpr std::size_t kNumClasses = 2;

}  // namespace cellgrade
