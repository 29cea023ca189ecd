// Copyright 2026 The insectleaf Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstddef>

namespace insectleaf::fixtures {

/// Recordings per species of the reference corpus (32 species, 335 files).
inline constexpr std::array<std::size_t, 32> kReferenceFileCounts{
    20, 13, 22, 18, 14, 15, 17, 12, 16,               // Orthoptera
    4,  5,  6,  7,  4,  7,  5,  6,  6,  22, 7,  9,   // Cicadidae, first column
    6,  5,  6,  5,  19, 8,  16, 4,  10, 12, 9};      // Cicadidae, second column

/// Validation losses per epoch of the two reference training logs.
inline constexpr std::array<double, 34> kMelValidationLosses{
    2.87, 2.44, 2.15, 1.99, 1.92, 1.83, 1.73, 1.74, 1.66, 1.66, 1.69, 1.70, 1.68, 1.74, 1.73, 1.58, 1.62,
    1.72, 1.63, 1.75, 1.65, 1.60, 1.68, 1.56, 1.56, 1.37, 1.45, 1.46, 1.60, 1.65, 1.77, 1.48, 1.46, 1.52};

inline constexpr std::array<double, 38> kLeafValidationLosses{
    2.85, 2.33, 2.06, 1.85, 1.63, 1.57, 1.78, 1.96, 1.32, 1.82, 1.74, 1.42, 1.37, 2.18, 1.58, 1.77, 1.26, 1.41, 1.30,
    1.23, 1.16, 1.40, 1.26, 1.07, 1.30, 1.17, 1.26, 1.12, 1.08, 1.00, 1.03, 1.03, 1.08, 1.17, 1.21, 1.07, 1.16, 1.13};

/// Patience counters printed alongside those losses.
inline constexpr std::array<std::size_t, 34> kMelPatience{0, 0, 0, 0, 0, 0, 0, 1, 0, 0, 1, 2, 3, 4, 5, 0, 1,
                                                          2, 3, 4, 5, 6, 7, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8};
inline constexpr std::array<std::size_t, 38> kLeafPatience{0, 0, 0, 0, 0, 0, 1, 2, 0, 1, 2, 3, 4, 5, 6, 7, 0, 1, 2,
                                                           0, 0, 1, 2, 0, 1, 2, 3, 4, 5, 0, 1, 2, 3, 4, 5, 6, 7, 8};

}  // namespace insectleaf::fixtures
