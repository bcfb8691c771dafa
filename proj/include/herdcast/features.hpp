/*
 * Copyright 2026 The herdcast Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "herdcast/trial.hpp"

namespace herdcast::features {

inline constexpr std::size_t kNumFeatures = 48;

// Canonical layout of the focal-herder state vector.
namespace layout {
inline constexpr std::size_t kHerderPair = 0;        // Δ, Ψ focal -> co-herder
inline constexpr std::size_t kTargetsFromSelf = 2;   // (Δ, Ψ) per target
inline constexpr std::size_t kTargetsFromCo = 10;    // (Δ, Ψ) per target
inline constexpr std::size_t kSelfFromCenter = 18;   // (r, angle)
inline constexpr std::size_t kCoFromCenter = 20;     // (r, angle)
inline constexpr std::size_t kTargetsFromCenter = 22;
inline constexpr std::size_t kSelfRadial = 30;       // (dr/dt, d2r/dt2)
inline constexpr std::size_t kCoRadial = 32;
inline constexpr std::size_t kTargetsRadial = 34;
inline constexpr std::size_t kSelfHeading = 42;
inline constexpr std::size_t kCoHeading = 43;
inline constexpr std::size_t kTargetsHeading = 44;
static_assert(kTargetsHeading + kNumTargets == kNumFeatures);
}  // namespace layout

using StateVector = std::array<double, kNumFeatures>;
// Row-major frames x 48.
using FeatureTable = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Polar {
  double dist = 0.0;
  double angle = 0.0;
};

// Distance and world-frame bearing of b seen from a; bearing is 0 when a == b.
Polar polar_offset(Vec2 a, Vec2 b);

struct KinematicsSeries {
  std::vector<double> radial_velocity;
  std::vector<double> radial_acceleration;
  std::vector<double> direction;
};

// Radial velocity/acceleration of the distance from `center` and heading of
// motion. Derivatives use central differences with one-sided stencils at the
// ends. Headings come from recorded velocities when every frame has one,
// otherwise from differenced positions.
KinematicsSeries kinematics_series(std::span<const Vec2> positions, double hz, Vec2 center = {},
                                   std::span<const std::optional<Vec2>> velocities = {});

StateVector extract_features(const Trial& trial, std::size_t frame, int focal, Vec2 center = {});

// extract_features for every frame of the trial at once.
FeatureTable feature_table(const Trial& trial, int focal, Vec2 center = {});

std::string_view feature_name(std::size_t index);

// Binary feature matrix export (.hxf).
void write_hxf(const std::filesystem::path& path, const FeatureTable& table);
FeatureTable read_hxf(const std::filesystem::path& path);

}  // namespace herdcast::features
