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

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "herdcast/trial.hpp"

namespace herdcast::analysis {

struct MovementTimes {
  std::vector<double> durations_ms;
  std::size_t switches = 0;  // direct changes between two nonzero IDs
  std::size_t skipped = 0;   // switches without a leave or enter crossing
};

// For every direct switch p -> q (p, q != 0) of either herder: time the
// herder first enters q's repulsion radius (closing) after the switch minus
// the last time it left p's radius (receding) before that. Crossing instants
// are the first frame on the new side.
MovementTimes inter_target_times(const Trial& trial, double repulsion_radius);

struct HerdingMeasures {
  double t_g = 0.0;      // s
  double d_g = 0.0;      // m, mean herder path length over [0, t_g]
  double D_g = 0.0;      // m
  double S_g = 0.0;      // m^2, mean convex hull area of the targets
  double S_g_pct = 0.0;  // S_g relative to the containment area
  double I_pct = 0.0;    // time-mean share of targets inside r*
};

// All averages run over frames 0..g, where g is the first fully contained
// frame (the last frame when the herd is never gathered).
HerdingMeasures herding_measures(const Trial& trial, double containment_radius);

// Area of the convex hull of the points (0 when collinear).
double convex_hull_area(std::span<const Vec2> points);

// CSV outputs.
void write_measures_csv(std::ostream& out, std::span<const Trial> trials, double containment_radius);
// Histogram of durations in `bin_ms` bins starting at the smallest multiple
// of bin_ms at or below the minimum.
void write_histogram_csv(std::ostream& out, std::span<const double> durations_ms, double bin_ms = 40.0);

}  // namespace herdcast::analysis
