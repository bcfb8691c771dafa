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

#include "herdcast/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

namespace herdcast::analysis {
namespace {

double herder_target_distance(const Frame& f, int herder, int target_id) {
  return distance(f.herders[herder].pos, f.targets[target_id - 1].pos);
}

}  // namespace

MovementTimes inter_target_times(const Trial& trial, double repulsion_radius) {
  if (!trial.labeled()) throw Error("ANALYSIS_UNLABELED", "trial '" + trial.trial_id + "' has no labels");
  MovementTimes out;
  const auto& fr = trial.frames;
  const std::size_t n = fr.size();
  for (int h = 0; h < kNumHerders; ++h) {
    auto label = [&](std::size_t i) { return (*fr[i].labels)[h]; };
    std::size_t segment_start = 0;  // first frame carrying the current label
    for (std::size_t s = 1; s < n; ++s) {
      const int p = label(s - 1), q = label(s);
      if (p == q) continue;
      const std::size_t prev_start = segment_start;
      segment_start = s;
      if (p == 0 || q == 0) continue;
      ++out.switches;

      std::size_t next_change = s + 1;
      while (next_change < n && label(next_change) == q) ++next_change;
      std::size_t enter = n;
      for (std::size_t j = s; j < next_change && j < n; ++j)
        if (j > 0 && herder_target_distance(fr[j - 1], h, q) >= repulsion_radius &&
            herder_target_distance(fr[j], h, q) < repulsion_radius) {
          enter = j;
          break;
        }
      if (enter == n) {
        ++out.skipped;
        continue;
      }
      std::size_t leave = n;
      for (std::size_t j = enter; j > prev_start; --j)
        if (herder_target_distance(fr[j - 1], h, p) < repulsion_radius &&
            herder_target_distance(fr[j], h, p) >= repulsion_radius) {
          leave = j;
          break;
        }
      if (leave == n) {
        ++out.skipped;
        continue;
      }
      out.durations_ms.push_back(1000.0 * (fr[enter].t - fr[leave].t));
    }
  }
  return out;
}

double convex_hull_area(std::span<const Vec2> points) {
  std::vector<Vec2> p(points.begin(), points.end());
  if (p.size() < 3) return 0.0;
  std::sort(p.begin(), p.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  std::vector<Vec2> hull(2 * p.size());
  std::size_t k = 0;
  // Andrew's monotone chain.
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(hull[k - 1] - hull[k - 2], p[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, lower = k + 1; i-- > 0;) {
    while (k >= lower && cross(hull[k - 1] - hull[k - 2], p[i] - hull[k - 2]) <= 0) --k;
    hull[k++] = p[i];
  }
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < k; ++i) area += cross(hull[i], hull[i + 1]);
  return std::abs(area) / 2.0;
}

HerdingMeasures herding_measures(const Trial& trial, double containment_radius) {
  if (trial.frames.empty()) throw Error("ANALYSIS_EMPTY", "trial '" + trial.trial_id + "' has no frames");
  const auto& fr = trial.frames;
  std::size_t g = fr.size() - 1;
  for (std::size_t i = 0; i < fr.size(); ++i) {
    bool all_in = true;
    for (const auto& t : fr[i].targets) all_in = all_in && t.pos.norm() <= containment_radius;
    if (all_in) {
      g = i;
      break;
    }
  }
  HerdingMeasures m;
  m.t_g = fr[g].t - fr.front().t;
  double path = 0.0;
  for (int h = 0; h < kNumHerders; ++h)
    for (std::size_t i = 1; i <= g; ++i) path += distance(fr[i - 1].herders[h].pos, fr[i].herders[h].pos);
  m.d_g = path / kNumHerders;

  double dist = 0.0, hull = 0.0, inside = 0.0;
  for (std::size_t i = 0; i <= g; ++i) {
    std::array<Vec2, kNumTargets> pts;
    for (int k = 0; k < kNumTargets; ++k) {
      pts[k] = fr[i].targets[k].pos;
      const double r = pts[k].norm();
      dist += r / kNumTargets;
      inside += r <= containment_radius ? 1.0 / kNumTargets : 0.0;
    }
    hull += convex_hull_area(pts);
  }
  const double frames = static_cast<double>(g + 1);
  m.D_g = dist / frames;
  m.S_g = hull / frames;
  constexpr double kPi = 3.14159265358979323846;
  m.S_g_pct = m.S_g / (kPi * containment_radius * containment_radius) * 100.0;
  m.I_pct = inside / frames * 100.0;
  return m;
}

void write_measures_csv(std::ostream& out, std::span<const Trial> trials, double containment_radius) {
  out << "trial_id,expertise,success,t_g,d_g,D_g,S_g,S_g_pct,I_pct\n";
  char buf[256];
  for (const auto& t : trials) {
    const auto m = herding_measures(t, containment_radius);
    std::snprintf(buf, sizeof buf, ",%d,%.4f,%.6f,%.6f,%.6f,%.6f,%.6f\n", t.success ? 1 : 0, m.t_g, m.d_g, m.D_g,
                  m.S_g, m.S_g_pct, m.I_pct);
    out << t.trial_id << ',' << to_string(t.expertise) << buf;
  }
}

void write_histogram_csv(std::ostream& out, std::span<const double> durations_ms, double bin_ms) {
  if (!(bin_ms > 0)) throw Error("ANALYSIS_ARGS", "histogram bin width must be > 0");
  out << "bin_start_ms,bin_end_ms,count,fraction\n";
  if (durations_ms.empty()) return;
  std::map<long, std::size_t> bins;
  for (double d : durations_ms) ++bins[static_cast<long>(std::floor(d / bin_ms + 1e-9))];
  const long lo = bins.begin()->first, hi = bins.rbegin()->first;
  char buf[128];
  for (long b = lo; b <= hi; ++b) {
    const auto it = bins.find(b);
    const std::size_t c = it == bins.end() ? 0 : it->second;
    std::snprintf(buf, sizeof buf, "%g,%g,%zu,%.6f\n", b * bin_ms, (b + 1) * bin_ms, c,
                  static_cast<double>(c) / static_cast<double>(durations_ms.size()));
    out << buf;
  }
}

}  // namespace herdcast::analysis
