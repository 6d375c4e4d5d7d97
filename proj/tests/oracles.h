/* Copyright 2026 The tpflex Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Independent oracles and random instance generators for the planning
// solvers. Shared by the unit tests and the acceptance binary.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

#include "tpflex/rng.h"
#include "tpflex/semi.h"

namespace tpflex::testing {

// Strictly increasing x, non-decreasing y, starting at the origin.
inline PiecewiseLinear random_monotone_curve(Rng& rng, double x_span,
                                             double y_span) {
  const int knots = 2 + static_cast<int>(rng.below(4));
  std::vector<std::pair<double, double>> pts = {{0.0, 0.0}};
  double x = 0.0, y = 0.0;
  for (int k = 0; k < knots; ++k) {
    x += rng.uniform(0.05, 1.0) * x_span / knots;
    y += rng.uniform(0.0, 1.0) * y_span / knots;
    pts.emplace_back(x, y);
  }
  return PiecewiseLinear(std::move(pts));
}

// f evaluated straight from its definition, one position at a time.
inline double boundary_f(const std::vector<RankLoad>& sorted, std::size_t x,
                         double t_min, const PiecewiseLinear& phi1, int e) {
  double volume = 0.0;
  for (std::size_t k = 1; k <= x; ++k) {
    const RankLoad& s = sorted[k - 1];
    volume += s.l * (s.t - t_min) / s.t;
  }
  double helper = 0.0;
  for (std::size_t y = x + 1; y <= sorted.size(); ++y) {
    helper = std::max(helper, volume / static_cast<double>(e - static_cast<int>(x)) *
                                  sorted[y - 1].speed);
  }
  return (sorted[x - 1].t - t_min) - phi1(volume) - helper;
}

// Evaluates f at every x in [1, z] first, then takes the longest prefix on
// which it stays positive.
inline std::size_t brute_force_boundary(const std::vector<RankLoad>& sorted,
                                        std::size_t z, double t_min,
                                        const PiecewiseLinear& phi1, int e) {
  std::vector<double> f;
  for (std::size_t x = 1; x <= z; ++x) {
    f.push_back(boundary_f(sorted, x, t_min, phi1, e));
  }
  std::size_t best = 0;
  while (best < f.size() && f[best] > 0.0) ++best;
  return best;
}

struct BoundaryInstance {
  int e = 0;
  std::size_t z = 0;
  double t_min = 0.0;
  std::vector<RankLoad> sorted;  // stragglers first, then the rest
  CostModel cm;
};

inline BoundaryInstance random_boundary_instance(Rng& rng) {
  BoundaryInstance in;
  in.e = 2 + static_cast<int>(rng.below(7));
  const int max_z = std::min(6, in.e - 1);
  const int z = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_z)));
  in.t_min = rng.uniform(5.0, 20.0);
  const double width = static_cast<double>(8 + rng.below(120));
  std::vector<double> slow;
  for (int k = 0; k < z; ++k) slow.push_back(in.t_min * rng.uniform(1.05, 6.0));
  std::sort(slow.rbegin(), slow.rend());
  for (int k = 0; k < in.e; ++k) {
    const double t = k < z ? slow[static_cast<std::size_t>(k)] : in.t_min;
    in.sorted.push_back({k + 1, t, width, t / width});
  }
  in.z = static_cast<std::size_t>(z);
  in.cm.omega2 = PiecewiseLinear::zero();
  in.cm.phi2 = PiecewiseLinear::zero();
  in.cm.phi1 = random_monotone_curve(rng, width * z,
                                     rng.uniform(0.5, 20.0) * in.t_min * z);
  return in;
}

struct BetaInstance {
  double l_gamma = 0.0;
  int e = 0;
  CostModel cm;
};

inline BetaInstance random_beta_instance(Rng& rng) {
  BetaInstance in;
  in.e = 2 + static_cast<int>(rng.below(7));
  in.l_gamma = rng.uniform(1.0, 200.0);
  const double scale = rng.uniform(0.1, 50.0);
  in.cm.omega1 = rng.uniform(0.0, 0.5) * scale;
  in.cm.omega2 = random_monotone_curve(rng, in.l_gamma, scale);
  in.cm.phi1 = random_monotone_curve(rng, in.l_gamma, scale);
  in.cm.phi2 = random_monotone_curve(rng, in.l_gamma, scale);
  return in;
}

struct BetaCheck {
  bool ok = false;
  double residual = 0.0;
  double scale = 0.0;
};

// Interior roots must balance both sides; endpoints must have the
// inequality pointing the right way.
inline BetaCheck check_beta(const BetaInstance& in, double beta) {
  const double helpers = static_cast<double>(in.e - 1);
  auto lhs = [&](double b) {
    return in.cm.omega1 + in.cm.omega2(in.l_gamma * (1.0 - b));
  };
  auto rhs = [&](double b) {
    return in.cm.phi1(in.l_gamma * b) + in.cm.phi2(in.l_gamma * b / helpers);
  };
  BetaCheck c;
  c.scale = std::max(lhs(0.0), rhs(1.0));
  c.residual = lhs(beta) - rhs(beta);
  if (beta == 1.0 && c.residual >= 0.0) {
    c.ok = true;
  } else if (beta == 0.0 && c.residual <= 0.0) {
    c.ok = true;
  } else {
    c.ok = beta >= 0.0 && beta <= 1.0 &&
           std::abs(c.residual) <= 1e-6 * c.scale;
  }
  return c;
}

}  // namespace tpflex::testing
