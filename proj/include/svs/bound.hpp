#pragma once

// Distortion lower bound: spend an average per-slot bit budget over the
// convex rate-distortion envelopes of all frame types, weighted by how often
// each type occurs in an intra period.

#include <algorithm>
#include <vector>

#include "svs/error.hpp"
#include "svs/stream.hpp"

namespace svs {

struct BoundResult {
  double lower_bound = 0;         // MSE
  std::vector<double> allocation; // z^k in bits, indexed by FrameType::index()
  double budget_used = 0;         // bits per slot
};

inline double type_weight(const StreamProfile& p, FrameType k) {
  return static_cast<double>(p.frames_per_period(k)) / p.f_intra();
}

// Greedy steepest-segment-first allocation; exact because every envelope is
// convex and piecewise linear.
inline BoundResult distortion_lower_bound(const StreamProfile& p, double r_avg) {
  require(r_avg >= 0.0, "range", "budget must be non-negative");
  struct Segment {
    int type;
    double slope;   // d per bit, <= 0
    double length;  // bits of z
  };
  const int types = p.num_frame_types();
  std::vector<PiecewiseLinearEnvelope> env;
  std::vector<Segment> segs;
  for (int k = 0; k < types; ++k) {
    env.push_back(convex_envelope(p, FrameType::from_index(k)));
    const auto& kn = env.back().knots;
    for (std::size_t j = 0; j + 1 < kn.size(); ++j)
      segs.push_back({k, (kn[j + 1].d - kn[j].d) / (kn[j + 1].z - kn[j].z), kn[j + 1].z - kn[j].z});
  }
  std::stable_sort(segs.begin(), segs.end(), [](const Segment& a, const Segment& b) { return a.slope < b.slope; });

  BoundResult r;
  r.allocation.assign(static_cast<std::size_t>(types), 0.0);
  double budget = r_avg;
  for (const auto& s : segs) {
    if (budget <= 0.0 || s.slope >= 0.0) break;
    const double w = type_weight(p, FrameType::from_index(s.type));
    if (w <= 0.0) continue;
    const double take = std::min(s.length, budget / w);
    r.allocation[static_cast<std::size_t>(s.type)] += take;
    budget -= take * w;
    r.budget_used += take * w;
  }
  for (int k = 0; k < types; ++k)
    r.lower_bound += type_weight(p, FrameType::from_index(k)) * env[static_cast<std::size_t>(k)](r.allocation[static_cast<std::size_t>(k)]);
  return r;
}

// Budget that covers every layer of every frame.
inline double full_rate_budget(const StreamProfile& p) {
  double b = 0;
  for (int k = 0; k < p.num_frame_types(); ++k) {
    const auto t = FrameType::from_index(k);
    b += type_weight(p, t) * static_cast<double>(p.frame_bits(t, p.quality_layers()));
  }
  return b;
}

}  // namespace svs
