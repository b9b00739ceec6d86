#pragma once

// Online heuristic: forecast the next zeta slots of capacity with an AR(1)
// model, pick how many layers to chase, and split the slot budget between the
// current intra period and the next I frame.

#include <algorithm>
#include <limits>
#include <vector>

#include "svs/buffer.hpp"
#include "svs/channel.hpp"
#include "svs/error.hpp"
#include "svs/stream.hpp"

namespace svs {

struct OnlineParams {
  Ar1Model ar1;
  bool i_preemption = true;
};

// Missing bits in layers [0, layers) over the next `zeta` undecoded frames.
inline double gamma(const StreamProfile& p, const FrameBuffer& b, int first_undecoded, int layers, int zeta) {
  require(layers >= 1 && layers <= p.quality_layers() + 1, "range", "layer count out of range");
  require(zeta >= 1, "range", "zeta must be >= 1");
  if (layers == p.quality_layers() + 1) return std::numeric_limits<double>::infinity();
  double s = 0;
  for (int f = first_undecoded; f < first_undecoded + zeta; ++f) {
    const auto k = frame_type(p, b, f);
    for (int l = b.count(f); l < layers; ++l) s += static_cast<double>(p.unit_bits(k, l));
  }
  return s;
}

inline int select_layers(const StreamProfile& p, const FrameBuffer& b, int first_undecoded, int zeta, double g) {
  require(g >= 0.0, "range", "capacity forecast must be non-negative");
  for (int l = 1; l <= p.quality_layers(); ++l)
    if (g < gamma(p, b, first_undecoded, l, zeta)) return std::max(1, l - 1);
  return p.quality_layers();
}

// Missing bits in layers [0, layers) of frames [from, to).
inline double missing_bits(const StreamProfile& p, const FrameBuffer& b, int from, int to, int layers) {
  double s = 0;
  for (int f = from; f < to; ++f) {
    const auto k = frame_type(p, b, f);
    for (int l = b.count(f); l < layers; ++l) s += static_cast<double>(p.unit_bits(k, l));
  }
  return s;
}

struct BudgetSplit {
  double psi_cur = 0;
  double psi_i = 0;
  double omega = 0;
  double bits_to_i = 0;
  double bits_to_rest = 0;
  int i_frame = 0;  // index of the earliest undecoded I frame
};

inline BudgetSplit split_budget(const StreamProfile& p, const FrameBuffer& b, int first_undecoded, int lsch,
                                double r_now, bool preempt = true) {
  require(lsch >= 1 && lsch <= p.quality_layers(), "range", "L_sch out of range");
  require(r_now >= 0.0, "range", "budget must be non-negative");
  BudgetSplit s;
  s.i_frame = next_i_frame(p, b, first_undecoded);
  s.psi_cur = missing_bits(p, b, first_undecoded, s.i_frame, lsch);
  s.psi_i = missing_bits(p, b, s.i_frame, s.i_frame + 1, lsch);
  if (s.psi_i > 0) s.omega = s.psi_i / (s.psi_cur + s.psi_i);
  s.bits_to_i = preempt ? std::min(s.omega * r_now, s.psi_i) : 0.0;
  s.bits_to_rest = r_now - s.bits_to_i;
  return s;
}

struct OnlineDecision {
  Action action;
  int lsch = 0;
  double g = 0;
  BudgetSplit split;
};

// `b` is the buffer after frame 0 of the slot was displayed.
inline OnlineDecision online_schedule(const StreamProfile& p, const FrameBuffer& b, int first_undecoded,
                                      const ChannelState& c, const OnlineParams& params) {
  OnlineDecision d;
  const double r_hat = c.throughput();
  d.g = forecast_capacity(params.ar1, r_hat);
  d.lsch = select_layers(p, b, first_undecoded, params.ar1.zeta, d.g);
  d.split = split_budget(p, b, first_undecoded, d.lsch, r_hat, params.i_preemption);

  const Bits capacity = c.slot_capacity_bits();
  ActionBuilder ab(p, b, first_undecoded, kUnbounded, capacity);
  const int fi = d.split.i_frame;
  double sent_i = 0;
  for (int l = b.count(fi); l < d.lsch && sent_i < d.split.bits_to_i && !ab.full(); ++l) {
    ab.push({fi, l});
    sent_i += static_cast<double>(p.unit_bits(frame_type(p, b, fi), l));
  }
  const int horizon = fi + 4 * p.f_intra() + static_cast<int>(capacity / std::max<Bits>(1, p.unit_bits({FrameKind::B, p.temporal_depth()}, 0)));
  for (int f = first_undecoded; f < horizon && !ab.full(); ++f) ab.add_layers(f, d.lsch);
  // Never idle: once the chosen layers run out, fill in display order.
  for (int f = first_undecoded; f < horizon && !ab.full(); ++f) ab.add_layers(f, p.quality_layers());
  d.action.units = ab.take();
  return d;
}

// Display order, all layers of each frame before the next.
inline Action sequential_schedule(const StreamProfile& p, const FrameBuffer& b, int first_undecoded, Bits capacity) {
  ActionBuilder ab(p, b, first_undecoded, kUnbounded, capacity);
  const int horizon = first_undecoded + 4 * p.f_intra() +
                      static_cast<int>(capacity / std::max<Bits>(1, p.unit_bits({FrameKind::B, p.temporal_depth()}, 0)));
  for (int f = first_undecoded; f < horizon && !ab.full(); ++f) ab.add_layers(f, p.quality_layers());
  return {ab.take(), std::nullopt};
}

}  // namespace svs
