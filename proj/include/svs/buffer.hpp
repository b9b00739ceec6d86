#pragma once

// Receiver playback buffer: state representation, playout advance, action
// generation under the scheduling assumptions, and the delivery kernel.
//
// Frame indices are relative to the frame displayed next (index 0). Negative
// indices address the expired frames still needed as predictors of the
// current GOP. A slot runs: display frame 0, advance, transmit, settle.

#include <algorithm>
#include <climits>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "svs/channel.hpp"
#include "svs/error.hpp"
#include "svs/stream.hpp"

namespace svs {

struct DataUnit {
  int frame = 0;
  int layer = 0;
  friend bool operator==(const DataUnit&, const DataUnit&) = default;
  friend auto operator<=>(const DataUnit&, const DataUnit&) = default;
};

// Compact descriptor A(layers, preempt) of the canonical action family.
struct ActionTag {
  int layers = 1;
  bool preempt = false;

  int index() const { return 2 * (layers - 1) + (preempt ? 1 : 0); }
  static ActionTag from_index(int i) { return {i / 2 + 1, i % 2 == 1}; }
  std::string name() const {
    return "A(" + std::to_string(layers) + "," + std::to_string(preempt ? 1 : 0) + ")";
  }
  friend bool operator==(const ActionTag&, const ActionTag&) = default;
};

struct Action {
  std::vector<DataUnit> units;
  std::optional<ActionTag> tag;
};

inline constexpr int kUnbounded = INT_MAX / 4;

// General buffer: any per-frame layer counts. Frames past the end of `ahead`
// hold nothing.
struct FrameBuffer {
  int position = 0;                 // intra-period position of frame 0
  std::vector<std::uint8_t> pre;    // frames -pre.size() .. -1
  std::vector<std::uint8_t> ahead;  // frames 0 ..

  int count(int f) const {
    if (f < 0) {
      const long idx = static_cast<long>(pre.size()) + f;
      require(idx >= 0, "range", "frame " + std::to_string(f) + " is older than the predictor set");
      return pre[static_cast<std::size_t>(idx)];
    }
    return static_cast<std::size_t>(f) < ahead.size() ? ahead[static_cast<std::size_t>(f)] : 0;
  }

  void set(int f, int c) {
    if (f < 0) {
      const long idx = static_cast<long>(pre.size()) + f;
      require(idx >= 0, "range", "frame " + std::to_string(f) + " is older than the predictor set");
      pre[static_cast<std::size_t>(idx)] = static_cast<std::uint8_t>(c);
      return;
    }
    if (static_cast<std::size_t>(f) >= ahead.size()) ahead.resize(static_cast<std::size_t>(f) + 1, 0);
    ahead[static_cast<std::size_t>(f)] = static_cast<std::uint8_t>(c);
  }

  void normalize() {
    while (!ahead.empty() && ahead.back() == 0) ahead.pop_back();
  }

  friend bool operator==(const FrameBuffer& a, const FrameBuffer& b) {
    FrameBuffer x = a, y = b;
    x.normalize();
    y.normalize();
    return x.position == y.position && x.pre == y.pre && x.ahead == y.ahead;
  }
};

// The compact (v_I, v_pre, v_W, v_post) form.
struct BufferState {
  int v_I = 0;
  std::vector<int> pre;     // empty when the current frame is a key picture
  std::vector<int> window;  // W counts
  std::vector<int> post;    // per-layer unit counts, non-increasing
  friend bool operator==(const BufferState&, const BufferState&) = default;
};

struct SystemState {
  int channel = 0;
  FrameBuffer buffer;
  friend bool operator==(const SystemState&, const SystemState&) = default;
};

inline std::string state_key(const SystemState& s) {
  FrameBuffer b = s.buffer;
  b.normalize();
  std::string k;
  k.reserve(4 + b.pre.size() + b.ahead.size());
  k.push_back(static_cast<char>(s.channel));
  k.push_back(static_cast<char>(b.position));
  k.push_back(static_cast<char>(b.pre.size()));
  for (auto c : b.pre) k.push_back(static_cast<char>(c));
  for (auto c : b.ahead) k.push_back(static_cast<char>(c));
  return k;
}

inline int intra_position(const StreamProfile& p, const FrameBuffer& b, int f) {
  return p.wrap(static_cast<long long>(b.position) + f);
}

inline FrameType frame_type(const StreamProfile& p, const FrameBuffer& b, int f) {
  return p.frame_type_at(intra_position(p, b, f));
}

inline Bits unit_bits(const StreamProfile& p, const FrameBuffer& b, const DataUnit& u) {
  return p.unit_bits(frame_type(p, b, u.frame), u.layer);
}

inline Bits action_bits(const StreamProfile& p, const FrameBuffer& b, const std::vector<DataUnit>& units) {
  Bits s = 0;
  for (const auto& u : units) s += unit_bits(p, b, u);
  return s;
}

// First frame not yet decoded, for a buffer whose frame 0 has not been
// displayed and whose previous frame just was.
inline int first_undecoded(const StreamProfile& p, int position) {
  const int g = p.f_gop();
  const int o = p.wrap(position) % g;
  if (o == 1) return 0;
  if (o == 0) return 1;
  return g - o + 1;
}

inline FrameBuffer empty_buffer() { return FrameBuffer{}; }

// Display frame 0 and shift every index down by one.
inline void advance(const StreamProfile& p, FrameBuffer& b) {
  const std::uint8_t head = b.ahead.empty() ? 0 : b.ahead.front();
  if (!b.ahead.empty()) b.ahead.erase(b.ahead.begin());
  b.position = p.wrap(static_cast<long long>(b.position) + 1);
  if (p.is_key(b.position))
    b.pre.clear();
  else
    b.pre.push_back(head);
}

// Decode-time freeze: when frame 0 opens a GOP the GOP is decoded at its
// display, and a P key whose reference key never arrived cannot decode.
inline void settle(const StreamProfile& p, FrameBuffer& b) {
  if (!p.opens_gop(b.position) || b.pre.empty()) return;
  const int key = p.f_gop() - 1;
  if (frame_type(p, b, key).kind == FrameKind::I) return;
  if (b.pre.back() == 0 && b.count(key) > 0) b.set(key, 0);
}

// Marks the first k units of `units` received.
inline void apply_units(FrameBuffer& b, const std::vector<DataUnit>& units, std::size_t k) {
  for (std::size_t i = 0; i < k && i < units.size(); ++i) {
    const auto& u = units[i];
    require(u.frame >= 0, "assumption", "delivery to an expired frame");
    require(b.count(u.frame) == u.layer, "assumption",
            "unit (" + std::to_string(u.frame) + "," + std::to_string(u.layer) + ") out of layer order");
    b.set(u.frame, u.layer + 1);
  }
}

// Number of leading units fully contained in `bits`.
inline std::size_t delivered_prefix(const StreamProfile& p, const FrameBuffer& b,
                                    const std::vector<DataUnit>& units, Bits bits) {
  Bits acc = 0;
  std::size_t k = 0;
  for (const auto& u : units) {
    acc += unit_bits(p, b, u);
    if (acc > bits) break;
    ++k;
  }
  return k;
}

inline bool blocked_frame(const StreamProfile& p, const FrameBuffer& b, int f, int horizon);

// Compact view. Frames past the window that can never decode are skipped;
// the others must form a staircase.
inline BufferState to_compact(const StreamProfile& p, const FrameBuffer& b, int window, int post_cap) {
  BufferState s;
  s.v_I = p.wrap(static_cast<long long>(p.f_intra()) - b.position);
  s.pre.assign(b.pre.begin(), b.pre.end());
  s.window.resize(static_cast<std::size_t>(window));
  for (int f = 0; f < window; ++f) s.window[static_cast<std::size_t>(f)] = b.count(f);
  s.post.assign(static_cast<std::size_t>(p.quality_layers()), 0);
  int prev = p.quality_layers();
  for (int f = window; f < static_cast<int>(b.ahead.size()); ++f) {
    const int c = b.count(f);
    if (blocked_frame(p, b, f, window)) {
      require(c == 0, "staircase", "an undecodable frame beyond the window holds data");
      continue;
    }
    require(c <= prev, "staircase", "frames beyond the window are not filled in display order");
    prev = c;
    for (int l = 0; l < c; ++l) ++s.post[static_cast<std::size_t>(l)];
  }
  for (auto& v : s.post) v = std::min(v, post_cap);
  return s;
}

inline FrameBuffer from_compact(const StreamProfile& p, const BufferState& s) {
  FrameBuffer b;
  b.position = p.wrap(static_cast<long long>(p.f_intra()) - s.v_I);
  for (int c : s.pre) b.pre.push_back(static_cast<std::uint8_t>(c));
  for (int c : s.window) b.ahead.push_back(static_cast<std::uint8_t>(c));
  const int window = static_cast<int>(s.window.size());
  const int depth = s.post.empty() ? 0 : s.post.front();
  for (int j = 0, f = window; j < depth; ++f) {
    if (blocked_frame(p, b, f, window)) continue;
    int c = 0;
    for (int v : s.post)
      if (v > j) ++c;
    b.set(f, c);
    ++j;
  }
  b.normalize();
  return b;
}

// Checks the compact-state invariants; returns a description of the first
// violation.
inline std::optional<std::string> compact_violation(const StreamProfile& p, const BufferState& s, int window,
                                                    int post_cap) {
  if (s.v_I < 0 || s.v_I >= p.f_intra()) return "v_I out of range";
  const int position = p.wrap(static_cast<long long>(p.f_intra()) - s.v_I);
  if (static_cast<int>(s.pre.size()) != position % p.f_gop()) return "v_pre length does not match the GOP phase";
  if (static_cast<int>(s.window.size()) != window) return "v_W length differs from W";
  if (static_cast<int>(s.post.size()) != p.quality_layers()) return "v_post has the wrong number of layers";
  for (int c : s.pre)
    if (c < 0 || c > p.quality_layers()) return "v_pre count out of range";
  for (int c : s.window)
    if (c < 0 || c > p.quality_layers()) return "v_W count out of range";
  for (std::size_t l = 0; l < s.post.size(); ++l) {
    if (s.post[l] < 0 || s.post[l] > post_cap) return "v_post count out of range";
    if (l > 0 && s.post[l] > s.post[l - 1]) return "v_post is not a staircase";
  }
  return std::nullopt;
}

// W^buf fully received: every predictor and every window frame is complete.
inline bool window_complete(const StreamProfile& p, const FrameBuffer& b, int window) {
  const int full = p.quality_layers();
  for (auto c : b.pre)
    if (c < full) return false;
  for (int f = 0; f < window; ++f)
    if (b.count(f) < full) return false;
  return true;
}

// Index of the earliest I frame at or after `from`.
inline int next_i_frame(const StreamProfile& p, const FrameBuffer& b, int from) {
  int f = p.wrap(static_cast<long long>(p.f_intra()) - b.position);
  while (f < from) f += p.f_intra();
  return f;
}

// Incrementally builds an ordered unit list. Forward references at or
// beyond `horizon` are not forced ahead of their dependants.
class ActionBuilder {
 public:
  ActionBuilder(const StreamProfile& p, const FrameBuffer& b, int first_undecoded, int horizon, Bits capacity)
      : p_(p), b_(b), fu_(first_undecoded), horizon_(horizon), capacity_(capacity) {}

  bool full() const { return bits_ >= capacity_; }
  Bits bits() const { return bits_; }
  int first_undecoded() const { return fu_; }
  const std::vector<DataUnit>& units() const { return units_; }
  std::vector<DataUnit> take() { return std::move(units_); }

  int planned(int f) const {
    if (f >= 0 && static_cast<std::size_t>(f) < planned_.size() && planned_[static_cast<std::size_t>(f)] >= 0)
      return planned_[static_cast<std::size_t>(f)];
    return b_.count(f);
  }

  // Whether the base layer of f is present, planned, or can still be planned.
  bool reachable(int f) const {
    if (planned(f) >= 1) return true;
    if (f < fu_) return false;
    for (int off : p_.reference_offsets(intra_position(p_, b_, f))) {
      const int r = f + off;
      if ((off < 0 || r < horizon_) && !reachable(r)) return false;
    }
    return true;
  }

  bool add_base(int f) {
    if (planned(f) >= 1) return true;
    if (!reachable(f)) return false;
    for (int off : p_.reference_offsets(intra_position(p_, b_, f))) {
      const int r = f + off;
      if ((off < 0 || r < horizon_) && planned(r) == 0) add_base(r);
      if (full()) return false;
    }
    push({f, 0});
    return true;
  }

  // Adds the missing layers of f below `upto`.
  void add_layers(int f, int upto) {
    if (f < fu_ || full() || planned(f) >= upto) return;
    if (planned(f) == 0 && !add_base(f)) return;
    for (int l = planned(f); l < upto && !full(); ++l) push({f, l});
  }

  void push(DataUnit u) {
    units_.push_back(u);
    if (static_cast<std::size_t>(u.frame) >= planned_.size()) planned_.resize(static_cast<std::size_t>(u.frame) + 1, -1);
    planned_[static_cast<std::size_t>(u.frame)] = u.layer + 1;
    bits_ += unit_bits(p_, b_, u);
  }

 private:
  const StreamProfile& p_;
  const FrameBuffer& b_;
  int fu_;
  int horizon_;
  Bits capacity_;
  std::vector<int> planned_;
  std::vector<DataUnit> units_;
  Bits bits_ = 0;
};

// A frame whose base can no longer be decoded: some reference before
// `horizon` was decoded without its base.
inline bool blocked_frame(const StreamProfile& p, const FrameBuffer& b, int f, int horizon) {
  return !ActionBuilder(p, b, first_undecoded(p, b.position), horizon, 0).reachable(f);
}

// Frames beyond the window in display order, all layers, each frame started
// only once its predecessor is complete. Undecodable frames are skipped.
inline void greedy_continuation(const StreamProfile& p, ActionBuilder& ab, int window, int post_limit) {
  const int full = p.quality_layers();
  // Frames that can never decode do not count towards the depth.
  int depth = post_limit - window;
  for (int f = std::max(window, ab.first_undecoded()); f < kUnbounded && depth > 0 && !ab.full(); ++f) {
    if (!ab.reachable(f)) continue;
    --depth;
    ab.add_layers(f, full);
    if (ab.planned(f) < full) break;
  }
}

struct ActionContext {
  int first_undecoded = 0;
  int window = 1;
  int post_limit = kUnbounded;  // window + number of decodable frames the continuation may fill
  Bits capacity = 0;
};

inline Action canonical_action(const StreamProfile& p, const FrameBuffer& b, const ActionContext& ctx, ActionTag tag) {
  require(tag.layers >= 1 && tag.layers <= p.quality_layers(), "range", "target layer count out of range");
  ActionBuilder ab(p, b, ctx.first_undecoded, ctx.window, ctx.capacity);
  if (tag.preempt) {
    const int fi = next_i_frame(p, b, ctx.first_undecoded);
    if (fi < ctx.window) ab.add_layers(fi, tag.layers);
  }
  for (int f = ctx.first_undecoded; f < ctx.window && !ab.full(); ++f) ab.add_layers(f, tag.layers);
  for (int f = ctx.first_undecoded; f < ctx.window && !ab.full(); ++f) ab.add_layers(f, p.quality_layers());
  greedy_continuation(p, ab, ctx.window, ctx.post_limit);
  return {ab.take(), tag};
}

// The canonical family with duplicate unit lists removed; the lowest
// descriptor index survives.
inline std::vector<Action> canonical_actions(const StreamProfile& p, const FrameBuffer& b, const ActionContext& ctx) {
  std::vector<Action> out;
  for (int i = 0; i < 2 * p.quality_layers(); ++i) {
    Action a = canonical_action(p, b, ctx, ActionTag::from_index(i));
    const bool dup = std::any_of(out.begin(), out.end(), [&](const Action& o) { return o.units == a.units; });
    if (!dup) out.push_back(std::move(a));
  }
  return out;
}

// Every precedence-respecting order of the schedulable window units, cut at
// the capacity crossing and completed by the greedy continuation.
inline std::vector<Action> exhaustive_actions(const StreamProfile& p, const FrameBuffer& b, const ActionContext& ctx,
                                              std::size_t max_actions = 100000) {
  std::set<std::vector<DataUnit>> seen;
  std::vector<Action> out;
  const int full = p.quality_layers();
  std::vector<DataUnit> prefix;

  std::function<void()> dfs = [&]() {
    ActionBuilder ab(p, b, ctx.first_undecoded, ctx.window, ctx.capacity);
    for (const auto& u : prefix) ab.push(u);
    auto emit = [&](std::vector<DataUnit> units) {
      if (seen.insert(units).second) {
        if (out.size() >= max_actions)
          throw Error("enumeration_cap", "exhaustive action enumeration exceeded " + std::to_string(max_actions));
        out.push_back({std::move(units), std::nullopt});
      }
    };
    if (ab.full()) {
      emit(prefix);
      return;
    }
    std::vector<DataUnit> cand;
    for (int f = ctx.first_undecoded; f < ctx.window; ++f) {
      const int l = ab.planned(f);
      if (l >= full) continue;
      if (l == 0) {
        bool ok = true;
        for (int off : p.reference_offsets(intra_position(p, b, f))) {
          const int r = f + off;
          if (r < ctx.window && ab.planned(r) == 0) ok = false;
        }
        if (!ok) continue;
      }
      cand.push_back({f, l});
    }
    if (cand.empty()) {
      greedy_continuation(p, ab, ctx.window, ctx.post_limit);
      emit(ab.take());
      return;
    }
    for (const auto& u : cand) {
      prefix.push_back(u);
      dfs();
      prefix.pop_back();
    }
  };
  dfs();
  return out;
}

struct ValidationRules {
  int horizon = kUnbounded;     // forward references at or beyond are not enforced
  int window = 0;               // 0 disables the window-first rule
  int post_limit = kUnbounded;  // bound used to decide exhaustion
};

// Returns the first violated assumption, if any.
inline std::optional<std::string> action_violation(const StreamProfile& p, const FrameBuffer& b, int first_undecoded,
                                                   const std::vector<DataUnit>& units, Bits capacity,
                                                   const ValidationRules& rules) {
  ActionBuilder ab(p, b, first_undecoded, rules.horizon, kUnbounded);
  const int full = p.quality_layers();
  bool in_post = false;
  for (const auto& u : units) {
    if (u.frame < first_undecoded) return "A4: unit for decoded frame " + std::to_string(u.frame);
    if (u.layer < 0 || u.layer >= full) return "A1: layer out of range";
    if (ab.planned(u.frame) != u.layer)
      return "A1: unit (" + std::to_string(u.frame) + "," + std::to_string(u.layer) + ") breaks layer order";
    if (u.layer == 0) {
      for (int off : p.reference_offsets(intra_position(p, b, u.frame))) {
        const int r = u.frame + off;
        if ((r < u.frame || r < rules.horizon) && ab.planned(r) == 0)
          return "A1: base of frame " + std::to_string(u.frame) + " precedes its reference " + std::to_string(r);
      }
    }
    if (rules.window > 0) {
      if (u.frame >= rules.window && !in_post) {
        for (int f = first_undecoded; f < rules.window; ++f)
          if (ab.planned(f) < full && ab.reachable(f))
            return "A3: frame " + std::to_string(u.frame) + " scheduled before the window is complete";
        in_post = true;
      } else if (u.frame < rules.window && in_post) {
        return "A3: window unit after a post-window unit";
      }
    }
    ab.push(u);
  }
  if (ab.bits() < capacity) {
    if (rules.post_limit >= kUnbounded) return "A2: action leaves the transmitter idle";
    for (int f = first_undecoded; f < rules.post_limit; ++f)
      if (ab.planned(f) < full && ab.reachable(f)) return "A2: action leaves the transmitter idle";
  }
  return std::nullopt;
}

// log C(n, k) p^k (1-p)^(n-k), exact at the degenerate ends.
inline double binomial_pmf(int n, int k, double p) {
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == n ? 1.0 : 0.0;
  const double lc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  return std::exp(lc + k * std::log(p) + (n - k) * std::log1p(-p));
}

struct DeliveryOutcome {
  std::size_t units = 0;  // delivered prefix length
  double probability = 0;
};

// Bracketed binomial masses over delivered-prefix lengths.
inline std::vector<DeliveryOutcome> delivery_outcomes(const StreamProfile& p, const FrameBuffer& b,
                                                      const std::vector<DataUnit>& units, const ChannelState& c) {
  std::vector<DeliveryOutcome> out;
  for (int n = 0; n <= c.packets; ++n) {
    const double pr = binomial_pmf(c.packets, n, 1.0 - c.packet_error);
    if (pr == 0.0) continue;
    const std::size_t k = delivered_prefix(p, b, units, static_cast<Bits>(n) * c.packet_bits);
    if (!out.empty() && out.back().units == k)
      out.back().probability += pr;
    else
      out.push_back({k, pr});
  }
  return out;
}

struct Transition {
  SystemState next;
  double probability = 0;
};

// One slot from `s`: display, advance, deliver a prefix of `units` (given in
// post-advance indices), settle, then the channel moves.
inline std::vector<Transition> transition_distribution(const StreamProfile& p, const ChannelModel& ch,
                                                       const SystemState& s, const std::vector<DataUnit>& units) {
  require(s.channel >= 0 && static_cast<std::size_t>(s.channel) < ch.size(), "range", "channel index out of range");
  FrameBuffer adv = s.buffer;
  advance(p, adv);
  const auto& cs = ch.state(static_cast<std::size_t>(s.channel));
  std::vector<Transition> out;
  for (const auto& o : delivery_outcomes(p, adv, units, cs)) {
    FrameBuffer nb = adv;
    apply_units(nb, units, o.units);
    settle(p, nb);
    nb.normalize();
    const auto row = ch.row(static_cast<std::size_t>(s.channel));
    for (std::size_t j = 0; j < row.size(); ++j)
      if (row[j] > 0.0) out.push_back({SystemState{static_cast<int>(j), nb}, o.probability * row[j]});
  }
  return out;
}

}  // namespace svs
