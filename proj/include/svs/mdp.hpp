#pragma once

// Finite semi-Markov reduction and its average-cost solver.
//
// States whose window data is incomplete (S_W) carry a choice of canonical
// action. Once the window and its predictors are complete the schedule is the
// fixed greedy continuation; entry states of that region (S_Delta) are
// collapsed into a sojourn time t(s) at distortion d_L followed by a jump back
// into S_W.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <nlohmann/json.hpp>

#include "svs/buffer.hpp"
#include "svs/channel.hpp"
#include "svs/distortion.hpp"
#include "svs/error.hpp"
#include "svs/rng.hpp"
#include "svs/stream.hpp"

namespace svs {

enum class StateKind : std::uint8_t { Window, Boundary, Interior };

struct MdpConfig {
  int window = 9;
  int post_cap = 0;  // frames past the window; 0 selects 4 * f_intra
  std::size_t max_states = 2000000;
};

inline int effective_post_cap(const StreamProfile& p, const MdpConfig& c) {
  return c.post_cap > 0 ? c.post_cap : 4 * p.f_intra();
}

struct Edge {
  int to = 0;
  double p = 0;
};

class StateSpace {
 public:
  StreamProfile profile;
  ChannelModel channel;
  int window = 0;
  int post_cap = 0;
  std::vector<SystemState> states;
  std::vector<StateKind> kinds;
  std::vector<double> cost;               // d(s) of the frame displayed in s
  std::vector<std::size_t> action_begin;  // per state, into tags / edge_begin
  std::vector<ActionTag> tags;
  std::vector<std::size_t> edge_begin;    // per action, into edges
  std::vector<Edge> edges;
  std::uint64_t manifest = 0;

  std::size_t size() const { return states.size(); }
  std::size_t num_actions(std::size_t s) const { return action_begin[s + 1] - action_begin[s]; }
  ActionTag tag(std::size_t s, std::size_t a) const { return tags[action_begin[s] + a]; }
  std::span<const Edge> action_edges(std::size_t s, std::size_t a) const {
    const std::size_t g = action_begin[s] + a;
    return {edges.data() + edge_begin[g], edge_begin[g + 1] - edge_begin[g]};
  }

  int lookup(const SystemState& s) const {
    const auto it = index_.find(state_key(s));
    return it == index_.end() ? -1 : it->second;
  }
  int encode(const SystemState& s) const {
    const int i = lookup(s);
    require(i >= 0, "manifest", "state outside the enumerated space");
    return i;
  }
  const SystemState& decode(int i) const {
    require(i >= 0 && static_cast<std::size_t>(i) < states.size(), "manifest", "state index out of range");
    return states[static_cast<std::size_t>(i)];
  }

  std::size_t count(StateKind k) const { return static_cast<std::size_t>(std::count(kinds.begin(), kinds.end(), k)); }

  ActionContext action_context(const FrameBuffer& advanced, int chan) const {
    return {first_undecoded(profile, advanced.position), window, window + post_cap,
            channel.state(static_cast<std::size_t>(chan)).slot_capacity_bits()};
  }

  int intern(const SystemState& s) {
    auto [it, added] = index_.try_emplace(state_key(s), static_cast<int>(states.size()));
    if (added) states.push_back(s);
    return it->second;
  }

 private:
  std::unordered_map<std::string, int> index_;
};

namespace detail {

struct Fnv {
  std::uint64_t h = 1469598103934665603ull;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ull;
    }
  }
  template <class T>
  void pod(const T& v) {
    bytes(&v, sizeof(T));
  }
  void str(const std::string& s) { bytes(s.data(), s.size()); pod(s.size()); }
};

inline void hash_profile(Fnv& f, const StreamProfile& p) {
  f.pod(p.f_intra());
  f.pod(p.f_gop());
  f.pod(p.num_layers());
  f.pod(p.frame_rate());
  f.pod(p.d_loss());
  for (const auto& row : p.sizes())
    for (auto v : row) f.pod(v);
  for (double d : p.distortions()) f.pod(d);
}

inline void hash_channel(Fnv& f, const ChannelModel& c) {
  for (const auto& s : c.states()) {
    f.pod(s.packet_bits);
    f.pod(s.packets);
    f.pod(s.packet_error);
  }
  for (const auto& row : c.transition())
    for (double v : row) f.pod(v);
}

}  // namespace detail

inline std::uint64_t profile_hash(const StreamProfile& p) {
  detail::Fnv f;
  detail::hash_profile(f, p);
  return f.h;
}

inline std::uint64_t channel_hash(const ChannelModel& c) {
  detail::Fnv f;
  detail::hash_channel(f, c);
  return f.h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 15];
  return s;
}

inline SystemState empty_state(int channel = 0) { return SystemState{channel, FrameBuffer{}}; }

// Breadth-first closure under every canonical action in S_W and the greedy
// continuation elsewhere.
inline StateSpace enumerate_states(const StreamProfile& p, const ChannelModel& ch, const MdpConfig& cfg,
                                   std::optional<SystemState> start = std::nullopt) {
  require(cfg.window >= p.f_gop(), "config", "window W must be at least f_gop");
  StateSpace sp;
  sp.profile = p;
  sp.channel = ch;
  sp.window = cfg.window;
  sp.post_cap = effective_post_cap(p, cfg);
  sp.intern(start.value_or(empty_state()));
  sp.action_begin.push_back(0);
  sp.edge_begin.push_back(0);
  std::vector<char> complete;
  const ActionTag greedy{p.quality_layers(), false};

  for (std::size_t i = 0; i < sp.states.size(); ++i) {
    if (sp.states.size() > cfg.max_states)
      throw Error("state_budget", "state enumeration exceeded the budget of " + std::to_string(cfg.max_states) +
                                      " states (reached " + std::to_string(sp.states.size()) + ")");
    const SystemState s = sp.states[i];
    const bool done = window_complete(p, s.buffer, sp.window);
    complete.push_back(done ? 1 : 0);
    FrameBuffer adv = s.buffer;
    advance(p, adv);
    const auto ctx = sp.action_context(adv, s.channel);
    std::vector<Action> acts =
        done ? std::vector<Action>{canonical_action(p, adv, ctx, greedy)} : canonical_actions(p, adv, ctx);
    for (const auto& a : acts) {
      sp.tags.push_back(*a.tag);
      for (const auto& t : transition_distribution(p, ch, s, a.units)) sp.edges.push_back({sp.intern(t.next), t.probability});
      sp.edge_begin.push_back(sp.edges.size());
    }
    sp.action_begin.push_back(sp.tags.size());
    sp.cost.push_back(displayed_distortion(p, s.buffer));
  }

  sp.kinds.assign(sp.states.size(), StateKind::Interior);
  for (std::size_t i = 0; i < sp.states.size(); ++i)
    if (!complete[i]) sp.kinds[i] = StateKind::Window;
  for (std::size_t i = 0; i < sp.states.size(); ++i) {
    if (sp.kinds[i] != StateKind::Window) continue;
    for (std::size_t a = 0; a < sp.num_actions(i); ++a)
      for (const auto& e : sp.action_edges(i, a))
        if (complete[static_cast<std::size_t>(e.to)]) sp.kinds[static_cast<std::size_t>(e.to)] = StateKind::Boundary;
  }

  detail::Fnv f;
  detail::hash_profile(f, p);
  detail::hash_channel(f, ch);
  f.pod(sp.window);
  f.pod(sp.post_cap);
  for (const auto& s : sp.states) f.str(state_key(s));
  sp.manifest = f.h;
  return sp;
}

struct BoundaryDynamics {
  std::string method;
  std::size_t samples = 0;             // Monte Carlo samples per state, 0 when exact
  std::vector<int> states;             // S_Delta indices
  std::vector<double> sojourn;         // t(s), slots
  std::vector<double> sojourn_se;      // standard error (0 when exact)
  std::vector<std::vector<Edge>> reentry;  // over S_W, sorted by index
  std::vector<int> slot;               // state index -> position in `states`, -1 elsewhere
  std::uint64_t manifest = 0;

  double t(int s) const { return sojourn[static_cast<std::size_t>(slot[static_cast<std::size_t>(s)])]; }
};

inline constexpr std::size_t kBoundaryStepCap = 10000;

namespace detail {

inline BoundaryDynamics boundary_skeleton(const StateSpace& sp, const char* method) {
  BoundaryDynamics bd;
  bd.method = method;
  bd.manifest = sp.manifest;
  bd.slot.assign(sp.size(), -1);
  for (std::size_t i = 0; i < sp.size(); ++i)
    if (sp.kinds[i] == StateKind::Boundary) {
      bd.slot[i] = static_cast<int>(bd.states.size());
      bd.states.push_back(static_cast<int>(i));
    }
  bd.sojourn.assign(bd.states.size(), 0.0);
  bd.sojourn_se.assign(bd.states.size(), 0.0);
  bd.reentry.assign(bd.states.size(), {});
  return bd;
}

}  // namespace detail

// Simulates the greedy continuation from each entry state until the window
// first becomes incomplete again.
inline BoundaryDynamics boundary_monte_carlo(const StateSpace& sp, std::size_t samples, std::uint64_t seed,
                                             std::size_t step_cap = kBoundaryStepCap) {
  require(samples >= 1, "range", "need at least one sample");
  auto bd = detail::boundary_skeleton(sp, "monte_carlo");
  bd.samples = samples;
  for (std::size_t k = 0; k < bd.states.size(); ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(bd.states[k])));
    std::unordered_map<int, std::size_t> hits;
    double sum = 0, sum2 = 0;
    for (std::size_t n = 0; n < samples; ++n) {
      std::size_t cur = static_cast<std::size_t>(bd.states[k]);
      std::size_t steps = 0;
      while (true) {
        ++steps;
        if (steps > step_cap)
          throw Error("positive_recurrence",
                      "greedy continuation from state " + std::to_string(bd.states[k]) + " did not return within " +
                          std::to_string(step_cap) +
                          " slots; the channel is too fast or too slow for this stream (adjust rate or profile)");
        const auto es = sp.action_edges(cur, 0);
        const double u = rng.uniform();
        double acc = 0;
        std::size_t pick = es.size() - 1;
        for (std::size_t j = 0; j < es.size(); ++j) {
          acc += es[j].p;
          if (u < acc) {
            pick = j;
            break;
          }
        }
        cur = static_cast<std::size_t>(es[pick].to);
        if (sp.kinds[cur] == StateKind::Window) break;
      }
      sum += static_cast<double>(steps);
      sum2 += static_cast<double>(steps) * static_cast<double>(steps);
      ++hits[static_cast<int>(cur)];
    }
    const double n = static_cast<double>(samples);
    bd.sojourn[k] = sum / n;
    const double var = samples > 1 ? std::max(0.0, (sum2 - sum * sum / n) / (n - 1)) : 0.0;
    bd.sojourn_se[k] = std::sqrt(var / n);
    for (const auto& [to, c] : hits) bd.reentry[k].push_back({to, static_cast<double>(c) / n});
    std::sort(bd.reentry[k].begin(), bd.reentry[k].end(), [](const Edge& a, const Edge& b) { return a.to < b.to; });
  }
  return bd;
}

// Exact first-step analysis on the capped chain.
inline BoundaryDynamics boundary_truncated_solve(const StateSpace& sp) {
  auto bd = detail::boundary_skeleton(sp, "truncated_solve");
  std::vector<int> local(sp.size(), -1);
  std::vector<int> members;
  for (std::size_t i = 0; i < sp.size(); ++i)
    if (sp.kinds[i] != StateKind::Window) {
      local[i] = static_cast<int>(members.size());
      members.push_back(static_cast<int>(i));
    }
  const auto m = static_cast<Eigen::Index>(members.size());
  if (m == 0) return bd;
  std::vector<Eigen::Triplet<double>> trip;
  std::unordered_map<int, int> target_col;
  std::vector<int> targets;
  std::vector<std::vector<Edge>> exits(members.size());
  for (Eigen::Index r = 0; r < m; ++r) {
    trip.emplace_back(r, r, 1.0);
    for (const auto& e : sp.action_edges(static_cast<std::size_t>(members[static_cast<std::size_t>(r)]), 0)) {
      const int l = local[static_cast<std::size_t>(e.to)];
      if (l >= 0) {
        trip.emplace_back(r, l, -e.p);
      } else {
        if (target_col.try_emplace(e.to, static_cast<int>(targets.size())).second) targets.push_back(e.to);
        exits[static_cast<std::size_t>(r)].push_back(e);
      }
    }
  }
  Eigen::SparseMatrix<double> A(m, m);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  if (lu.info() != Eigen::Success)
    throw Error("positive_recurrence",
                "the greedy continuation has a closed class that never returns to S_W; adjust channel rate or profile");

  Eigen::VectorXd ones = Eigen::VectorXd::Ones(m);
  Eigen::VectorXd t = lu.solve(ones);
  for (std::size_t k = 0; k < bd.states.size(); ++k) {
    const double v = t(local[static_cast<std::size_t>(bd.states[k])]);
    if (!std::isfinite(v) || v < 1.0 - 1e-9 || v > 1e12)
      throw Error("positive_recurrence", "sojourn time from state " + std::to_string(bd.states[k]) + " is not finite");
    bd.sojourn[k] = v;
  }
  for (std::size_t c = 0; c < targets.size(); ++c) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(m);
    for (Eigen::Index r = 0; r < m; ++r)
      for (const auto& e : exits[static_cast<std::size_t>(r)])
        if (e.to == targets[c]) rhs(r) += e.p;
    Eigen::VectorXd x = lu.solve(rhs);
    for (std::size_t k = 0; k < bd.states.size(); ++k) {
      const double v = x(local[static_cast<std::size_t>(bd.states[k])]);
      if (v > 1e-15) bd.reentry[k].push_back({targets[c], v});
    }
  }
  for (auto& row : bd.reentry) {
    std::sort(row.begin(), row.end(), [](const Edge& a, const Edge& b) { return a.to < b.to; });
    double s = 0;
    for (const auto& e : row) s += e.p;
    for (auto& e : row) e.p /= s;
  }
  return bd;
}

struct SolveOptions {
  double epsilon = 1e-7;
  std::size_t max_iters = 100000;
  double tau = 0.9;
  int reference = 0;
};

struct SolveResult {
  std::vector<int> policy;  // descriptor index per state; -1 outside S_W
  double lambda = 0;        // exact average distortion of `policy`
  double lambda_lo = 0;     // value-iteration bracket on the optimum
  double lambda_hi = 0;
  std::vector<double> h;    // relative values, h(reference) = 0
  std::size_t iterations = 0;
  double residual = 0;
  std::vector<double> residual_tail;  // last few span residuals
};

namespace detail {

inline void require_consistent(const StateSpace& sp, const BoundaryDynamics& bd) {
  require(sp.manifest == bd.manifest, "manifest",
          "boundary dynamics built for manifest " + hex64(bd.manifest) + ", space is " + hex64(sp.manifest));
}

// Local action index for a descriptor, or -1.
inline int action_for(const StateSpace& sp, std::size_t s, int descriptor) {
  for (std::size_t a = 0; a < sp.num_actions(s); ++a)
    if (sp.tag(s, a).index() == descriptor) return static_cast<int>(a);
  return -1;
}

}  // namespace detail

struct PolicyEvaluation {
  double lambda = 0;
  std::vector<double> stationary;  // embedded-chain probabilities per state (0 outside the recurrent class)
};

inline PolicyEvaluation evaluate_policy_detail(const StateSpace& sp, const BoundaryDynamics& bd,
                                               const std::vector<int>& policy,
                                               const std::vector<double>* costs = nullptr);

// Relative value iteration on the data-transformed semi-MDP.
inline SolveResult solve_average_cost(const StateSpace& sp, const BoundaryDynamics& bd, const SolveOptions& opt = {},
                                      const std::vector<double>* costs = nullptr) {
  detail::require_consistent(sp, bd);
  require(opt.tau > 0.0 && opt.tau < 1.0, "config", "tau must lie in (0,1)");
  const std::size_t n = sp.size();
  const auto& d = costs ? *costs : sp.cost;
  std::vector<double> h(n, 0.0), hn(n, 0.0);
  std::vector<int> best(n, -1);
  SolveResult res;
  const std::size_t ref = static_cast<std::size_t>(opt.reference);
  require(ref < n, "range", "reference state out of range");
  const double tau = opt.tau;

  for (std::size_t it = 1; it <= opt.max_iters; ++it) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t s = 0; s < n; ++s) {
      double v;
      if (sp.kinds[s] == StateKind::Window) {
        double m = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (std::size_t a = 0; a < sp.num_actions(s); ++a) {
          double e = 0;
          for (const auto& x : sp.action_edges(s, a)) e += x.p * h[static_cast<std::size_t>(x.to)];
          if (a == 0 || e < m - 1e-12 * (1.0 + std::abs(m))) {
            m = e;
            arg = static_cast<int>(a);
          }
        }
        best[s] = arg;
        v = d[s] + (1.0 - tau) * h[s] + tau * m;
      } else if (sp.kinds[s] == StateKind::Boundary) {
        const auto k = static_cast<std::size_t>(bd.slot[s]);
        const double w = tau / bd.sojourn[k];
        double e = 0;
        for (const auto& x : bd.reentry[k]) e += x.p * h[static_cast<std::size_t>(x.to)];
        v = d[s] + (1.0 - w) * h[s] + w * e;
      } else {
        hn[s] = 0.0;
        continue;
      }
      hn[s] = v;
      lo = std::min(lo, v - h[s]);
      hi = std::max(hi, v - h[s]);
    }
    const double shift = hn[ref];
    for (std::size_t s = 0; s < n; ++s) h[s] = hn[s] - shift;
    res.iterations = it;
    res.residual = hi - lo;
    res.lambda_lo = lo;
    res.lambda_hi = hi;
    require(std::isfinite(res.residual), "numeric", "value iteration diverged at sweep " + std::to_string(it));
    res.residual_tail.push_back(res.residual);
    if (res.residual_tail.size() > 10) res.residual_tail.erase(res.residual_tail.begin());
    if (res.residual < opt.epsilon) break;
    if (it == opt.max_iters)
      throw Error("max_iters", "value iteration hit " + std::to_string(opt.max_iters) +
                                   " sweeps with span residual " + std::to_string(res.residual));
  }
  res.policy.assign(n, -1);
  for (std::size_t s = 0; s < n; ++s)
    if (sp.kinds[s] == StateKind::Window) res.policy[s] = sp.tag(s, static_cast<std::size_t>(best[s])).index();
  res.h.resize(n);
  for (std::size_t s = 0; s < n; ++s) res.h[s] = tau * h[s];
  res.lambda = evaluate_policy_detail(sp, bd, res.policy, costs).lambda;
  return res;
}

namespace detail {

// Tarjan's strongly connected components, iterative.
inline std::vector<int> scc(const std::vector<std::vector<int>>& g, int& count) {
  const int n = static_cast<int>(g.size());
  std::vector<int> idx(g.size(), -1), low(g.size(), 0), comp(g.size(), -1), stack;
  std::vector<char> on(g.size(), 0);
  int next = 0;
  count = 0;
  std::vector<std::pair<int, std::size_t>> call;
  for (int root = 0; root < n; ++root) {
    if (idx[static_cast<std::size_t>(root)] >= 0) continue;
    call.push_back({root, 0});
    while (!call.empty()) {
      auto& [v, pos] = call.back();
      const auto uv = static_cast<std::size_t>(v);
      if (pos == 0 && idx[uv] < 0) {
        idx[uv] = low[uv] = next++;
        stack.push_back(v);
        on[uv] = 1;
      }
      if (pos < g[uv].size()) {
        const int w = g[uv][pos++];
        const auto uw = static_cast<std::size_t>(w);
        if (idx[uw] < 0) {
          call.push_back({w, 0});
        } else if (on[uw]) {
          low[uv] = std::min(low[uv], idx[uw]);
        }
        continue;
      }
      if (low[uv] == idx[uv]) {
        while (true) {
          const int w = stack.back();
          stack.pop_back();
          on[static_cast<std::size_t>(w)] = 0;
          comp[static_cast<std::size_t>(w)] = count;
          if (w == v) break;
        }
        ++count;
      }
      const int done = v;
      call.pop_back();
      if (!call.empty()) {
        const auto up = static_cast<std::size_t>(call.back().first);
        low[up] = std::min(low[up], low[static_cast<std::size_t>(done)]);
      }
    }
  }
  return comp;
}

}  // namespace detail

inline PolicyEvaluation evaluate_policy_detail(const StateSpace& sp, const BoundaryDynamics& bd,
                                               const std::vector<int>& policy, const std::vector<double>* costs) {
  detail::require_consistent(sp, bd);
  require(policy.size() == sp.size(), "manifest", "policy length differs from the state space");
  const std::size_t n = sp.size();
  std::vector<std::vector<Edge>> rows(n);
  std::vector<std::vector<int>> g(n);
  for (std::size_t s = 0; s < n; ++s) {
    if (sp.kinds[s] == StateKind::Window) {
      const int a = detail::action_for(sp, s, policy[s]);
      require(a >= 0, "policy", "policy names action " + std::to_string(policy[s]) + " not available in state " +
                                    std::to_string(s));
      for (const auto& e : sp.action_edges(s, static_cast<std::size_t>(a))) rows[s].push_back(e);
    } else if (sp.kinds[s] == StateKind::Boundary) {
      rows[s] = bd.reentry[static_cast<std::size_t>(bd.slot[s])];
    }
    for (const auto& e : rows[s]) g[s].push_back(e.to);
  }
  int nc = 0;
  const auto comp = detail::scc(g, nc);
  std::vector<char> closed(static_cast<std::size_t>(nc), 1), used(static_cast<std::size_t>(nc), 0);
  for (std::size_t s = 0; s < n; ++s) {
    if (sp.kinds[s] == StateKind::Interior) continue;
    used[static_cast<std::size_t>(comp[s])] = 1;
    for (const auto& e : rows[s])
      if (comp[static_cast<std::size_t>(e.to)] != comp[s]) closed[static_cast<std::size_t>(comp[s])] = 0;
  }
  std::vector<int> closed_ids;
  for (int c = 0; c < nc; ++c)
    if (used[static_cast<std::size_t>(c)] && closed[static_cast<std::size_t>(c)]) closed_ids.push_back(c);
  require(!closed_ids.empty(), "reducible", "induced chain has no closed class");
  if (closed_ids.size() > 1) {
    std::string msg = "induced chain has " + std::to_string(closed_ids.size()) + " closed classes; e.g. states";
    for (int c : closed_ids)
      for (std::size_t s = 0; s < n; ++s)
        if (comp[s] == c && sp.kinds[s] != StateKind::Interior) {
          msg += " " + std::to_string(s);
          break;
        }
    throw Error("reducible", msg);
  }
  const int cls = closed_ids.front();
  std::vector<int> loc(n, -1), members;
  for (std::size_t s = 0; s < n; ++s)
    if (comp[s] == cls) {
      loc[s] = static_cast<int>(members.size());
      members.push_back(static_cast<int>(s));
    }
  const auto m = static_cast<Eigen::Index>(members.size());
  // pi (I - P) = 0 with the last equation replaced by normalization.
  std::vector<Eigen::Triplet<double>> trip;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto s = static_cast<std::size_t>(members[static_cast<std::size_t>(i)]);
    if (i != m - 1) trip.emplace_back(i, i, 1.0);
    for (const auto& e : rows[s]) {
      const int j = loc[static_cast<std::size_t>(e.to)];
      if (j != m - 1) trip.emplace_back(j, i, -e.p);
    }
    trip.emplace_back(m - 1, i, 1.0);
  }
  Eigen::SparseMatrix<double> A(m, m);
  A.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(A);
  require(lu.info() == Eigen::Success, "reducible", "stationary system is singular");
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  b(m - 1) = 1.0;
  Eigen::VectorXd pi = lu.solve(b);

  PolicyEvaluation out;
  out.stationary.assign(n, 0.0);
  double num = 0, den = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto s = static_cast<std::size_t>(members[static_cast<std::size_t>(i)]);
    out.stationary[s] = pi(i);
    const bool boundary = sp.kinds[s] == StateKind::Boundary;
    const double eta = boundary ? bd.sojourn[static_cast<std::size_t>(bd.slot[s])] : 1.0;
    const double c = costs ? (*costs)[s] : sp.cost[s];
    num += pi(i) * c * eta;
    den += pi(i) * eta;
  }
  out.lambda = num / den;
  return out;
}

inline double evaluate_policy(const StateSpace& sp, const BoundaryDynamics& bd, const std::vector<int>& policy) {
  return evaluate_policy_detail(sp, bd, policy).lambda;
}

// The policy that applies one descriptor wherever it is available and the
// lowest-index action elsewhere.
inline std::vector<int> uniform_descriptor_policy(const StateSpace& sp, int descriptor) {
  std::vector<int> pol(sp.size(), -1);
  for (std::size_t s = 0; s < sp.size(); ++s) {
    if (sp.kinds[s] != StateKind::Window) continue;
    const int a = detail::action_for(sp, s, descriptor);
    pol[s] = sp.tag(s, a >= 0 ? static_cast<std::size_t>(a) : 0).index();
  }
  return pol;
}

inline constexpr int kPolicySchemaVersion = 1;

inline nlohmann::json policy_to_json(const StateSpace& sp, const SolveResult& r) {
  nlohmann::json j;
  j["schema_version"] = kPolicySchemaVersion;
  j["manifest_hash"] = hex64(sp.manifest);
  j["profile_hash"] = hex64(profile_hash(sp.profile));
  j["channel_hash"] = hex64(channel_hash(sp.channel));
  j["window"] = sp.window;
  j["post_cap"] = sp.post_cap;
  j["num_states"] = sp.size();
  j["lambda"] = r.lambda;
  j["iterations"] = r.iterations;
  j["residual"] = r.residual;
  j["policy"] = r.policy;
  return j;
}

inline void save_policy(const std::string& path, const StateSpace& sp, const SolveResult& r) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "io", "cannot write " + path);
  out << policy_to_json(sp, r).dump(1) << '\n';
}

inline std::vector<int> policy_from_json(const nlohmann::json& j, const StateSpace& sp) {
  const std::string want = hex64(sp.manifest);
  const std::string got = j.at("manifest_hash").get<std::string>();
  require(got == want, "manifest", "policy manifest " + got + " does not match state-space manifest " + want);
  auto pol = j.at("policy").get<std::vector<int>>();
  require(pol.size() == sp.size(), "manifest", "policy length differs from the state space");
  return pol;
}

inline std::vector<int> load_policy(const std::string& path, const StateSpace& sp) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "io", "cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error("io", path + ": " + e.what());
  }
  return policy_from_json(j, sp);
}

// Compact key of an arbitrary buffer, with post-window data clamped to the
// space's cap. A post depth the capped system cannot reach is clamped further
// down until a state matches. Returns -1 when nothing matches.
inline int lookup_clamped(const StateSpace& sp, const SystemState& s) {
  try {
    auto bs = to_compact(sp.profile, s.buffer, sp.window, sp.post_cap);
    const int depth = bs.post.empty() ? 0 : bs.post.front();
    for (int c = depth; c >= 0; --c) {
      for (auto& v : bs.post) v = std::min(v, c);
      const int i = sp.lookup({s.channel, from_compact(sp.profile, bs)});
      if (i >= 0) return i;
    }
  } catch (const Error&) {
  }
  return -1;
}

}  // namespace svs
