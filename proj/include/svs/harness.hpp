#pragma once

// Monte Carlo streaming simulation, trace output, and scheduler comparison.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "svs/bound.hpp"
#include "svs/buffer.hpp"
#include "svs/channel.hpp"
#include "svs/distortion.hpp"
#include "svs/error.hpp"
#include "svs/io.hpp"
#include "svs/mdp.hpp"
#include "svs/online.hpp"
#include "svs/rng.hpp"
#include "svs/stream.hpp"

namespace svs {

enum class SchedulerKind { Mdp, Online, OnlineNoISplit, Sequential };

inline SchedulerKind parse_scheduler(const std::string& s) {
  if (s == "mdp") return SchedulerKind::Mdp;
  if (s == "online") return SchedulerKind::Online;
  if (s == "online_no_isplit") return SchedulerKind::OnlineNoISplit;
  if (s == "sequential") return SchedulerKind::Sequential;
  throw Error("config", "unknown scheduler '" + s + "' (mdp | online | online_no_isplit | sequential)");
}

inline std::string to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::Mdp: return "mdp";
    case SchedulerKind::Online: return "online";
    case SchedulerKind::OnlineNoISplit: return "online_no_isplit";
    default: return "sequential";
  }
}

inline constexpr int kTraceSchemaVersion = 1;
inline constexpr int kSummarySchemaVersion = 1;

struct SimConfig {
  SchedulerKind scheduler = SchedulerKind::Online;
  std::size_t run_length = 2000;
  std::size_t replications = 1;
  std::uint64_t seed = 1;
  int startup_delay = 6;
  bool partial_carryover = false;
  bool record_trace = false;  // keeps the trace of replication 0
  unsigned threads = 0;       // 0: hardware concurrency
  int window = 9;             // window used by the warm-up and fallback actions
  OnlineParams online;        // used by the online schedulers
  const StateSpace* space = nullptr;
  const std::vector<int>* policy = nullptr;
};

struct SlotRecord {
  std::size_t slot = 0;
  int chan = 0;
  int frame_pos = -1;  // -1 before playback starts
  std::string frame_type;
  Bits z_bits = 0;
  double mse = 0;
  std::string action;
  int n_pkts = 0;
};

struct ReplicationResult {
  double mean_mse = 0;
  std::vector<double> type_sum;
  std::vector<std::size_t> type_count;
  double delivered_bits = 0;  // sum of n * L^PHY
  std::size_t displayed = 0;
  std::size_t slots = 0;
  std::size_t policy_misses = 0;
  std::vector<int> chan_visits;
  std::vector<SlotRecord> trace;
};

struct RunSummary {
  std::string scheduler;
  double mean_mse = 0;
  double ci_half = 0;  // 95% normal half-width across replications
  std::vector<double> type_mse;
  double throughput = 0;          // delivered capacity per slot
  double budget_per_frame = 0;    // delivered capacity per displayed frame
  double bound = 0;               // lower bound at budget_per_frame
  std::size_t replications = 0;
  std::size_t run_length = 0;
  std::uint64_t seed = 0;
  std::size_t policy_misses = 0;
  std::vector<double> chan_occupancy;
  std::vector<double> replication_means;
};

struct SimOutput {
  std::vector<SlotRecord> trace;
  RunSummary summary;
};

// AR(1) parameters from a pilot throughput trace.
inline OnlineParams estimate_online_params(const ChannelModel& ch, std::size_t pilot_slots, std::uint64_t seed,
                                           bool preempt = true) {
  OnlineParams p;
  const auto series = throughput_series(ch, pilot_slots, seed);
  p.ar1 = estimate_ar1(series);
  p.i_preemption = preempt;
  return p;
}

namespace detail {

struct Partial {
  bool active = false;
  DataUnit unit;
  long long absolute_frame = 0;
  Bits bits = 0;
};

inline std::string online_label(const OnlineDecision& d) {
  std::ostringstream s;
  s << "L" << d.lsch << "/I" << static_cast<long long>(std::llround(d.split.bits_to_i));
  return s.str();
}

}  // namespace detail

inline ReplicationResult run_replication(const StreamProfile& p, const ChannelModel& ch, const SimConfig& cfg,
                                         std::uint64_t seed, bool keep_trace) {
  require(cfg.run_length >= static_cast<std::size_t>(std::max(0, cfg.startup_delay)), "config",
          "run_length must be at least the startup delay");
  if (cfg.scheduler == SchedulerKind::Mdp)
    require(cfg.space && cfg.policy, "config", "the mdp scheduler needs a solved policy");
  ReplicationResult r;
  r.type_sum.assign(static_cast<std::size_t>(p.num_frame_types()), 0.0);
  r.type_count.assign(static_cast<std::size_t>(p.num_frame_types()), 0);
  r.chan_visits.assign(ch.size(), 0);
  Rng rng(seed);
  int chan = static_cast<int>(rng.categorical(ch.stationary()));
  FrameBuffer fb;
  long long frames_shown = 0;
  detail::Partial partial;
  double mse_sum = 0;
  const ActionTag greedy{p.quality_layers(), false};

  for (std::size_t t = 0; t < cfg.run_length; ++t) {
    ++r.chan_visits[static_cast<std::size_t>(chan)];
    const auto& cs = ch.state(static_cast<std::size_t>(chan));
    SlotRecord rec;
    rec.slot = t;
    rec.chan = chan;
    const SystemState before{chan, fb};
    const bool playing = t >= static_cast<std::size_t>(cfg.startup_delay);
    if (playing) {
      const double d = displayed_distortion(p, fb);
      const auto k = p.frame_type_at(fb.position);
      rec.frame_pos = fb.position;
      rec.frame_type = k.name();
      rec.z_bits = p.frame_bits(k, fb.count(0));
      rec.mse = d;
      mse_sum += d;
      r.type_sum[static_cast<std::size_t>(k.index())] += d;
      ++r.type_count[static_cast<std::size_t>(k.index())];
      ++r.displayed;
      advance(p, fb);
      ++frames_shown;
    }
    const int fu = playing ? first_undecoded(p, fb.position) : 0;
    const Bits capacity = cs.slot_capacity_bits();
    const ActionContext ctx{fu, cfg.space ? cfg.space->window : cfg.window, kUnbounded, capacity};

    Action action;
    switch (cfg.scheduler) {
      case SchedulerKind::Sequential:
        action = sequential_schedule(p, fb, fu, capacity);
        rec.action = "seq";
        break;
      case SchedulerKind::Online:
      case SchedulerKind::OnlineNoISplit: {
        OnlineParams op = cfg.online;
        op.i_preemption = cfg.scheduler == SchedulerKind::Online;
        auto d = online_schedule(p, fb, fu, cs, op);
        rec.action = detail::online_label(d);
        action = std::move(d.action);
        break;
      }
      case SchedulerKind::Mdp: {
        ActionTag tag = greedy;
        rec.action = "greedy";
        if (playing) {
          const int i = lookup_clamped(*cfg.space, before);
          if (i < 0) {
            ++r.policy_misses;
            rec.action = "miss";
          } else if (cfg.space->kinds[static_cast<std::size_t>(i)] == StateKind::Window) {
            tag = ActionTag::from_index((*cfg.policy)[static_cast<std::size_t>(i)]);
            rec.action = tag.name();
          }
        }
        action = canonical_action(p, fb, ctx, tag);
        break;
      }
    }

    const int n = rng.binomial(cs.packets, 1.0 - cs.packet_error);
    rec.n_pkts = n;
    Bits budget = static_cast<Bits>(n) * cs.packet_bits;
    r.delivered_bits += static_cast<double>(budget);

    // Optional credit for the unit left half-sent in the previous slot.
    Bits credit = 0;
    if (cfg.partial_carryover && partial.active && !action.units.empty()) {
      const auto& u0 = action.units.front();
      if (frames_shown + u0.frame == partial.absolute_frame && u0.layer == partial.unit.layer) credit = partial.bits;
    }
    const std::size_t k = delivered_prefix(p, fb, action.units, budget + credit);
    if (cfg.partial_carryover) {
      partial.active = false;
      if (k < action.units.size()) {
        const Bits used = action_bits(p, fb, {action.units.begin(), action.units.begin() + static_cast<long>(k)});
        const Bits left = budget + credit - used;
        if (left > 0) {
          partial = {true, action.units[k], frames_shown + action.units[k].frame, left};
        }
      }
    }
    apply_units(fb, action.units, k);
    settle(p, fb);
    fb.normalize();
    chan = static_cast<int>(ch.next_state(static_cast<std::size_t>(chan), rng));
    if (keep_trace) r.trace.push_back(std::move(rec));
  }
  r.slots = cfg.run_length;
  r.mean_mse = r.displayed ? mse_sum / static_cast<double>(r.displayed) : 0.0;
  return r;
}

inline SimOutput run_simulation(const StreamProfile& p, const ChannelModel& ch, const SimConfig& cfg) {
  require(cfg.replications >= 1, "config", "replications must be >= 1");
  std::vector<ReplicationResult> reps(cfg.replications);
  unsigned threads = cfg.threads ? cfg.threads : std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, cfg.replications));
  std::mutex err_mu;
  std::exception_ptr err;
  std::size_t next = 0;
  std::mutex next_mu;
  auto worker = [&]() {
    while (true) {
      std::size_t i;
      {
        std::lock_guard<std::mutex> g(next_mu);
        if (next >= cfg.replications || err) return;
        i = next++;
      }
      try {
        reps[i] = run_replication(p, ch, cfg, derive_seed(cfg.seed, i), cfg.record_trace && i == 0);
      } catch (...) {
        std::lock_guard<std::mutex> g(err_mu);
        if (!err) err = std::current_exception();
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (err) std::rethrow_exception(err);

  SimOutput out;
  RunSummary& s = out.summary;
  s.scheduler = to_string(cfg.scheduler);
  s.replications = cfg.replications;
  s.run_length = cfg.run_length;
  s.seed = cfg.seed;
  const auto types = static_cast<std::size_t>(p.num_frame_types());
  std::vector<double> tsum(types, 0.0);
  std::vector<std::size_t> tcnt(types, 0);
  double delivered = 0;
  std::size_t displayed = 0, slots = 0;
  s.chan_occupancy.assign(ch.size(), 0.0);
  for (const auto& r : reps) {
    s.replication_means.push_back(r.mean_mse);
    for (std::size_t k = 0; k < types; ++k) {
      tsum[k] += r.type_sum[k];
      tcnt[k] += r.type_count[k];
    }
    delivered += r.delivered_bits;
    displayed += r.displayed;
    slots += r.slots;
    s.policy_misses += r.policy_misses;
    for (std::size_t c = 0; c < ch.size(); ++c) s.chan_occupancy[c] += r.chan_visits[c];
  }
  for (auto& v : s.chan_occupancy) v /= static_cast<double>(slots);
  const double R = static_cast<double>(reps.size());
  for (double m : s.replication_means) s.mean_mse += m / R;
  if (reps.size() > 1) {
    double var = 0;
    for (double m : s.replication_means) var += (m - s.mean_mse) * (m - s.mean_mse);
    var /= (R - 1);
    s.ci_half = 1.96 * std::sqrt(var / R);
  }
  s.type_mse.assign(types, 0.0);
  for (std::size_t k = 0; k < types; ++k) s.type_mse[k] = tcnt[k] ? tsum[k] / static_cast<double>(tcnt[k]) : 0.0;
  s.throughput = delivered / static_cast<double>(slots);
  s.budget_per_frame = displayed ? delivered / static_cast<double>(displayed) : 0.0;
  s.bound = distortion_lower_bound(p, s.budget_per_frame).lower_bound;
  if (!reps.empty()) out.trace = std::move(reps.front().trace);
  return out;
}

inline void write_trace_csv(std::ostream& os, const std::vector<SlotRecord>& trace, std::uint64_t seed) {
  os << "# schema_version=" << kTraceSchemaVersion << " seed=" << seed << '\n';
  os << "slot,chan,frame_pos,frame_type,z_bits,mse,action,n_pkts\n";
  os << std::setprecision(10);
  for (const auto& r : trace)
    os << r.slot << ',' << r.chan << ',' << r.frame_pos << ',' << r.frame_type << ',' << r.z_bits << ',' << r.mse << ','
       << r.action << ',' << r.n_pkts << '\n';
}

inline Json summary_to_json(const RunSummary& s, const StreamProfile& p) {
  Json types = Json::object();
  for (int k = 0; k < p.num_frame_types(); ++k)
    types[FrameType::from_index(k).name()] = s.type_mse[static_cast<std::size_t>(k)];
  return {{"schema_version", kSummarySchemaVersion},
          {"scheduler", s.scheduler},
          {"seed", s.seed},
          {"replications", s.replications},
          {"run_length", s.run_length},
          {"mean_mse", s.mean_mse},
          {"ci_half_width", s.ci_half},
          {"type_mse", types},
          {"throughput_bits_per_slot", s.throughput},
          {"budget_bits_per_frame", s.budget_per_frame},
          {"bound_mse", s.bound},
          {"policy_misses", s.policy_misses},
          {"channel_occupancy", s.chan_occupancy}};
}

inline RunSummary summary_from_json(const Json& j) {
  RunSummary s;
  s.scheduler = j.at("scheduler").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.replications = j.at("replications").get<std::size_t>();
  s.run_length = j.at("run_length").get<std::size_t>();
  s.mean_mse = j.at("mean_mse").get<double>();
  s.ci_half = j.at("ci_half_width").get<double>();
  s.throughput = j.at("throughput_bits_per_slot").get<double>();
  s.budget_per_frame = j.at("budget_bits_per_frame").get<double>();
  s.bound = j.at("bound_mse").get<double>();
  s.policy_misses = json_get<std::size_t>(j, "policy_misses", 0);
  return s;
}

struct ReportRow {
  std::string name;
  double mean = 0;
  double ci_half = 0;
  double gap_pct = 0;  // relative to the bound
};

struct Report {
  double bound = 0;
  std::vector<ReportRow> rows;
};

// Rows per scheduler plus the bound; a scheduler beating the bound by more
// than three half-widths means a bug and raises.
inline Report compare(const std::vector<RunSummary>& summaries, const BoundResult& bound) {
  Report rep;
  rep.bound = bound.lower_bound;
  for (const auto& s : summaries) {
    if (s.mean_mse < bound.lower_bound - 3.0 * s.ci_half - 1e-9)
      throw Error("bound_violation", "scheduler " + s.scheduler + " mean " + std::to_string(s.mean_mse) +
                                         " lies below the lower bound " + std::to_string(bound.lower_bound));
    rep.rows.push_back({s.scheduler, s.mean_mse, s.ci_half, 100.0 * (s.mean_mse - bound.lower_bound) / bound.lower_bound});
  }
  return rep;
}

inline std::string render_report(const Report& r) {
  std::ostringstream os;
  os << std::left << std::setw(18) << "scheduler" << std::right << std::setw(12) << "mean_mse" << std::setw(12)
     << "ci95" << std::setw(12) << "gap_%" << '\n';
  os << std::fixed << std::setprecision(4);
  os << std::left << std::setw(18) << "bound" << std::right << std::setw(12) << r.bound << std::setw(12) << "-"
     << std::setw(12) << 0.0 << '\n';
  for (const auto& row : r.rows)
    os << std::left << std::setw(18) << row.name << std::right << std::setw(12) << row.mean << std::setw(12)
       << row.ci_half << std::setw(12) << row.gap_pct << '\n';
  return os.str();
}

}  // namespace svs
