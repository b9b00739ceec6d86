#pragma once

// Finite-state Markov model of a Rayleigh-fading link with adaptive
// modulation, trace sampling, and the AR(1) throughput model used by the
// online scheduler.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svs/error.hpp"
#include "svs/rng.hpp"
#include "svs/stream.hpp"

namespace svs {

inline constexpr int kSymbolsPerPacket = 2048;
inline constexpr double kPacketSeconds = 1.5e-3;

struct ChannelState {
  double snr = 0;           // representative SNR, linear
  int modulation_bits = 1;  // M: 1 BPSK, 2 QPSK, 3 8PSK
  Bits packet_bits = 0;     // L^PHY
  int packets = 0;          // N, packet transmissions per slot
  double bits_per_slot = 0; // x
  double packet_error = 0;  // y

  double throughput() const { return bits_per_slot * (1.0 - packet_error); }
  Bits slot_capacity_bits() const { return packet_bits * packets; }
};

class ChannelModel {
 public:
  ChannelModel() = default;

  ChannelModel(std::vector<ChannelState> states, std::vector<std::vector<double>> transition,
               double slot_seconds, std::vector<double> thresholds = {})
      : states_(std::move(states)),
        transition_(std::move(transition)),
        thresholds_(std::move(thresholds)),
        slot_seconds_(slot_seconds) {
    const std::size_t n = states_.size();
    require(n >= 1, "channel", "channel needs at least one state");
    require(transition_.size() == n, "channel", "transition matrix has wrong row count");
    for (std::size_t i = 0; i < n; ++i) {
      const auto& row = transition_[i];
      require(row.size() == n, "channel", "transition matrix is not square");
      double sum = 0;
      for (std::size_t j = 0; j < n; ++j) {
        require(row[j] >= 0.0, "channel",
                "transition probability P[" + std::to_string(i) + "][" + std::to_string(j) +
                    "] = " + std::to_string(row[j]) + " is negative");
        sum += row[j];
      }
      require(std::abs(sum - 1.0) <= 1e-9, "channel",
              "row " + std::to_string(i) + " of the transition matrix sums to " + std::to_string(sum));
      const auto& s = states_[i];
      require(s.packet_error >= 0.0 && s.packet_error <= 1.0, "channel", "packet error outside [0,1]");
      require(s.packets >= 0 && s.packet_bits > 0, "channel", "invalid packetization");
    }
    stationary_ = solve_stationary();
  }

  std::size_t size() const { return states_.size(); }
  const ChannelState& state(std::size_t i) const { return states_[i]; }
  const std::vector<ChannelState>& states() const { return states_; }
  std::span<const double> row(std::size_t i) const { return transition_[i]; }
  const std::vector<std::vector<double>>& transition() const { return transition_; }
  const std::vector<double>& thresholds() const { return thresholds_; }
  const std::vector<double>& stationary() const { return stationary_; }
  double slot_seconds() const { return slot_seconds_; }

  // Ergodic throughput sum_i pi_i x_i (1 - y_i), bits per slot.
  double mean_throughput() const {
    double r = 0;
    for (std::size_t i = 0; i < size(); ++i) r += stationary_[i] * states_[i].throughput();
    return r;
  }

  // Expected delivered packet payload per slot, sum_i pi_i N_i (1 - y_i) L_i.
  double mean_delivered_bits() const {
    double r = 0;
    for (std::size_t i = 0; i < size(); ++i) {
      const auto& s = states_[i];
      r += stationary_[i] * s.packets * (1.0 - s.packet_error) * static_cast<double>(s.packet_bits);
    }
    return r;
  }

  std::size_t next_state(std::size_t i, Rng& rng) const { return rng.categorical(transition_[i]); }

 private:
  std::vector<double> solve_stationary() const {
    const auto n = static_cast<Eigen::Index>(size());
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        a(j, i) = transition_[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] - (i == j ? 1.0 : 0.0);
    a.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    Eigen::VectorXd pi = a.fullPivLu().solve(b);
    return {pi.data(), pi.data() + n};
  }

  std::vector<ChannelState> states_;
  std::vector<std::vector<double>> transition_;
  std::vector<double> thresholds_;
  std::vector<double> stationary_;
  double slot_seconds_ = 1.0 / 30.0;
};

// Q(x) via the complementary error function.
inline double q_function(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

inline double symbol_error_rate(int modulation_bits, double snr) {
  require(modulation_bits >= 1 && modulation_bits <= 3, "modulation",
          "unsupported modulation order M=" + std::to_string(modulation_bits));
  require(snr >= 0.0, "range", "SNR must be non-negative");
  const double s = std::sin(M_PI / static_cast<double>(1 << modulation_bits));
  const double p = 2.0 * q_function(std::sqrt(2.0 * snr) * s);
  return std::clamp(p, 0.0, 1.0);
}

inline double packet_error_rate(double symbol_error) {
  if (symbol_error <= 0.0) return 0.0;
  if (symbol_error >= 1.0) return 1.0;
  // 1 - (1-p)^2048 computed without cancellation.
  return -std::expm1(kSymbolsPerPacket * std::log1p(-symbol_error));
}

struct Packetization {
  Bits packet_bits = 0;
  int packets = 0;
  double bits_per_slot = 0;
  double packet_error = 0;
};

inline Packetization packetize(int modulation_bits, double frame_rate, double symbol_error) {
  require(modulation_bits >= 1 && modulation_bits <= 3, "modulation",
          "unsupported modulation order M=" + std::to_string(modulation_bits));
  Packetization out;
  out.packet_bits = static_cast<Bits>(kSymbolsPerPacket) * modulation_bits;
  const double per_slot = (1.0 / frame_rate) / kPacketSeconds;
  out.bits_per_slot = per_slot * static_cast<double>(out.packet_bits);
  out.packets = static_cast<int>(std::ceil(per_slot - 1e-9));
  out.packet_error = packet_error_rate(symbol_error);
  return out;
}

// Level-crossing rate of a normalized SNR threshold u = Lambda / Lambda_avg.
inline double level_crossing_rate(double u, double doppler_hz) {
  if (!std::isfinite(u) || u <= 0.0) return 0.0;
  return std::sqrt(2.0 * M_PI * u) * doppler_hz * std::exp(-u);
}

enum class Partition { EqualProbability, EqualDuration };

inline Partition parse_partition(const std::string& s) {
  if (s == "equal_probability") return Partition::EqualProbability;
  if (s == "equal_duration") return Partition::EqualDuration;
  throw Error("config", "unknown SNR partition '" + s + "'");
}

inline std::string to_string(Partition p) {
  return p == Partition::EqualProbability ? "equal_probability" : "equal_duration";
}

struct FsmcParams {
  double doppler_hz = 5.0;
  double snr_avg_db = 10.0;
  int num_states = 4;
  double frame_rate = 30.0;
  int max_modulation_bits = 3;
  Partition partition = Partition::EqualProbability;
};

namespace detail {

// Normalized thresholds u_0 = 0 < u_1 < ... < u_n = inf.
inline std::vector<double> equal_probability_thresholds(int n) {
  std::vector<double> u(static_cast<std::size_t>(n) + 1);
  u[0] = 0.0;
  for (int i = 1; i < n; ++i) u[static_cast<std::size_t>(i)] = -std::log1p(-static_cast<double>(i) / n);
  u[static_cast<std::size_t>(n)] = std::numeric_limits<double>::infinity();
  return u;
}

// Smallest root above `lo` of a function negative at lo; nullopt if none below hi.
template <class F>
std::optional<double> first_root(F f, double lo, double hi) {
  const int steps = 4000;
  double a = lo;
  double fa = f(a);
  for (int i = 1; i <= steps; ++i) {
    double b = lo + (hi - lo) * i / steps;
    const double fb = f(b);
    if (fa < 0 && fb >= 0) {
      for (int it = 0; it < 200; ++it) {
        const double m = 0.5 * (a + b);
        (f(m) < 0 ? a : b) = m;
      }
      return 0.5 * (a + b);
    }
    a = b;
    fa = fb;
  }
  return std::nullopt;
}

// Thresholds giving every region the same mean sojourn time. Shooting on the
// dimensionless duration tau' = tau * f_d.
inline std::vector<double> equal_duration_thresholds(int n) {
  auto k = [](double u) { return level_crossing_rate(u, 1.0); };
  auto shoot = [&](double tau, std::vector<double>& u) -> std::optional<double> {
    u.assign(static_cast<std::size_t>(n) + 1, 0.0);
    u[static_cast<std::size_t>(n)] = std::numeric_limits<double>::infinity();
    for (int j = 1; j < n; ++j) {
      const double prev = u[static_cast<std::size_t>(j) - 1];
      const double base = j == 1 ? 0.0 : tau * k(prev);
      auto f = [&](double x) { return std::exp(-prev) - std::exp(-x) - base - tau * k(x); };
      auto r = first_root(f, prev, prev + 30.0);
      if (!r) return std::nullopt;
      u[static_cast<std::size_t>(j)] = *r;
    }
    const double last = u[static_cast<std::size_t>(n) - 1];
    return std::exp(-last) - tau * k(last);
  };
  std::vector<double> u;
  double lo = 1e-6, hi = 10.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    auto r = shoot(mid, u);
    if (r && *r > 0)
      lo = mid;
    else
      hi = mid;
  }
  shoot(lo, u);
  return u;
}

inline double conditional_mean_exponential(double a, double b) {
  // E[X | a <= X < b] for X ~ Exp(1).
  const double ea = std::exp(-a);
  const double eb = std::isfinite(b) ? std::exp(-b) : 0.0;
  const double num = (a + 1.0) * ea - (std::isfinite(b) ? (b + 1.0) * eb : 0.0);
  return num / (ea - eb);
}

}  // namespace detail

inline ChannelModel build_fsmc(const FsmcParams& p) {
  require(p.num_states >= 1, "channel", "num_states must be >= 1");
  require(p.max_modulation_bits >= 1 && p.max_modulation_bits <= 3, "modulation",
          "max modulation must be 1, 2 or 3 bits/symbol");
  require(p.doppler_hz >= 0 && p.frame_rate > 0, "channel", "doppler and frame rate must be positive");
  const int n = p.num_states;
  const double avg = std::pow(10.0, p.snr_avg_db / 10.0);
  const double slot = 1.0 / p.frame_rate;
  const std::vector<double> u = n == 1 ? std::vector<double>{0.0, std::numeric_limits<double>::infinity()}
                                : p.partition == Partition::EqualProbability
                                    ? detail::equal_probability_thresholds(n)
                                    : detail::equal_duration_thresholds(n);
  std::vector<double> pi(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double a = u[static_cast<std::size_t>(i)], b = u[static_cast<std::size_t>(i) + 1];
    pi[static_cast<std::size_t>(i)] = std::exp(-a) - (std::isfinite(b) ? std::exp(-b) : 0.0);
  }

  std::vector<ChannelState> states;
  for (int i = 0; i < n; ++i) {
    ChannelState s;
    s.snr = avg * detail::conditional_mean_exponential(u[static_cast<std::size_t>(i)], u[static_cast<std::size_t>(i) + 1]);
    double best = -1.0;
    for (int m = 1; m <= p.max_modulation_bits; ++m) {
      const auto pk = packetize(m, p.frame_rate, symbol_error_rate(m, s.snr));
      const double thr = pk.bits_per_slot * (1.0 - pk.packet_error);
      if (thr > best) {
        best = thr;
        s.modulation_bits = m;
        s.packet_bits = pk.packet_bits;
        s.packets = pk.packets;
        s.bits_per_slot = pk.bits_per_slot;
        s.packet_error = pk.packet_error;
      }
    }
    states.push_back(s);
  }

  // Transitions only between neighbouring regions, through their shared threshold.
  std::vector<std::vector<double>> P(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(n), 0.0));
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    double stay = 1.0;
    if (i + 1 < n) {
      const double q = level_crossing_rate(u[ui + 1], p.doppler_hz) * slot / pi[ui];
      P[ui][ui + 1] = q;
      stay -= q;
    }
    if (i > 0) {
      const double q = level_crossing_rate(u[ui], p.doppler_hz) * slot / pi[ui];
      P[ui][ui - 1] = q;
      stay -= q;
    }
    if (stay < 0.0) {
      std::string msg = "slow-fading validity violated in state " + std::to_string(i) +
                        ": leaving probability " + std::to_string(1.0 - stay) + " > 1 (";
      if (i + 1 < n) msg += "P[" + std::to_string(i) + "][" + std::to_string(i + 1) + "]=" + std::to_string(P[ui][ui + 1]) + " ";
      if (i > 0) msg += "P[" + std::to_string(i) + "][" + std::to_string(i - 1) + "]=" + std::to_string(P[ui][ui - 1]);
      msg += "); lower the Doppler frequency, use fewer states, or pick another partition";
      throw Error("slow_fading", msg);
    }
    P[ui][ui] = stay;
  }
  std::vector<double> thresholds;
  for (double x : u) thresholds.push_back(x * avg);
  return ChannelModel(std::move(states), std::move(P), slot, std::move(thresholds));
}

// Markov-chain trace of state indices; starts from the stationary law.
inline std::vector<int> sample_trace(const ChannelModel& m, std::size_t length, std::uint64_t seed) {
  require(length >= 1, "range", "trace length must be >= 1");
  Rng rng(seed);
  std::vector<int> out;
  out.reserve(length);
  std::size_t s = rng.categorical(m.stationary());
  out.push_back(static_cast<int>(s));
  for (std::size_t t = 1; t < length; ++t) {
    s = m.next_state(s, rng);
    out.push_back(static_cast<int>(s));
  }
  return out;
}

struct Ar1Model {
  double r_avg = 0;  // bits per slot
  double rho = 0.5;
  int zeta = 1;      // forecast horizon, slots
  bool degenerate = false;  // set when the series had no variance
};

inline constexpr double kRhoFloor = 1e-6;

inline int relaxation_slots(double rho) {
  const double t = -1.0 / std::log(rho);
  return std::max(1, static_cast<int>(std::ceil(t - 1e-9)));
}

inline Ar1Model make_ar1(double r_avg, double rho) {
  Ar1Model m;
  m.r_avg = r_avg;
  m.rho = std::clamp(rho, kRhoFloor, 1.0 - kRhoFloor);
  m.zeta = relaxation_slots(m.rho);
  return m;
}

inline Ar1Model estimate_ar1(std::span<const double> series) {
  require(series.size() >= 100, "range", "AR(1) estimation needs at least 100 samples");
  double mean = 0;
  for (double v : series) mean += v;
  mean /= static_cast<double>(series.size());
  double var = 0, cov = 0;
  for (std::size_t t = 0; t < series.size(); ++t) {
    const double d = series[t] - mean;
    var += d * d;
    if (t + 1 < series.size()) cov += d * (series[t + 1] - mean);
  }
  if (var <= 0.0) {
    Ar1Model m = make_ar1(mean, kRhoFloor);
    m.degenerate = true;
    return m;
  }
  return make_ar1(mean, cov / var);
}

// Expected bits delivered over the next zeta slots given the current rate.
inline double forecast_capacity(const Ar1Model& m, double r_now) {
  require(r_now >= 0, "range", "current rate must be non-negative");
  double g = 0, pw = 1.0;
  for (int a = 0; a < m.zeta; ++a) {
    g += r_now * pw + m.r_avg * (1.0 - pw);
    pw *= m.rho;
  }
  return g;
}

// Throughput series x(1-y) along a sampled trace, for AR(1) estimation.
inline std::vector<double> throughput_series(const ChannelModel& m, std::size_t length, std::uint64_t seed) {
  std::vector<double> out;
  out.reserve(length);
  for (int s : sample_trace(m, length, seed)) out.push_back(m.state(static_cast<std::size_t>(s)).throughput());
  return out;
}

}  // namespace svs
