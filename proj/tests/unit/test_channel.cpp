#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "svs/channel.hpp"
#include "svs/error.hpp"
#include "svs/rng.hpp"

using namespace svs;

namespace {

FsmcParams params(double fd, int n, Partition part = Partition::EqualProbability) {
  FsmcParams p;
  p.doppler_hz = fd;
  p.num_states = n;
  p.partition = part;
  return p;
}

void expect_valid_chain(const ChannelModel& m) {
  for (std::size_t i = 0; i < m.size(); ++i) {
    double s = 0;
    for (std::size_t j = 0; j < m.size(); ++j) {
      const double v = m.transition()[i][j];
      EXPECT_GE(v, 0.0);
      if (j + 1 < i || j > i + 1) EXPECT_EQ(v, 0.0);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

}  // namespace

TEST(SymbolErrorRate, BpskHighPrecision) {
  // 2Q(sqrt(20)) = erfc(sqrt(10)).
  EXPECT_NEAR(symbol_error_rate(1, 10.0), std::erfc(std::sqrt(10.0)), 1e-12 * std::erfc(std::sqrt(10.0)));
  EXPECT_NEAR(symbol_error_rate(1, 10.0), 7.744e-6, 1e-8);
}

TEST(SymbolErrorRate, ZeroSnrClampsToOne) {
  for (int m = 1; m <= 3; ++m) EXPECT_DOUBLE_EQ(symbol_error_rate(m, 0.0), 1.0);
}

TEST(SymbolErrorRate, HigherOrderIsWorse) {
  for (double s : {0.5, 2.0, 10.0, 40.0}) {
    EXPECT_GT(symbol_error_rate(3, s), symbol_error_rate(1, s));
    EXPECT_GT(symbol_error_rate(3, s), symbol_error_rate(2, s));
  }
  EXPECT_THROW(symbol_error_rate(4, 1.0), Error);
}

TEST(Packetize, QpskAtThirtyFps) {
  const auto pk = packetize(2, 30.0, 0.0);
  EXPECT_EQ(pk.packet_bits, 4096);
  EXPECT_EQ(pk.packets, 23);
  EXPECT_NEAR(pk.bits_per_slot, (1.0 / 30.0) / 1.5e-3 * 4096, 1e-9);
  EXPECT_EQ(pk.packet_error, 0.0);
  EXPECT_EQ(packetize(1, 30.0, 1.0).packet_error, 1.0);
  EXPECT_NEAR(packetize(1, 30.0, 1e-4).packet_error, 1.0 - std::pow(1.0 - 1e-4, 2048), 1e-12);
}

TEST(LevelCrossing, AtAverageSnr) {
  EXPECT_NEAR(level_crossing_rate(1.0, 5.0), std::sqrt(2 * M_PI) * 5.0 * std::exp(-1.0), 1e-12);
}

TEST(BuildFsmc, SingleStateUsesAverageSnr) {
  const auto m = build_fsmc(params(5.0, 1));
  ASSERT_EQ(m.size(), 1u);
  EXPECT_NEAR(m.state(0).snr, 10.0, 1e-9);
  EXPECT_DOUBLE_EQ(m.transition()[0][0], 1.0);
}

TEST(BuildFsmc, ThreeHertzEqualProbability) {
  const auto m = build_fsmc(params(3.0, 4));
  expect_valid_chain(m);
  for (double pi : m.stationary()) EXPECT_NEAR(pi, 0.25, 1e-6);
  for (std::size_t i = 1; i < m.size(); ++i) {
    EXPECT_GT(m.state(i).snr, m.state(i - 1).snr);
    EXPECT_GE(m.state(i).throughput(), m.state(i - 1).throughput());
  }
}

TEST(BuildFsmc, TransitionsUseSharedThresholds) {
  const auto m = build_fsmc(params(3.0, 4));
  const auto u = detail::equal_probability_thresholds(4);
  const double dt = 1.0 / 30.0;
  EXPECT_NEAR(m.transition()[0][1], level_crossing_rate(u[1], 3.0) * dt / 0.25, 1e-12);
  EXPECT_NEAR(m.transition()[1][0], level_crossing_rate(u[1], 3.0) * dt / 0.25, 1e-12);
  EXPECT_NEAR(m.transition()[2][3], level_crossing_rate(u[3], 3.0) * dt / 0.25, 1e-12);
}

TEST(BuildFsmc, ModulationIsArgmax) {
  for (double fd : {1.0, 3.0}) {
    const auto m = build_fsmc(params(fd, 4));
    for (const auto& s : m.states()) {
      for (int k = 1; k <= 3; ++k) {
        const auto pk = packetize(k, 30.0, symbol_error_rate(k, s.snr));
        EXPECT_LE(pk.bits_per_slot * (1 - pk.packet_error), s.throughput() + 1e-9);
      }
    }
  }
}

TEST(BuildFsmc, FastFadingIsRejected) {
  try {
    build_fsmc(params(500.0, 4));
    FAIL() << "expected a slow-fading error";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "slow_fading");
    EXPECT_NE(std::string(e.what()).find("P["), std::string::npos);
  }
}

TEST(BuildFsmc, FiveHertzEqualProbabilityViolatesSlowFading) {
  EXPECT_THROW(build_fsmc(params(5.0, 4)), Error);
}

TEST(BuildFsmc, EqualDurationPartitionAtFiveHertz) {
  const auto m = build_fsmc(params(5.0, 4, Partition::EqualDuration));
  expect_valid_chain(m);
  // Every region has the same mean sojourn time pi_i / (outflow rate).
  const auto& P = m.transition();
  std::vector<double> sojourn;
  for (std::size_t i = 0; i < m.size(); ++i) sojourn.push_back(1.0 / (1.0 - P[i][i]));
  for (double s : sojourn) EXPECT_NEAR(s, sojourn.front(), 1e-6 * sojourn.front());
  double total = std::accumulate(m.stationary().begin(), m.stationary().end(), 0.0);
  EXPECT_NEAR(total, 1.0, 1e-12);
}

TEST(BuildFsmc, StationaryMatchesRegionProbabilities) {
  for (auto part : {Partition::EqualProbability, Partition::EqualDuration}) {
    const auto m = build_fsmc(params(2.0, 4, part));
    const auto& th = m.thresholds();
    const double avg = 10.0;
    for (std::size_t i = 0; i < m.size(); ++i) {
      const double a = th[i] / avg, b = th[i + 1] / avg;
      const double pi = std::exp(-a) - (std::isfinite(b) ? std::exp(-b) : 0.0);
      EXPECT_NEAR(m.stationary()[i], pi, 1e-6);
    }
  }
}

TEST(SampleTrace, IdentityChainIsConstant) {
  ChannelModel m({fixtures::make_state(100, 1, 0), fixtures::make_state(100, 2, 0)}, {{1, 0}, {0, 1}}, 1.0 / 30);
  const auto t = sample_trace(m, 500, 3);
  for (int s : t) EXPECT_EQ(s, t.front());
}

TEST(SampleTrace, InitialStateFollowsStationaryLaw) {
  const auto m = fixtures::toy_channel();
  const int n = 20000;
  int ones = 0;
  for (int s = 0; s < n; ++s) ones += sample_trace(m, 1, derive_seed(77, s)).front();
  const double p = m.stationary()[1];
  EXPECT_NEAR(ones / static_cast<double>(n), p, 4 * std::sqrt(p * (1 - p) / n));
}

TEST(SampleTrace, TransitionCountsMatchMatrix) {
  const auto m = build_fsmc(params(3.0, 4));
  const auto t = sample_trace(m, 1000000, 11);
  std::vector<std::vector<double>> c(4, std::vector<double>(4, 0));
  for (std::size_t i = 0; i + 1 < t.size(); ++i) c[t[i]][t[i + 1]] += 1;
  for (int i = 0; i < 4; ++i) {
    const double row = std::accumulate(c[i].begin(), c[i].end(), 0.0);
    for (int j = 0; j < 4; ++j) {
      const double p = m.transition()[i][j];
      EXPECT_NEAR(c[i][j] / row, p, 4 * std::sqrt(p * (1 - p) / row) + 1e-12);
    }
  }
  EXPECT_EQ(sample_trace(m, 1000, 5), sample_trace(m, 1000, 5));
}

TEST(Ar1, EstimatesSyntheticRho) {
  Rng rng(2024);
  const double rho = 0.7, avg = 5000;
  std::vector<double> x(100000);
  double r = avg;
  for (auto& v : x) {
    r = avg * (1 - rho) + rho * r + 300 * rng.normal();
    v = r;
  }
  const auto m = estimate_ar1(x);
  EXPECT_NEAR(m.rho, rho, 0.05);
  EXPECT_NEAR(m.r_avg, avg, 20);
  EXPECT_EQ(m.zeta, 3);
}

TEST(Ar1, HorizonFromRho) {
  EXPECT_EQ(make_ar1(1, std::exp(-1.0)).zeta, 1);
  EXPECT_EQ(make_ar1(1, 0.5).zeta, 2);
  EXPECT_EQ(make_ar1(1, 0.9).zeta, 10);
}

TEST(Ar1, ConstantAndIidSeries) {
  std::vector<double> flat(200, 7.0);
  const auto c = estimate_ar1(flat);
  EXPECT_TRUE(c.degenerate);
  EXPECT_DOUBLE_EQ(c.rho, kRhoFloor);
  EXPECT_EQ(c.zeta, 1);
  Rng rng(9);
  std::vector<double> iid(50000);
  for (auto& v : iid) v = rng.uniform();
  const auto m = estimate_ar1(iid);
  EXPECT_LT(m.rho, 0.02);
  EXPECT_EQ(m.zeta, 1);
  EXPECT_THROW(estimate_ar1(std::vector<double>(99, 1.0)), Error);
}

TEST(Forecast, HandExamples) {
  EXPECT_DOUBLE_EQ(forecast_capacity(make_ar1(800, 0.3), 1234), 1234);
  EXPECT_DOUBLE_EQ(forecast_capacity(make_ar1(800, 0.5), 1000), 1900);
  const auto m = make_ar1(800, 0.9);
  EXPECT_NEAR(forecast_capacity(m, 800), m.zeta * 800.0, 1e-9);
}

TEST(Forecast, MonotoneInInputs) {
  const auto m = make_ar1(800, 0.8);
  double prev = -1;
  for (double r = 0; r < 3000; r += 100) {
    const double g = forecast_capacity(m, r);
    EXPECT_GE(g, prev);
    prev = g;
    EXPECT_GE(forecast_capacity(make_ar1(900, 0.8), r), g);
  }
}
