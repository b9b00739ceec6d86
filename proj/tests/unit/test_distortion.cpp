#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "fixtures.hpp"
#include "svs/distortion.hpp"
#include "svs/error.hpp"
#include "svs/rng.hpp"

using namespace svs;

namespace {

FrameBuffer make_buffer(int position, std::vector<int> pre, std::vector<int> ahead) {
  FrameBuffer b;
  b.position = position;
  for (int c : pre) b.pre.push_back(static_cast<std::uint8_t>(c));
  for (int c : ahead) b.ahead.push_back(static_cast<std::uint8_t>(c));
  return b;
}

// Independent recursion straight from the drift formula, without clamping
// shortcuts: key frames use their own step value, B frames add the mean
// reference excess over d_L.
double oracle(const StreamProfile& p, const FrameBuffer& b, int f) {
  const int c = b.count(f);
  if (c == 0) return p.d_loss();
  const double own = c >= p.quality_layers() ? p.d_full() : p.d_layer(c - 1);
  const int pos = p.wrap(static_cast<long long>(b.position) + f);
  const auto t = p.frame_type_at(pos);
  if (t.is_key()) return own;
  const auto offs = p.reference_offsets(pos);
  const double r1 = oracle(p, b, f + offs[0]), r2 = oracle(p, b, f + offs[1]);
  return std::clamp(own + (r1 - p.d_full()) / 2 + (r2 - p.d_full()) / 2, p.d_full(), p.d_loss());
}

FrameBuffer random_buffer(const StreamProfile& p, Rng& rng) {
  FrameBuffer b;
  b.position = static_cast<int>(rng.uniform_int(0, p.f_intra() - 1));
  const int n = p.f_gop();
  for (int i = 0; i < n; ++i) b.pre.push_back(static_cast<std::uint8_t>(rng.uniform_int(0, p.quality_layers())));
  for (int i = 0; i < 2 * n; ++i) b.ahead.push_back(static_cast<std::uint8_t>(rng.uniform_int(0, p.quality_layers())));
  return b;
}

}  // namespace

TEST(Distortion, FullKeyPictureIsFinestLayer) {
  const auto p = bundled_profile("foreman");
  EXPECT_DOUBLE_EQ(frame_distortion(p, make_buffer(0, {}, {3}), 0), 4.124);
  EXPECT_DOUBLE_EQ(frame_distortion(p, make_buffer(4, {}, {1}), 0), 16.27);
  EXPECT_DOUBLE_EQ(frame_distortion(p, make_buffer(4, {}, {0}), 0), p.d_loss());
}

TEST(Distortion, FullBFrameWithFullReferencesHasNoDrift) {
  const auto p = bundled_profile("foreman");
  EXPECT_DOUBLE_EQ(frame_distortion(p, make_buffer(2, {3, 3}, {3, 3, 3}), 0), p.d_full());
  EXPECT_DOUBLE_EQ(b_frame_distortion(4.124, 4.124, 4.124, 4.124), 4.124);
}

TEST(Distortion, BFrameFormulaHandEvaluation) {
  const auto p = bundled_profile("foreman");
  // Own layers 0..1 give 5.491; references at 10 each add 10 - 4.124.
  EXPECT_NEAR(b_frame_distortion(p.d_layer(1), 10.0, 10.0, p.d_full()), 5.491 + 10.0 - 4.124, 1e-12);
  // Position 2 of foreman: references are the I at position 0 (base only)
  // and the P at position 4 (complete).
  const auto b = make_buffer(2, {1, 3}, {2, 3, 3});
  EXPECT_NEAR(frame_distortion(p, b, 0), 5.491 + 0.5 * (16.27 + 4.124) - 4.124, 1e-12);
}

TEST(Distortion, DriftPropagatesThroughHierarchy) {
  const auto p = bundled_profile("foreman");
  // Position 1 (B2) refers to the I at 0 and the B1 at 2, which refers to 0 and 4.
  const auto b = make_buffer(1, {1}, {3, 2, 3, 3});
  const double b1 = 5.491 + 0.5 * (16.27 + 4.124) - 4.124;
  EXPECT_NEAR(frame_distortion(p, b, 1), b1, 1e-12);
  EXPECT_NEAR(frame_distortion(p, b, 0), 4.124 + 0.5 * (16.27 + b1) - 4.124, 1e-12);
}

TEST(Distortion, LostReferenceFeedsConcealmentIntoDrift) {
  const auto p = bundled_profile("foreman");
  const auto b = make_buffer(2, {0, 3}, {3, 3, 3});
  EXPECT_NEAR(frame_distortion(p, b, 0), 4.124 + 0.5 * (p.d_loss() + 4.124) - 4.124, 1e-12);
}

TEST(Distortion, NeverWorseThanConcealment) {
  const auto p = bundled_profile("foreman");
  // Base layer of a B frame whose references are both lost.
  const auto b = make_buffer(2, {0, 3}, {1, 3, 0});
  EXPECT_DOUBLE_EQ(frame_distortion(p, b, 0), p.d_loss());
  EXPECT_DOUBLE_EQ(b_frame_distortion(16.27, 65.08, 65.08, 4.124, 65.08), 65.08);
}

TEST(Distortion, MatchesOracleOnRandomBuffers) {
  Rng rng(31);
  for (const auto& name : bundled_profile_names()) {
    const auto p = bundled_profile(name);
    for (int it = 0; it < 300; ++it) {
      const auto b = random_buffer(p, rng);
      EXPECT_NEAR(displayed_distortion(p, b), oracle(p, b, 0), 1e-9);
    }
  }
}

TEST(Distortion, BoundedBelowByOwnAndFinestLayer) {
  Rng rng(5);
  const auto p = fixtures::hier_profile();
  for (int it = 0; it < 2000; ++it) {
    const double own = p.distortion_for_count(static_cast<int>(rng.uniform_int(1, p.quality_layers())));
    const double r1 = p.d_full() + 50 * rng.uniform(), r2 = p.d_full() + 50 * rng.uniform();
    EXPECT_GE(b_frame_distortion(own, r1, r2, p.d_full()), own);
    const auto b = random_buffer(p, rng);
    EXPECT_GE(displayed_distortion(p, b), p.d_full());
  }
}

TEST(Distortion, EqualsFinestLayerOnlyWithCompleteReferenceChain) {
  const auto p = fixtures::hier_profile();
  const int full = p.quality_layers();
  FrameBuffer b = make_buffer(1, {full}, {full, full, full, full});
  EXPECT_DOUBLE_EQ(displayed_distortion(p, b), p.d_full());
  for (int f : {-1, 0, 1, 3}) {
    FrameBuffer c = b;
    c.set(f, full - 1);
    EXPECT_GT(displayed_distortion(p, c), p.d_full()) << f;
  }
  FrameBuffer d = b;
  d.set(2, full - 1);  // frame 2 is not referenced by frame 0
  EXPECT_DOUBLE_EQ(displayed_distortion(p, d), p.d_full());
}

TEST(Distortion, MonotoneInReceivedData) {
  Rng rng(8);
  for (const auto& name : bundled_profile_names()) {
    const auto p = bundled_profile(name);
    for (int it = 0; it < 300; ++it) {
      auto b = random_buffer(p, rng);
      const double before = displayed_distortion(p, b);
      const int f = static_cast<int>(rng.uniform_int(-static_cast<long long>(b.pre.size()), 2 * p.f_gop() - 1));
      if (b.count(f) == p.quality_layers()) continue;
      b.set(f, b.count(f) + 1);
      EXPECT_LE(displayed_distortion(p, b), before + 1e-12);
    }
  }
}

TEST(DistortionContext, FreezesCountsAtGopDecode) {
  const auto p = bundled_profile("foreman");
  // Position 1 opens the GOP 1..4; its key picture is the P at 4.
  auto b = make_buffer(1, {1}, {3, 2, 3, 3});
  ASSERT_TRUE(p.opens_gop(1));
  DistortionContext ctx(p);
  EXPECT_DOUBLE_EQ(ctx.displayed(b), frame_distortion(p, b, 0));
  const double expect_next = frame_distortion(p, b, 1);
  // Data arriving after the decode instant does not change what is shown.
  b.set(1, 3);
  b.set(-1, 3);
  FrameBuffer next = b;
  next.position = 2;
  next.pre = {b.pre[0], b.ahead[0]};
  next.ahead.erase(next.ahead.begin());
  EXPECT_LT(frame_distortion(p, next, 0), expect_next);
  EXPECT_DOUBLE_EQ(ctx.displayed(next), expect_next);
  EXPECT_DOUBLE_EQ(ctx.reference(-1), 16.27);
  EXPECT_THROW(ctx.reference(40), Error);
}

TEST(Dmos, ReferencePoint) {
  EXPECT_NEAR(dmos_from_msssim(0.9), 46.648, 1e-3);
  EXPECT_NEAR(dmos_from_msssim(0.9), 13.3442 * std::log(0.1) + 0.36226 + 77.0117, 1e-12);
}

TEST(Dmos, DomainAndMonotonicity) {
  EXPECT_THROW(dmos_from_msssim(0.0), Error);
  EXPECT_THROW(dmos_from_msssim(1.0), Error);
  EXPECT_THROW(dmos_from_msssim(-0.2), Error);
  EXPECT_LT(dmos_from_msssim(0.95), dmos_from_msssim(0.90));
  double prev = std::numeric_limits<double>::infinity();
  for (int i = 1; i < 1000; ++i) {
    const double d = dmos_from_msssim(i / 1000.0);
    EXPECT_LT(d, prev);
    prev = d;
  }
}

TEST(Dmos, CsvSeriesMean) {
  const std::string path = ::testing::TempDir() + "msssim.csv";
  {
    std::ofstream out(path);
    out << "frame_index,msssim\n0,0.9\n1,0.95\n";
  }
  const auto s = read_msssim_csv(path);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_NEAR(mean_dmos(s), 0.5 * (dmos_from_msssim(0.9) + dmos_from_msssim(0.95)), 1e-12);
  std::remove(path.c_str());
  EXPECT_THROW(read_msssim_csv(path), Error);
}
