#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "svs/error.hpp"
#include "svs/stream.hpp"

using namespace svs;

namespace {

StreamProfile geometry(int f_intra, int f_gop) {
  const int T = static_cast<int>(std::log2(f_gop));
  std::vector<std::vector<Bits>> sizes(static_cast<std::size_t>(T + 2), std::vector<Bits>{800, 800});
  return StreamProfile("g", f_intra, f_gop, 1, 30.0, sizes, {10.0, 5.0}, 40.0);
}

// Lower convex hull value at z by brute force over all point pairs.
double hull_oracle(const std::vector<EnvelopeKnot>& pts, double z) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& a : pts) {
    if (a.z == z) best = std::min(best, a.d);
    for (const auto& b : pts) {
      if (!(a.z < z && z < b.z)) continue;
      const double t = (z - a.z) / (b.z - a.z);
      best = std::min(best, a.d + t * (b.d - a.d));
    }
  }
  if (z > pts.back().z) best = std::min(best, pts.back().d);
  return best;
}

}  // namespace

TEST(FrameTypeAt, KeyAndHierarchicalBPositions) {
  const auto p = geometry(8, 4);
  EXPECT_EQ(p.frame_type_at(0).kind, FrameKind::I);
  EXPECT_EQ(p.frame_type_at(4).kind, FrameKind::P);
  EXPECT_EQ(p.frame_type_at(2), (FrameType{FrameKind::B, 1}));
  EXPECT_EQ(p.frame_type_at(1), (FrameType{FrameKind::B, 2}));
  EXPECT_EQ(p.frame_type_at(3), (FrameType{FrameKind::B, 2}));
  EXPECT_EQ(p.frame_type_at(6), (FrameType{FrameKind::B, 1}));
}

TEST(FrameTypeAt, RejectsOutOfRange) {
  const auto p = geometry(8, 4);
  EXPECT_THROW(p.frame_type_at(8), Error);
  EXPECT_THROW(p.frame_type_at(-1), Error);
}

TEST(FrameTypeAt, KeyPictureCountPerPeriod) {
  for (auto [fi, fg] : {std::pair{8, 4}, {16, 4}, {16, 8}, {4, 2}, {32, 16}}) {
    const auto p = geometry(fi, fg);
    int keys = 0, intra = 0;
    for (int pos = 0; pos < fi; ++pos) {
      const auto k = p.frame_type_at(pos);
      keys += k.is_key();
      intra += k.kind == FrameKind::I;
    }
    EXPECT_EQ(keys, fi / fg);
    EXPECT_EQ(intra, 1);
  }
}

TEST(FrameTypeAt, DeepHierarchyLevels) {
  const auto p = geometry(16, 8);
  EXPECT_EQ(p.frame_type_at(4), (FrameType{FrameKind::B, 1}));
  EXPECT_EQ(p.frame_type_at(2), (FrameType{FrameKind::B, 2}));
  EXPECT_EQ(p.frame_type_at(6), (FrameType{FrameKind::B, 2}));
  EXPECT_EQ(p.frame_type_at(5), (FrameType{FrameKind::B, 3}));
}

TEST(Profile, RejectsInvalidGeometry) {
  std::vector<std::vector<Bits>> s3(3, std::vector<Bits>{8, 8});
  EXPECT_THROW(StreamProfile("x", 6, 3, 1, 30.0, s3, {2.0, 1.0}, 4.0), Error);
  EXPECT_THROW(StreamProfile("x", 6, 4, 1, 30.0, std::vector<std::vector<Bits>>(4, {8, 8}), {2.0, 1.0}, 4.0), Error);
  EXPECT_THROW(StreamProfile("x", 4, 2, 1, 30.0, s3, {1.0, 2.0}, 4.0), Error);
  EXPECT_THROW(StreamProfile("x", 4, 2, 1, 30.0, s3, {2.0, 1.0}, 1.0), Error);
}

TEST(BundledProfiles, ForemanTableRow) {
  const auto p = bundled_profile("foreman");
  EXPECT_EQ(p.f_intra(), 16);
  EXPECT_EQ(p.f_gop(), 4);
  EXPECT_EQ(p.num_layers(), 2);
  EXPECT_EQ(p.unit_bits({FrameKind::I, 0}, 0), 6712 * 8);
  EXPECT_EQ(p.unit_bits({FrameKind::B, 1}, 0), 928 * 8);
  EXPECT_EQ(p.unit_bits({FrameKind::B, 2}, 2), 1893 * 8);
  EXPECT_DOUBLE_EQ(p.d_layer(0), 16.27);
  EXPECT_DOUBLE_EQ(p.d_full(), 4.124);
  EXPECT_DOUBLE_EQ(p.d_loss(), 4 * 16.27);
  EXPECT_EQ(bundled_profile_names().size(), 5u);
  EXPECT_THROW(bundled_profile("akiyo"), Error);
}

TEST(RdDistortion, ForemanIntraSteps) {
  const auto p = bundled_profile("foreman");
  const FrameType I{FrameKind::I, 0};
  EXPECT_DOUBLE_EQ(rd_distortion(p, I, 6712 * 8), 16.27);
  EXPECT_DOUBLE_EQ(rd_distortion(p, I, (6712 + 8302 + 5844) * 8), 4.124);
  EXPECT_DOUBLE_EQ(rd_distortion(p, I, 0), p.d_loss());
  EXPECT_DOUBLE_EQ(rd_distortion(p, I, 6712 * 8 - 1), p.d_loss());
  EXPECT_DOUBLE_EQ(rd_distortion(p, I, (6712 + 8302) * 8), 5.491);
  EXPECT_THROW(rd_distortion(p, I, -1), Error);
}

TEST(RdDistortion, MonotoneAndRightContinuous) {
  for (const auto& name : bundled_profile_names()) {
    const auto p = bundled_profile(name);
    for (int k = 0; k < p.num_frame_types(); ++k) {
      const auto t = FrameType::from_index(k);
      double prev = std::numeric_limits<double>::infinity();
      for (double z = 0; z <= p.frame_bits(t, 3) + 1000; z += 97) {
        const double d = rd_distortion(p, t, z);
        EXPECT_LE(d, prev);
        prev = d;
      }
      double cum = 0;
      for (int l = 0; l < p.quality_layers(); ++l) {
        cum += static_cast<double>(p.unit_bits(t, l));
        EXPECT_DOUBLE_EQ(rd_distortion(p, t, cum), p.d_layer(l));
        EXPECT_DOUBLE_EQ(rd_distortion(p, t, cum + 1e-6), p.d_layer(l));
        EXPECT_GT(rd_distortion(p, t, cum - 1e-6), p.d_layer(l));
      }
    }
  }
}

TEST(ConvexEnvelope, SingleSegmentMidpoint) {
  const auto e = lower_hull({{0, 100}, {1000, 10}});
  EXPECT_DOUBLE_EQ(e(500), 55.0);
  EXPECT_DOUBLE_EQ(e(5000), 10.0);
}

TEST(ConvexEnvelope, MatchesBruteForceHull) {
  for (const auto& name : bundled_profile_names()) {
    const auto p = bundled_profile(name);
    for (int k = 0; k < p.num_frame_types(); ++k) {
      const auto t = FrameType::from_index(k);
      const auto pts = rd_points(p, t);
      const auto env = convex_envelope(p, t);
      const double top = pts.back().z;
      for (int i = 0; i <= 2000; ++i) {
        const double z = top * 1.1 * i / 2000.0;
        EXPECT_NEAR(env(z), hull_oracle(pts, z), 1e-9) << name << " " << t.name() << " z=" << z;
      }
      EXPECT_DOUBLE_EQ(env(top), p.d_full());
    }
  }
}

TEST(ConvexEnvelope, ConvexNonIncreasingBelowStep) {
  for (const auto& name : bundled_profile_names()) {
    const auto p = bundled_profile(name);
    for (int k = 0; k < p.num_frame_types(); ++k) {
      const auto t = FrameType::from_index(k);
      const auto env = convex_envelope(p, t);
      for (std::size_t s = 0; s + 1 < env.knots.size(); ++s) {
        EXPECT_LE(env.slope(s), 0.0);
        if (s > 0) EXPECT_GE(env.slope(s), env.slope(s - 1));
      }
      for (double z = 0; z < p.frame_bits(t, 3) * 1.2; z += 53) EXPECT_LE(env(z), rd_distortion(p, t, z) + 1e-12);
    }
  }
}

TEST(Geometry, ReferenceOffsets) {
  const auto p = geometry(16, 4);
  EXPECT_TRUE(p.reference_offsets(0).empty());
  EXPECT_EQ(p.reference_offsets(4), (std::vector<int>{-4}));
  EXPECT_EQ(p.reference_offsets(2), (std::vector<int>{-2, 2}));
  EXPECT_EQ(p.reference_offsets(1), (std::vector<int>{-1, 1}));
  EXPECT_EQ(p.reference_offsets(7), (std::vector<int>{-1, 1}));
  EXPECT_TRUE(p.opens_gop(5));
  EXPECT_EQ(p.offset_to_gop_key(5), 3);
}

TEST(Geometry, FramesPerPeriodSumToPeriod) {
  for (auto [fi, fg] : {std::pair{16, 4}, {8, 8}, {4, 2}}) {
    const auto p = geometry(fi, fg);
    int total = 0;
    for (int k = 0; k < p.num_frame_types(); ++k) total += p.frames_per_period(FrameType::from_index(k));
    EXPECT_EQ(total, fi);
    std::vector<int> counted(static_cast<std::size_t>(p.num_frame_types()), 0);
    for (int pos = 0; pos < fi; ++pos) ++counted[static_cast<std::size_t>(p.frame_type_at(pos).index())];
    for (int k = 0; k < p.num_frame_types(); ++k)
      EXPECT_EQ(counted[static_cast<std::size_t>(k)], p.frames_per_period(FrameType::from_index(k)));
  }
}
