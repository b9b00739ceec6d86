#pragma once

// Scalable video stream model: intra-period / hierarchical-B layout, per-layer
// data-unit sizes and the step rate-distortion functions with their convex
// envelopes.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "svs/error.hpp"

namespace svs {

using Bits = std::int64_t;

enum class FrameKind { I, P, B };

struct FrameType {
  FrameKind kind = FrameKind::I;
  int level = 0;  // temporal layer; 0 for key pictures

  // Dense index into per-type tables: I -> 0, P -> 1, B^tau -> 1 + tau.
  int index() const {
    switch (kind) {
      case FrameKind::I: return 0;
      case FrameKind::P: return 1;
      default: return 1 + level;
    }
  }

  bool is_key() const { return kind != FrameKind::B; }

  std::string name() const {
    switch (kind) {
      case FrameKind::I: return "I";
      case FrameKind::P: return "P";
      default: return "B" + std::to_string(level);
    }
  }

  static FrameType from_index(int k) {
    if (k == 0) return {FrameKind::I, 0};
    if (k == 1) return {FrameKind::P, 0};
    return {FrameKind::B, k - 1};
  }

  friend bool operator==(const FrameType&, const FrameType&) = default;
};

namespace detail {

inline int two_adic_valuation(int v) {
  int n = 0;
  while (v > 0 && (v & 1) == 0) {
    v >>= 1;
    ++n;
  }
  return n;
}

inline bool is_power_of_two(int v) { return v > 0 && (v & (v - 1)) == 0; }

}  // namespace detail

// Immutable description of an encoded stream. Sizes are kept in bits.
class StreamProfile {
 public:
  StreamProfile() = default;

  // sizes_bits[k][l]: k is a FrameType::index(), l the quality layer (0 = base).
  StreamProfile(std::string name, int f_intra, int f_gop, int num_layers, double frame_rate,
                std::vector<std::vector<Bits>> sizes_bits, std::vector<double> distortions,
                double d_loss)
      : name_(std::move(name)),
        f_intra_(f_intra),
        f_gop_(f_gop),
        num_layers_(num_layers),
        frame_rate_(frame_rate),
        sizes_(std::move(sizes_bits)),
        distortions_(std::move(distortions)),
        d_loss_(d_loss) {
    require(f_gop_ >= 2 && detail::is_power_of_two(f_gop_), "profile",
            "f_gop must be a power of two >= 2, got " + std::to_string(f_gop_));
    require(f_intra_ > 0 && f_intra_ % f_gop_ == 0, "profile", "f_gop must divide f_intra");
    require(num_layers_ >= 0, "profile", "num_layers must be >= 0");
    require(frame_rate_ > 0, "profile", "frame_rate must be positive");
    depth_ = detail::two_adic_valuation(f_gop_);
    require(static_cast<int>(sizes_.size()) == num_frame_types(), "profile",
            "expected " + std::to_string(num_frame_types()) + " frame-type size rows");
    for (const auto& row : sizes_) {
      require(static_cast<int>(row.size()) == quality_layers(), "profile",
              "each frame type needs one size per quality layer");
      for (Bits b : row) require(b > 0, "profile", "layer sizes must be positive");
    }
    require(static_cast<int>(distortions_.size()) == quality_layers(), "profile",
            "expected one distortion per quality layer");
    for (std::size_t l = 0; l < distortions_.size(); ++l) {
      require(distortions_[l] > 0, "profile", "distortions must be positive");
      if (l > 0)
        require(distortions_[l] < distortions_[l - 1], "profile",
                "distortions must strictly decrease with layers");
    }
    require(d_loss_ >= distortions_.front(), "profile", "d_loss must be >= d_0");
  }

  const std::string& name() const { return name_; }
  int f_intra() const { return f_intra_; }
  int f_gop() const { return f_gop_; }
  int num_layers() const { return num_layers_; }        // L (enhancement layers)
  int quality_layers() const { return num_layers_ + 1; }  // L + 1
  int temporal_depth() const { return depth_; }           // T
  int num_frame_types() const { return depth_ + 2; }
  double frame_rate() const { return frame_rate_; }
  double slot_seconds() const { return 1.0 / frame_rate_; }
  double d_loss() const { return d_loss_; }
  double d_layer(int l) const { return distortions_.at(static_cast<std::size_t>(l)); }
  double d_full() const { return distortions_.back(); }
  const std::vector<double>& distortions() const { return distortions_; }
  const std::vector<std::vector<Bits>>& sizes() const { return sizes_; }

  Bits unit_bits(FrameType k, int layer) const {
    return sizes_[static_cast<std::size_t>(k.index())][static_cast<std::size_t>(layer)];
  }
  Bits frame_bits(FrameType k, int layers) const {
    Bits s = 0;
    for (int l = 0; l < layers; ++l) s += unit_bits(k, l);
    return s;
  }

  // Distortion of a frame whose first `count` quality layers decode.
  double distortion_for_count(int count) const {
    return count <= 0 ? d_loss_ : distortions_[static_cast<std::size_t>(std::min(count, quality_layers()) - 1)];
  }

  // F^k: frames of a given type per intra period.
  int frames_per_period(FrameType k) const {
    const int gops = f_intra_ / f_gop_;
    switch (k.kind) {
      case FrameKind::I: return 1;
      case FrameKind::P: return gops - 1;
      default: return gops * (1 << (k.level - 1));
    }
  }

  // --- GOP geometry (positions are indices within the intra period) ---

  FrameType frame_type_at(int position) const {
    require(position >= 0 && position < f_intra_, "range",
            "position " + std::to_string(position) + " outside intra period");
    if (position == 0) return {FrameKind::I, 0};
    const int g = position % f_gop_;
    if (g == 0) return {FrameKind::P, 0};
    return {FrameKind::B, depth_ - detail::two_adic_valuation(g)};
  }

  int wrap(long long position) const {
    const long long m = f_intra_;
    return static_cast<int>(((position % m) + m) % m);
  }

  bool is_key(int position) const { return wrap(position) % f_gop_ == 0; }

  // The first displayed frame of a GOP; the whole GOP is decoded at its display.
  bool opens_gop(int position) const { return wrap(position) % f_gop_ == 1; }

  // Display-order offsets from a frame to its reference frames.
  std::vector<int> reference_offsets(int position) const {
    const int p = wrap(position);
    if (p == 0) return {};
    const int o = p % f_gop_;
    if (o == 0) return {-f_gop_};
    const int step = 1 << detail::two_adic_valuation(o);
    return {-step, step};
  }

  // Offset from a frame to the key picture closing its GOP.
  int offset_to_gop_key(int position) const {
    const int o = wrap(position) % f_gop_;
    return o == 0 ? 0 : f_gop_ - o;
  }

 private:
  std::string name_;
  int f_intra_ = 0;
  int f_gop_ = 0;
  int num_layers_ = 0;
  int depth_ = 0;
  double frame_rate_ = 30.0;
  std::vector<std::vector<Bits>> sizes_;
  std::vector<double> distortions_;
  double d_loss_ = 0.0;
};

inline FrameType frame_type_at(const StreamProfile& p, int position) {
  return p.frame_type_at(position);
}

// Step rate-distortion function: right-continuous with jumps at the
// cumulative layer sizes.
inline double rd_distortion(const StreamProfile& p, FrameType k, double z_bits) {
  require(z_bits >= 0, "range", "received bits must be non-negative");
  double d = p.d_loss();
  double cum = 0;
  for (int l = 0; l < p.quality_layers(); ++l) {
    cum += static_cast<double>(p.unit_bits(k, l));
    if (z_bits >= cum)
      d = p.d_layer(l);
    else
      break;
  }
  return d;
}

struct EnvelopeKnot {
  double z = 0;
  double d = 0;
};

// Piecewise-linear convex function; constant beyond its last knot.
struct PiecewiseLinearEnvelope {
  std::vector<EnvelopeKnot> knots;

  double operator()(double z) const {
    if (knots.empty()) return 0.0;
    if (z <= knots.front().z) return knots.front().d;
    for (std::size_t i = 1; i < knots.size(); ++i) {
      if (z <= knots[i].z) {
        const auto& a = knots[i - 1];
        const auto& b = knots[i];
        const double t = (z - a.z) / (b.z - a.z);
        return a.d + t * (b.d - a.d);
      }
    }
    return knots.back().d;
  }

  double slope(std::size_t segment) const {
    const auto& a = knots[segment];
    const auto& b = knots[segment + 1];
    return (b.d - a.d) / (b.z - a.z);
  }
};

// Lower convex hull (monotone chain) of an arbitrary point set sorted by z.
inline PiecewiseLinearEnvelope lower_hull(std::vector<EnvelopeKnot> pts) {
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.z < b.z; });
  std::vector<EnvelopeKnot> hull;
  for (const auto& q : pts) {
    while (hull.size() >= 2) {
      const auto& a = hull[hull.size() - 2];
      const auto& b = hull.back();
      const double cross = (b.z - a.z) * (q.d - a.d) - (b.d - a.d) * (q.z - a.z);
      if (cross <= 0)
        hull.pop_back();
      else
        break;
    }
    hull.push_back(q);
  }
  return {std::move(hull)};
}

inline std::vector<EnvelopeKnot> rd_points(const StreamProfile& p, FrameType k) {
  std::vector<EnvelopeKnot> pts{{0.0, p.d_loss()}};
  double cum = 0;
  for (int l = 0; l < p.quality_layers(); ++l) {
    cum += static_cast<double>(p.unit_bits(k, l));
    pts.push_back({cum, p.d_layer(l)});
  }
  return pts;
}

inline PiecewiseLinearEnvelope convex_envelope(const StreamProfile& p, FrameType k) {
  return lower_hull(rd_points(p, k));
}

// Rate-distortion parameters of five CIF sequences (sizes in bytes, one row
// per quality layer, columns I, P, B1, B2). d_loss defaults to 4 * d_0.
struct TableRow {
  const char* name;
  std::array<std::array<int, 4>, 3> bytes;
  std::array<double, 3> mse;
};

inline const std::array<TableRow, 5>& table_rows() {
  static const std::array<TableRow, 5> rows{{
      {"foreman", {{{6712, 2499, 928, 520}, {8302, 8293, 3373, 2775}, {5844, 5773, 2177, 1893}}}, {16.27, 5.491, 4.124}},
      {"bus", {{{5920, 2417, 889, 568}, {7837, 8003, 3390, 2925}, {4636, 4412, 1577, 1339}}}, {100.8, 41.35, 21.65}},
      {"flower", {{{8261, 2076, 548, 324}, {6786, 6900, 1951, 1611}, {6633, 6610, 2008, 1545}}}, {172.1, 96.66, 30.85}},
      {"mobile", {{{9648, 1556, 510, 262}, {9090, 9193, 2541, 2171}, {7627, 6894, 1973, 1701}}}, {186.0, 89.90, 37.35}},
      {"paris", {{{12353, 2640, 865, 463}, {9850, 9457, 2103, 1571}, {8091, 7987, 2024, 1555}}}, {32.33, 18.59, 5.420}},
  }};
  return rows;
}

// Builds a profile from a layer-major table of byte sizes (rows = layers,
// columns = frame types).
inline StreamProfile profile_from_bytes(std::string name, int f_intra, int f_gop, double frame_rate,
                                        const std::vector<std::vector<long long>>& layer_rows_bytes,
                                        std::vector<double> mse, double d_loss) {
  require(!layer_rows_bytes.empty(), "profile", "empty size table");
  const std::size_t types = layer_rows_bytes.front().size();
  std::vector<std::vector<Bits>> sizes(types, std::vector<Bits>(layer_rows_bytes.size()));
  for (std::size_t l = 0; l < layer_rows_bytes.size(); ++l) {
    require(layer_rows_bytes[l].size() == types, "profile", "ragged size table");
    for (std::size_t k = 0; k < types; ++k) sizes[k][l] = static_cast<Bits>(layer_rows_bytes[l][k]) * 8;
  }
  const int L = static_cast<int>(layer_rows_bytes.size()) - 1;
  return StreamProfile(std::move(name), f_intra, f_gop, L, frame_rate, std::move(sizes), std::move(mse), d_loss);
}

inline StreamProfile bundled_profile(const std::string& name, double d_loss = -1.0) {
  for (const auto& r : table_rows()) {
    if (name != r.name) continue;
    std::vector<std::vector<long long>> rows;
    for (const auto& layer : r.bytes) rows.emplace_back(layer.begin(), layer.end());
    std::vector<double> mse(r.mse.begin(), r.mse.end());
    const double loss = d_loss > 0 ? d_loss : 4.0 * mse.front();
    return profile_from_bytes(r.name, 16, 4, 30.0, rows, mse, loss);
  }
  throw Error("profile", "unknown bundled profile '" + name + "'");
}

inline std::vector<std::string> bundled_profile_names() {
  std::vector<std::string> out;
  for (const auto& r : table_rows()) out.emplace_back(r.name);
  return out;
}

}  // namespace svs
