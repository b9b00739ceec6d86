#pragma once

// Displayed-frame distortion with drift, and the MS-SSIM to DMOS mapping.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "svs/buffer.hpp"
#include "svs/error.hpp"
#include "svs/stream.hpp"

namespace svs {

// B-frame distortion: own rate-distortion value plus half of each
// reference's drift energy (reference distortion minus d_L).
inline double b_frame_distortion(double own, double ref1, double ref2, double d_full) {
  return std::max(d_full, own + 0.5 * (ref1 + ref2) - d_full);
}

// A decoded frame never looks worse than concealing it.
inline double b_frame_distortion(double own, double ref1, double ref2, double d_full, double d_loss) {
  return std::min(d_loss, b_frame_distortion(own, ref1, ref2, d_full));
}

inline double frame_distortion(const StreamProfile& p, const FrameBuffer& b, int f) {
  const int c = b.count(f);
  if (c == 0) return p.d_loss();
  const double own = p.distortion_for_count(c);
  const int pos = intra_position(p, b, f);
  if (p.is_key(pos)) return own;
  const auto offs = p.reference_offsets(pos);
  return b_frame_distortion(own, frame_distortion(p, b, f + offs[0]), frame_distortion(p, b, f + offs[1]),
                            p.d_full(), p.d_loss());
}

inline double displayed_distortion(const StreamProfile& p, const FrameBuffer& b) { return frame_distortion(p, b, 0); }

inline double displayed_distortion(const StreamProfile& p, const SystemState& s) {
  return displayed_distortion(p, s.buffer);
}

// Distortions of the frames of one decoded GOP. Counts are frozen once the
// GOP decodes, so the cache stays valid until the next decode event.
class DistortionContext {
 public:
  explicit DistortionContext(const StreamProfile& p) : p_(&p) {}

  // Call when frame 0 opens a GOP (or at any point to re-snapshot).
  void prime(const FrameBuffer& b) {
    cache_.clear();
    const int lo = -static_cast<int>(b.pre.size());
    for (int f = lo; f < p_->f_gop(); ++f) cache_[f + offset_] = frame_distortion(*p_, b, f);
  }

  // Distortion of frame 0; advances the cache index by one slot.
  double displayed(const FrameBuffer& b) {
    if (p_->opens_gop(b.position) || cache_.empty()) {
      offset_ = 0;
      prime(b);
    }
    const auto it = cache_.find(offset_);
    const double d = it != cache_.end() ? it->second : frame_distortion(*p_, b, 0);
    ++offset_;
    return d;
  }

  double reference(int f) const {
    const auto it = cache_.find(f);
    require(it != cache_.end(), "range", "no cached distortion for frame " + std::to_string(f));
    return it->second;
  }

 private:
  const StreamProfile* p_;
  std::unordered_map<int, double> cache_;
  int offset_ = 0;
};

// Logistic fit from MS-SSIM to difference mean opinion score (lower is better).
inline double dmos_from_msssim(double q) {
  require(q > 0.0 && q < 1.0, "domain", "MS-SSIM must lie strictly between 0 and 1");
  return 13.3442 * std::log(1.0 - q) + 3.6226 * (1.0 - q) + 77.0117;
}

// CSV with a header line and rows "frame_index,msssim".
inline std::vector<std::pair<int, double>> read_msssim_csv(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "io", "cannot open " + path);
  std::vector<std::pair<int, double>> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (header) {
      header = false;
      if (line.find_first_not_of("0123456789-+., \t") != std::string::npos) continue;
    }
    std::istringstream ss(line);
    std::string a, b;
    require(std::getline(ss, a, ',') && std::getline(ss, b), "io", "malformed MS-SSIM row: " + line);
    out.emplace_back(std::stoi(a), std::stod(b));
  }
  return out;
}

inline double mean_dmos(const std::vector<std::pair<int, double>>& series) {
  require(!series.empty(), "io", "empty MS-SSIM series");
  double s = 0;
  for (const auto& [f, q] : series) s += dmos_from_msssim(q);
  return s / static_cast<double>(series.size());
}

}  // namespace svs
