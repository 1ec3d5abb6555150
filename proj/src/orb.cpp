#include "promptloop/orb.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "promptloop/error.hpp"

namespace promptloop::orb {
namespace {

using imagekit::Image;

constexpr std::array<std::array<int, 2>, 16> kCircle{{{0, -3}, {1, -3}, {2, -2}, {3, -1},
                                                      {3, 0},  {3, 1},  {2, 2},  {1, 3},
                                                      {0, 3},  {-1, 3}, {-2, 2}, {-3, 1},
                                                      {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}}};

constexpr int kArc = 9;

class Lcg {
 public:
  std::uint32_t next() {
    state_ = state_ * 1664525u + 1013904223u;
    return state_;
  }

  double gaussian() {
    const double u1 = (static_cast<double>(next()) + 1.0) / 4294967296.0;
    const double u2 = static_cast<double>(next()) / 4294967296.0;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

 private:
  std::uint32_t state_ = 0x4F52425Fu;
};

int pattern_coordinate(Lcg& lcg) {
  const double v = std::round(lcg.gaussian() * 31.0 / 5.0);
  return static_cast<int>(std::clamp(v, -static_cast<double>(kPatchRadius), static_cast<double>(kPatchRadius)));
}

std::vector<PointPair> make_base_pattern() {
  Lcg lcg;
  std::vector<PointPair> pattern;
  pattern.reserve(kDescriptorBits);
  while (pattern.size() < static_cast<std::size_t>(kDescriptorBits)) {
    PointPair pp{};
    pp.px = pattern_coordinate(lcg);
    pp.py = pattern_coordinate(lcg);
    do {
      pp.qx = pattern_coordinate(lcg);
      pp.qy = pattern_coordinate(lcg);
    } while (pp.qx == pp.px && pp.qy == pp.py);
    pattern.push_back(pp);
  }
  return pattern;
}

std::vector<std::vector<PointPair>> make_steered_patterns() {
  const auto& base = base_pattern();
  std::vector<std::vector<PointPair>> out(kAngleBins);
  for (int bin = 0; bin < kAngleBins; ++bin) {
    const double theta = 2.0 * std::numbers::pi * bin / kAngleBins;
    const double c = std::cos(theta);
    const double s = std::sin(theta);
    auto rx = [&](int x, int y) { return static_cast<int>(std::lround(x * c - y * s)); };
    auto ry = [&](int x, int y) { return static_cast<int>(std::lround(x * s + y * c)); };
    out[bin].reserve(base.size());
    for (const auto& p : base) out[bin].push_back({rx(p.px, p.py), ry(p.px, p.py), rx(p.qx, p.qy), ry(p.qx, p.qy)});
  }
  return out;
}

// Sums of the 5x5 neighbourhood with replicated edges; comparing sums is
// equivalent to comparing box means without rounding.
struct BoxSums {
  int width = 0;
  int height = 0;
  std::vector<int> values;

  int at(int x, int y) const {
    return values[static_cast<std::size_t>(std::clamp(y, 0, height - 1)) * width + std::clamp(x, 0, width - 1)];
  }
};

BoxSums box_sums(const Image& gray) {
  const int w = gray.width();
  const int h = gray.height();
  std::vector<int> rows(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int acc = 0;
      for (int d = -2; d <= 2; ++d) acc += gray.clamped(x + d, y);
      rows[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  BoxSums out{w, h, std::vector<int>(rows.size())};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int acc = 0;
      for (int d = -2; d <= 2; ++d) acc += rows[static_cast<std::size_t>(std::clamp(y + d, 0, h - 1)) * w + x];
      out.values[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  return out;
}

Descriptor describe(const BoxSums& sums, int x, int y, double angle) {
  const auto& pattern = steered_pattern(angle_bin(angle));
  Descriptor d;
  for (int i = 0; i < kDescriptorBits; ++i) {
    const auto& pp = pattern[static_cast<std::size_t>(i)];
    if (sums.at(x + pp.px, y + pp.py) < sums.at(x + pp.qx, y + pp.qy)) d.set(i);
  }
  return d;
}

void require_gray(const Image& img, const char* op) {
  if (img.channels() != 1) throw DataError(std::string(op) + " expects a grayscale image");
}

}  // namespace

const std::vector<PointPair>& base_pattern() {
  static const std::vector<PointPair> pattern = make_base_pattern();
  return pattern;
}

const std::vector<PointPair>& steered_pattern(int bin) {
  static const std::vector<std::vector<PointPair>> patterns = make_steered_patterns();
  return patterns.at(static_cast<std::size_t>(bin));
}

int angle_bin(double angle) {
  const double step = 2.0 * std::numbers::pi / kAngleBins;
  const long bin = std::lround(angle / step);
  return static_cast<int>(((bin % kAngleBins) + kAngleBins) % kAngleBins);
}

int fast_score(const Image& gray, int x, int y, int threshold) {
  const int p = gray.at(x, y);
  std::array<int, 16> diff{};
  std::array<int, 16> state{};  // +1 brighter, -1 darker, 0 similar
  for (std::size_t i = 0; i < 16; ++i) {
    diff[i] = gray.at(x + kCircle[i][0], y + kCircle[i][1]) - p;
    state[i] = diff[i] > threshold ? 1 : (diff[i] < -threshold ? -1 : 0);
  }
  // A 9-long arc covers at least two consecutive compass points.
  bool possible = false;
  for (std::size_t i = 0; i < 16; i += 4) {
    if (state[i] != 0 && state[i] == state[(i + 4) % 16]) possible = true;
  }
  if (!possible) return 0;

  auto arc_value = [&](std::size_t i) { return std::abs(diff[i]) - threshold; };
  if (std::all_of(state.begin(), state.end(), [&](int s) { return s == state[0]; })) {
    int total = 0;
    for (std::size_t i = 0; i < 16; ++i) total += arc_value(i);
    return total;
  }
  // Start scanning just after a state change so no run wraps past the start.
  std::size_t start = 0;
  while (state[start] == state[(start + 15) % 16]) ++start;
  int best = 0;
  std::size_t k = 0;
  while (k < 16) {
    const std::size_t i0 = (start + k) % 16;
    const int s = state[i0];
    int len = 0;
    int total = 0;
    while (k < 16 && state[(start + k) % 16] == s) {
      total += arc_value((start + k) % 16);
      ++len;
      ++k;
    }
    if (s != 0 && len >= kArc) best = std::max(best, total);
  }
  return best;
}

std::vector<Keypoint> detect_fast(const Image& gray, int threshold, int max_keypoints) {
  require_gray(gray, "detect_fast");
  const int w = gray.width();
  const int h = gray.height();
  if (w < 2 * kBorder + 1 || h < 2 * kBorder + 1) {
    throw DataError("detect_fast needs at least 37x37 pixels, got " + std::to_string(w) + "x" + std::to_string(h));
  }
  if (threshold < 1 || threshold > 255) throw DataError("FAST threshold must be in [1, 255]");

  std::vector<int> score(static_cast<std::size_t>(w) * h, 0);
  for (int y = 3; y < h - 3; ++y) {
    for (int x = 3; x < w - 3; ++x) score[static_cast<std::size_t>(y) * w + x] = fast_score(gray, x, y, threshold);
  }

  std::vector<Keypoint> kps;
  for (int y = kBorder; y < h - kBorder; ++y) {
    for (int x = kBorder; x < w - kBorder; ++x) {
      const int s = score[static_cast<std::size_t>(y) * w + x];
      if (s <= 0) continue;
      bool is_max = true;
      for (int dy = -1; dy <= 1 && is_max; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          const int n = score[static_cast<std::size_t>(y + dy) * w + x + dx];
          // Equal neighbours: the first in raster order wins.
          const bool earlier = dy < 0 || (dy == 0 && dx < 0);
          if (n > s || (n == s && earlier)) {
            is_max = false;
            break;
          }
        }
      }
      if (is_max) kps.push_back({static_cast<double>(x), static_cast<double>(y), static_cast<double>(s), 0.0, 0});
    }
  }
  std::stable_sort(kps.begin(), kps.end(), [](const Keypoint& a, const Keypoint& b) { return a.score > b.score; });
  if (max_keypoints >= 0 && kps.size() > static_cast<std::size_t>(max_keypoints)) {
    kps.resize(static_cast<std::size_t>(max_keypoints));
  }
  return kps;
}

double compute_orientation(const Image& gray, const Keypoint& kp) {
  require_gray(gray, "compute_orientation");
  const int cx = static_cast<int>(std::lround(kp.x));
  const int cy = static_cast<int>(std::lround(kp.y));
  std::int64_t m10 = 0;
  std::int64_t m01 = 0;
  for (int dy = -kPatchRadius; dy <= kPatchRadius; ++dy) {
    for (int dx = -kPatchRadius; dx <= kPatchRadius; ++dx) {
      if (dx * dx + dy * dy > kPatchRadius * kPatchRadius) continue;
      const int v = gray.clamped(cx + dx, cy + dy);
      m10 += static_cast<std::int64_t>(dx) * v;
      m01 += static_cast<std::int64_t>(dy) * v;
    }
  }
  if (m10 == 0 && m01 == 0) return 0.0;
  double angle = std::atan2(static_cast<double>(m01), static_cast<double>(m10));
  if (angle < 0) angle += 2.0 * std::numbers::pi;
  if (angle >= 2.0 * std::numbers::pi) angle = 0.0;
  return angle;
}

std::vector<Descriptor> brief_descriptors(const Image& gray, const std::vector<Keypoint>& kps) {
  require_gray(gray, "brief_descriptors");
  const BoxSums sums = box_sums(gray);
  std::vector<Descriptor> out;
  out.reserve(kps.size());
  for (const auto& kp : kps) {
    out.push_back(describe(sums, static_cast<int>(std::lround(kp.x)), static_cast<int>(std::lround(kp.y)), kp.angle));
  }
  return out;
}

MatchSet match_bf(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b) {
  MatchSet out;
  if (a.empty() || b.empty()) return out;
  std::vector<int> best_in_b(a.size(), -1), dist_a(a.size(), std::numeric_limits<int>::max());
  std::vector<int> best_in_a(b.size(), -1), dist_b(b.size(), std::numeric_limits<int>::max());
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      const int d = hamming(a[i], b[j]);
      // Strict comparisons keep the lowest index on ties.
      if (d < dist_a[i]) {
        dist_a[i] = d;
        best_in_b[i] = static_cast<int>(j);
      }
      if (d < dist_b[j]) {
        dist_b[j] = d;
        best_in_a[j] = static_cast<int>(i);
      }
    }
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const int j = best_in_b[i];
    if (best_in_a[static_cast<std::size_t>(j)] == static_cast<int>(i)) {
      out.pairs.push_back({static_cast<int>(i), j, dist_a[i]});
    }
  }
  return out;
}

Image gaussian_blur(const Image& gray, double sigma) {
  require_gray(gray, "gaussian_blur");
  if (sigma <= 0) return gray;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    norm += kernel[static_cast<std::size_t>(i + radius)];
  }
  for (double& k : kernel) k /= norm;

  const int w = gray.width();
  const int h = gray.height();
  std::vector<double> rows(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) acc += kernel[static_cast<std::size_t>(i + radius)] * gray.clamped(x + i, y);
      rows[static_cast<std::size_t>(y) * w + x] = acc;
    }
  }
  std::vector<std::uint8_t> out(rows.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int i = -radius; i <= radius; ++i) {
        acc += kernel[static_cast<std::size_t>(i + radius)] * rows[static_cast<std::size_t>(std::clamp(y + i, 0, h - 1)) * w + x];
      }
      out[static_cast<std::size_t>(y) * w + x] = imagekit::quantize(acc);
    }
  }
  return Image(w, h, 1, std::move(out));
}

Features extract_features(const Image& img, const OrbParams& params) {
  Image level = gaussian_blur(imagekit::to_grayscale(img), params.presmooth_sigma);

  struct Candidate {
    Keypoint kp;  // level coordinates
    int level_x, level_y;
  };
  std::vector<Candidate> candidates;
  std::vector<Image> levels;
  double scale = 1.0;
  for (int octave = 0; octave < params.octaves; ++octave) {
    if (octave > 0) {
      if (std::floor(level.width() / params.scale_factor) < 2 * kBorder + 1 ||
          std::floor(level.height() / params.scale_factor) < 2 * kBorder + 1) {
        break;
      }
      level = imagekit::downscale_bilinear(level, params.scale_factor, 2 * kBorder + 1);
      scale *= params.scale_factor;
    }
    if (level.width() < 2 * kBorder + 1 || level.height() < 2 * kBorder + 1) break;
    for (auto kp : detect_fast(level, params.fast_threshold, params.max_keypoints)) {
      const int lx = static_cast<int>(kp.x);
      const int ly = static_cast<int>(kp.y);
      kp.angle = compute_orientation(level, kp);
      kp.octave = octave;
      kp.x = lx * scale;
      kp.y = ly * scale;
      candidates.push_back({kp, lx, ly});
    }
    levels.push_back(level);
  }

  std::stable_sort(candidates.begin(), candidates.end(),
                   [](const Candidate& a, const Candidate& b) { return a.kp.score > b.kp.score; });
  if (candidates.size() > static_cast<std::size_t>(params.max_keypoints)) {
    candidates.resize(static_cast<std::size_t>(params.max_keypoints));
  }

  Features out;
  std::vector<BoxSums> sums;
  sums.reserve(levels.size());
  for (const auto& l : levels) sums.push_back(box_sums(l));
  for (const auto& c : candidates) {
    out.keypoints.push_back(c.kp);
    out.descriptors.push_back(describe(sums[static_cast<std::size_t>(c.kp.octave)], c.level_x, c.level_y, c.kp.angle));
  }
  return out;
}

double feature_distance(const Features& a, const Features& b, const OrbParams& params) {
  MatchSet matches = match_bf(a.descriptors, b.descriptors);
  if (matches.pairs.size() < static_cast<std::size_t>(params.min_matches)) return 1.0;
  std::stable_sort(matches.pairs.begin(), matches.pairs.end(),
                   [](const Match& x, const Match& y) { return x.hamming < y.hamming; });
  const std::size_t k = std::min(matches.pairs.size(), static_cast<std::size_t>(std::max(params.top_k, 1)));
  double total = 0;
  for (std::size_t i = 0; i < k; ++i) total += matches.pairs[i].hamming;
  return total / (static_cast<double>(k) * kDescriptorBits);
}

double frame_ref_distance(const Image& frame, const Image& ref, const OrbParams& params) {
  return feature_distance(extract_features(frame, params), extract_features(ref, params), params);
}

std::string keypoints_csv(const std::vector<Keypoint>& kps) {
  std::string out = "x,y,score,angle,octave\n";
  char buf[160];
  for (const auto& kp : kps) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%.6f,%.9f,%d\n", kp.x, kp.y, kp.score, kp.angle, kp.octave);
    out += buf;
  }
  return out;
}

}  // namespace promptloop::orb
