#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <string>
#include <vector>

#include "promptloop/imagekit.hpp"

namespace promptloop::orb {

/// Keypoints closer than this to any border of their octave image are dropped,
/// so the orientation disc (radius 15) always lies inside the image.
inline constexpr int kBorder = 18;
inline constexpr int kPatchRadius = 15;
inline constexpr int kDescriptorBits = 256;
inline constexpr int kAngleBins = 30;

struct Keypoint {
  double x = 0;  // source-image scale
  double y = 0;
  double score = 0;
  double angle = 0;  // radians in [0, 2pi)
  int octave = 0;
};

struct Descriptor {
  std::array<std::uint64_t, 4> words{};

  bool bit(int i) const { return (words[static_cast<std::size_t>(i) >> 6] >> (i & 63)) & 1u; }
  void set(int i) { words[static_cast<std::size_t>(i) >> 6] |= std::uint64_t{1} << (i & 63); }

  friend bool operator==(const Descriptor&, const Descriptor&) = default;
};

inline int hamming(const Descriptor& a, const Descriptor& b) {
  int d = 0;
  for (std::size_t w = 0; w < a.words.size(); ++w) d += std::popcount(a.words[w] ^ b.words[w]);
  return d;
}

struct Match {
  int a = 0;
  int b = 0;
  int hamming = 0;

  friend bool operator==(const Match&, const Match&) = default;
};

/// Cross-checked matches ordered by index into the first set.
struct MatchSet {
  std::vector<Match> pairs;
};

struct OrbParams {
  int fast_threshold = 20;
  int max_keypoints = 250;
  int octaves = 2;
  double scale_factor = 1.2;
  /// Gaussian pre-blur applied to the grayscale image before the pyramid;
  /// 0 disables it.
  double presmooth_sigma = 1.0;
  int top_k = 32;
  int min_matches = 8;
};

struct Features {
  std::vector<Keypoint> keypoints;
  std::vector<Descriptor> descriptors;
};

/// One point-pair test of the sampling pattern, offsets relative to the
/// keypoint.
struct PointPair {
  int px, py, qx, qy;

  friend bool operator==(const PointPair&, const PointPair&) = default;
};

/// The unrotated 256-pair pattern. Drawn from a 32-bit LCG
/// (x <- 1664525 x + 1013904223 mod 2^32, seed 0x4F52425F): each coordinate
/// is round(31/5 * z) clamped to [-15, 15], where z is the cosine branch of
/// Box-Muller on u1 = (s1 + 1) / 2^32, u2 = s2 / 2^32 for two consecutive
/// draws s1, s2. Coordinates are drawn px, py, qx, qy; q is redrawn while it
/// equals p.
const std::vector<PointPair>& base_pattern();

/// Pattern rotated by bin * 12 degrees, coordinates rounded half away from zero.
const std::vector<PointPair>& steered_pattern(int bin);

int angle_bin(double angle);

/// FAST-9 on the radius-3 Bresenham circle; 3x3 non-max suppression; keeps
/// the `max_keypoints` strongest border-feasible corners (octave 0, angle 0).
std::vector<Keypoint> detect_fast(const imagekit::Image& gray, int threshold, int max_keypoints);

/// FAST arc score at (x, y), 0 when the pixel is not a corner.
int fast_score(const imagekit::Image& gray, int x, int y, int threshold);

/// Intensity-centroid angle over the radius-15 disc at the rounded keypoint.
double compute_orientation(const imagekit::Image& gray, const Keypoint& kp);

/// Steered BRIEF over a 5x5 box-filtered copy of `gray`. Keypoint coordinates
/// are taken in the coordinates of `gray`.
std::vector<Descriptor> brief_descriptors(const imagekit::Image& gray, const std::vector<Keypoint>& kps);

MatchSet match_bf(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b);

/// Grayscale, optional pre-blur, pyramid, detection, orientation and
/// description. Keypoints are reported in source-image coordinates.
Features extract_features(const imagekit::Image& img, const OrbParams& params = {});

/// Mean normalised Hamming distance of the best `top_k` cross-checked
/// matches; 1.0 when fewer than `min_matches` mutual matches exist.
double feature_distance(const Features& a, const Features& b, const OrbParams& params = {});

double frame_ref_distance(const imagekit::Image& frame, const imagekit::Image& ref, const OrbParams& params = {});

imagekit::Image gaussian_blur(const imagekit::Image& gray, double sigma);

/// CSV dump "x,y,score,angle,octave" for debugging.
std::string keypoints_csv(const std::vector<Keypoint>& kps);

}  // namespace promptloop::orb
