#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "promptloop/error.hpp"
#include "promptloop/orb.hpp"
#include "test_support.hpp"

using namespace promptloop;
using namespace promptloop::orb;
using imagekit::Image;

namespace {

Descriptor random_descriptor(Rng& rng) {
  Descriptor d;
  for (auto& w : d.words) w = rng.next_u64();
  return d;
}

Descriptor complement(Descriptor d) {
  for (auto& w : d.words) w = ~w;
  return d;
}

// Bit-by-bit distance, no popcount.
int hamming_oracle(const Descriptor& a, const Descriptor& b) {
  int d = 0;
  for (int i = 0; i < kDescriptorBits; ++i) d += a.bit(i) != b.bit(i);
  return d;
}

// Full distance matrix, nearest neighbours found by argmin with the lowest
// index winning ties, then the cross-check.
std::vector<Match> match_oracle(const std::vector<Descriptor>& a, const std::vector<Descriptor>& b) {
  std::vector<std::vector<int>> dist(a.size(), std::vector<int>(b.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) dist[i][j] = hamming_oracle(a[i], b[j]);
  auto argmin_row = [&](std::size_t i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < b.size(); ++j)
      if (dist[i][j] < dist[i][best]) best = j;
    return best;
  };
  auto argmin_col = [&](std::size_t j) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < a.size(); ++i)
      if (dist[i][j] < dist[best][j]) best = i;
    return best;
  };
  std::vector<Match> out;
  for (std::size_t i = 0; i < a.size() && !b.empty(); ++i) {
    const std::size_t j = argmin_row(i);
    if (argmin_col(j) == i) out.push_back({static_cast<int>(i), static_cast<int>(j), dist[i][j]});
  }
  return out;
}

// Enumerates every contiguous arc of length >= 9 on the ring.
int fast_oracle(const Image& g, int x, int y, int t) {
  static const int ring[16][2] = {{0, -3}, {1, -3}, {2, -2}, {3, -1}, {3, 0},  {3, 1},  {2, 2},  {1, 3},
                                  {0, 3},  {-1, 3}, {-2, 2}, {-3, 1}, {-3, 0}, {-3, -1}, {-2, -2}, {-1, -3}};
  const int p = g.at(x, y);
  int best = 0;
  for (int start = 0; start < 16; ++start) {
    for (int len = 9; len <= 16; ++len) {
      for (int sign : {1, -1}) {
        bool ok = true;
        int sum = 0;
        for (int k = 0; k < len && ok; ++k) {
          const int v = g.at(x + ring[(start + k) % 16][0], y + ring[(start + k) % 16][1]);
          ok = sign > 0 ? v > p + t : v < p - t;
          sum += std::abs(v - p) - t;
        }
        if (ok) best = std::max(best, sum);
      }
    }
  }
  return best;
}

Image square_on_black(int size, int side) {
  std::vector<std::uint8_t> px(static_cast<std::size_t>(size) * size, 0);
  const int lo = size / 2 - side / 2;
  for (int y = lo; y < lo + side; ++y)
    for (int x = lo; x < lo + side; ++x) px[static_cast<std::size_t>(y) * size + x] = 255;
  return Image(size, size, 1, px);
}

// Rotation about (cx, cy) by `angle`, bilinear, replicated edges.
Image rotate(const Image& g, double angle, double cx, double cy) {
  const double c = std::cos(angle), s = std::sin(angle);
  std::vector<std::uint8_t> px(static_cast<std::size_t>(g.width()) * g.height());
  for (int y = 0; y < g.height(); ++y) {
    for (int x = 0; x < g.width(); ++x) {
      const double sx = cx + c * (x - cx) + s * (y - cy);
      const double sy = cy - s * (x - cx) + c * (y - cy);
      const int x0 = static_cast<int>(std::floor(sx)), y0 = static_cast<int>(std::floor(sy));
      const double fx = sx - x0, fy = sy - y0;
      const double v = (1 - fx) * (1 - fy) * g.clamped(x0, y0) + fx * (1 - fy) * g.clamped(x0 + 1, y0) +
                       (1 - fx) * fy * g.clamped(x0, y0 + 1) + fx * fy * g.clamped(x0 + 1, y0 + 1);
      px[static_cast<std::size_t>(y) * g.width() + x] = imagekit::quantize(v);
    }
  }
  return Image(g.width(), g.height(), 1, px);
}

double angle_diff(double a, double b) {
  double d = std::fmod(a - b, 2 * std::numbers::pi);
  if (d > std::numbers::pi) d -= 2 * std::numbers::pi;
  if (d < -std::numbers::pi) d += 2 * std::numbers::pi;
  return d;
}

}  // namespace

TEST_CASE("hamming examples and metric axioms") {
  Rng rng(1);
  const Descriptor a = random_descriptor(rng);
  CHECK(hamming(a, a) == 0);
  CHECK(hamming(a, complement(a)) == 256);
  for (int trial = 0; trial < 10000; ++trial) {
    const Descriptor x = random_descriptor(rng), y = random_descriptor(rng), z = random_descriptor(rng);
    const int xy = hamming(x, y);
    REQUIRE(xy == hamming_oracle(x, y));
    REQUIRE(xy == hamming(y, x));
    REQUIRE(xy >= 0);
    REQUIRE(xy <= 256);
    REQUIRE(hamming(x, z) <= xy + hamming(y, z));
    REQUIRE((xy == 0) == (x == y));
  }
}

TEST_CASE("match_bf examples") {
  Rng rng(2);
  std::vector<Descriptor> same;
  for (int i = 0; i < 6; ++i) same.push_back(random_descriptor(rng));
  const auto m = match_bf(same, same);
  REQUIRE(m.pairs.size() == 6);
  for (int i = 0; i < 6; ++i) CHECK(m.pairs[i] == Match{i, i, 0});

  const auto single = match_bf({same[0]}, {same[0], complement(same[0])});
  REQUIRE(single.pairs.size() == 1);
  CHECK(single.pairs[0] == Match{0, 0, 0});
  CHECK(match_bf({}, same).pairs.empty());
  CHECK(match_bf(same, {}).pairs.empty());
}

TEST_CASE("match_bf equals the quadratic oracle and is symmetric") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const int na = 1 + static_cast<int>(rng.below(20)), nb = 1 + static_cast<int>(rng.below(20));
    std::vector<Descriptor> a, b;
    // Short descriptors force plenty of distance ties.
    const bool sparse = trial % 2 == 0;
    auto draw = [&] {
      Descriptor d = random_descriptor(rng);
      if (sparse) d.words = {d.words[0] & 0xFF, 0, 0, 0};
      return d;
    };
    for (int i = 0; i < na; ++i) a.push_back(draw());
    for (int j = 0; j < nb; ++j) b.push_back(draw());
    const auto got = match_bf(a, b).pairs;
    REQUIRE(got == match_oracle(a, b));

    // Swapped sides carry the same pairs unless a tie changes the lowest index.
    if (!sparse) {
      auto back = match_bf(b, a).pairs;
      REQUIRE(back.size() == got.size());
      for (const auto& p : back) {
        const Match flipped{p.b, p.a, p.hamming};
        REQUIRE(std::find(got.begin(), got.end(), flipped) != got.end());
      }
    }
    std::vector<bool> used_a(a.size()), used_b(b.size());
    for (const auto& p : got) {
      REQUIRE(!used_a[p.a]);
      REQUIRE(!used_b[p.b]);
      used_a[p.a] = used_b[p.b] = true;
    }
  }
}

TEST_CASE("fast detector") {
  CHECK(detect_fast(Image::filled(64, 64, 1, 100), 20, 100).empty());
  Rng rng(4);
  CHECK(detect_fast(testsupport::random_image(rng, 48, 48, 1), 255, 100).empty());
  CHECK_THROWS_AS(detect_fast(Image::filled(36, 64, 1, 0), 20, 100), DataError);

  const Image sq = square_on_black(64, 5);
  const auto kps = detect_fast(sq, 20, 100);
  CHECK(kps.size() >= 4);
  const double lo = 32 - 2, hi = 32 + 2;
  int near_corner = 0;
  for (const auto& kp : kps) {
    const double dx = std::min(std::abs(kp.x - lo), std::abs(kp.x - hi));
    const double dy = std::min(std::abs(kp.y - lo), std::abs(kp.y - hi));
    if (dx <= 2 && dy <= 2) ++near_corner;
  }
  CHECK(near_corner >= 4);
}

TEST_CASE("fast score matches the arc oracle") {
  Rng rng(5);
  for (int trial = 0; trial < 6; ++trial) {
    const Image g = trial < 3 ? testsupport::textured_image(rng, 48, 48) : testsupport::random_image(rng, 40, 40, 1);
    for (int t : {10, 20, 40}) {
      for (int y = 3; y < g.height() - 3; ++y)
        for (int x = 3; x < g.width() - 3; ++x) REQUIRE(fast_score(g, x, y, t) == fast_oracle(g, x, y, t));
    }
  }
}

TEST_CASE("detected keypoints are local maxima away from the border") {
  Rng rng(6);
  const Image g = testsupport::textured_image(rng, 96, 80);
  const auto kps = detect_fast(g, 20, 1000);
  REQUIRE(!kps.empty());
  for (std::size_t i = 0; i < kps.size(); ++i) {
    const int x = static_cast<int>(kps[i].x), y = static_cast<int>(kps[i].y);
    CHECK(x >= kBorder);
    CHECK(y >= kBorder);
    CHECK(x < g.width() - kBorder);
    CHECK(y < g.height() - kBorder);
    CHECK(kps[i].score == fast_score(g, x, y, 20));
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) CHECK(fast_score(g, x + dx, y + dy, 20) <= kps[i].score);
    if (i > 0) CHECK(kps[i - 1].score >= kps[i].score);
  }
  CHECK(detect_fast(g, 20, 5).size() == std::min<std::size_t>(5, kps.size()));
}

TEST_CASE("orientation by intensity centroid") {
  CHECK(compute_orientation(Image::filled(64, 64, 1, 90), {32, 32}) == 0.0);

  std::vector<std::uint8_t> px(64 * 64, 0);
  for (int y = 0; y < 64; ++y)
    for (int x = 33; x < 64; ++x) px[y * 64 + x] = 255;
  const Image half(64, 64, 1, px);
  const double a0 = compute_orientation(half, {32, 32});
  CHECK(std::abs(angle_diff(a0, 0.0)) <= 0.05);

  // Rotating by +90 degrees in image coordinates moves +x onto +y.
  std::vector<std::uint8_t> rot(64 * 64, 0);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) rot[y * 64 + x] = px[(64 - 1 - x) * 64 + y];
  const double a1 = compute_orientation(Image(64, 64, 1, rot), {31, 32});
  CHECK(std::abs(angle_diff(a1, a0 + std::numbers::pi / 2)) <= 0.05);

  Rng rng(7);
  const Image tex = testsupport::textured_image(rng, 80, 80);
  for (int i = 0; i < 20; ++i) {
    const double a = compute_orientation(tex, {20.0 + rng.below(40), 20.0 + rng.below(40)});
    CHECK(a >= 0.0);
    CHECK(a < 2 * std::numbers::pi);
  }
}

TEST_CASE("sampling pattern") {
  const auto& base = base_pattern();
  REQUIRE(base.size() == 256);
  for (const auto& p : base) {
    for (int v : {p.px, p.py, p.qx, p.qy}) CHECK(std::abs(v) <= 15);
    CHECK(!(p.px == p.qx && p.py == p.qy));
  }
  CHECK(steered_pattern(0) == base);
  CHECK(angle_bin(0.0) == 0);
  CHECK(angle_bin(2 * std::numbers::pi - 0.01) == 0);
  CHECK(angle_bin(std::numbers::pi / 2) == 8);  // 7.5 bins rounds away from zero
  CHECK(angle_bin(std::numbers::pi) == 15);
}

TEST_CASE("brief descriptors") {
  const Image flat = Image::filled(64, 64, 1, 120);
  const auto d = brief_descriptors(flat, {{32, 32}});
  CHECK(d[0] == Descriptor{});

  Rng rng(8);
  const Image tex = testsupport::textured_image(rng, 80, 80);
  const std::vector<Keypoint> kps{{40, 40, 1, 0.3}, {30, 45, 1, 2.0}};
  CHECK(brief_descriptors(tex, kps) == brief_descriptors(tex, kps));

  // A patch and its 12 degree rotation, described with the true angles.
  int worst = 0;
  for (int trial = 0; trial < 5; ++trial) {
    const Image g = imagekit::downscale_bilinear(testsupport::textured_image(rng, 120, 120), 1.2);
    const Image blurred = gaussian_blur(g, 1.5);
    const double step = 12.0 * std::numbers::pi / 180.0;
    const Image turned = rotate(blurred, step, 50, 50);
    const double base_angle = compute_orientation(blurred, {50, 50});
    const auto da = brief_descriptors(blurred, {{50, 50, 1, base_angle}});
    const auto db = brief_descriptors(turned, {{50, 50, 1, base_angle + step}});
    worst = std::max(worst, hamming(da[0], db[0]));
  }
  CHECK(worst <= 64);
}

TEST_CASE("feature distance") {
  Rng rng(9);
  const Image tex = testsupport::textured_image(rng, 128, 128);
  const Features f = extract_features(tex);
  REQUIRE(f.keypoints.size() >= 8);
  CHECK(frame_ref_distance(tex, tex) == 0.0);
  CHECK(frame_ref_distance(Image::filled(128, 128, 1, 0), tex) == 1.0);
  CHECK(frame_ref_distance(tex, Image::filled(128, 128, 3, 200)) == 1.0);
  for (const auto& kp : f.keypoints) {
    CHECK(kp.octave >= 0);
    CHECK(kp.octave < 2);
  }
  for (int trial = 0; trial < 5; ++trial) {
    const double d = frame_ref_distance(testsupport::textured_image(rng, 128, 128), tex);
    CHECK(d >= 0.0);
    CHECK(d <= 1.0);
  }

  OrbParams strict;
  strict.min_matches = 100000;
  CHECK(frame_ref_distance(tex, tex, strict) == 1.0);
}

TEST_CASE("ten degree rotation through the full pipeline") {
  const Image grid = testsupport::corner_grid(128, 0.0);
  const Image turned = testsupport::corner_grid(128, 10.0 * std::numbers::pi / 180.0);
  CHECK(frame_ref_distance(grid, turned) <= 0.25);
}

TEST_CASE("corner grid survives a 15 degree rotation") {
  const Image grid = testsupport::corner_grid(128, 0.0);
  const Image turned = testsupport::corner_grid(128, 15.0 * std::numbers::pi / 180.0);
  const Features a = extract_features(grid), b = extract_features(turned);
  REQUIRE(!a.keypoints.empty());
  const auto m = match_bf(a.descriptors, b.descriptors);
  const double rate = static_cast<double>(m.pairs.size()) / a.keypoints.size();
  double mean = 0;
  for (const auto& p : m.pairs) mean += p.hamming;
  mean /= std::max<std::size_t>(1, m.pairs.size());
  MESSAGE("keypoints " << a.keypoints.size() << " mutual " << m.pairs.size() << " mean hamming " << mean);
  CHECK(rate >= 0.6);
  CHECK(mean <= 64.0);
}

TEST_CASE("keypoint csv") {
  const std::string csv = keypoints_csv({{1, 2, 3, 0.5, 1}});
  CHECK(csv.rfind("x,y,score,angle,octave\n", 0) == 0);
  CHECK(csv.find(",1\n") != std::string::npos);
}
