#include "promptloop/simgen.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <optional>

#include "promptloop/error.hpp"
#include "promptloop/rng.hpp"

namespace promptloop::simgen {
namespace {

using imagekit::Image;

constexpr double kPi = std::numbers::pi;

// Sprite half-length and half-width at scale 1, in pixels.
constexpr double kHalfLength = 24.0;
constexpr double kHalfWidth = 15.0;
constexpr double kSeabedMean = 92.0;
// Keeps the sprite centre far enough inside the frame for its keypoints to
// be border-feasible.
constexpr double kMargin = 36.0;
constexpr int kSupersample = 4;

std::size_t find_word(std::string_view text, std::string_view word) {
  std::size_t pos = text.find(word);
  while (pos != std::string_view::npos) {
    const bool left_ok = pos == 0 || !std::isalpha(static_cast<unsigned char>(text[pos - 1]));
    const std::size_t end = pos + word.size();
    const bool right_ok = end >= text.size() || !std::isalpha(static_cast<unsigned char>(text[end]));
    if (left_ok && right_ok) return pos;
    pos = text.find(word, pos + 1);
  }
  return std::string_view::npos;
}

// Index of the vocabulary word appearing first in `text`, or -1.
int first_match(std::string_view text, const std::vector<std::string>& words) {
  int best = -1;
  std::size_t best_pos = std::string_view::npos;
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::size_t pos = find_word(text, words[i]);
    if (pos < best_pos) {
      best_pos = pos;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Bilinear value noise on a lattice of `cell` pixels, values in [-1, 1].
std::vector<double> value_noise(int width, int height, int cell, Rng& rng) {
  const int gw = width / cell + 2;
  const int gh = height / cell + 2;
  std::vector<double> lattice(static_cast<std::size_t>(gw) * gh);
  for (double& v : lattice) v = rng.uniform(-1.0, 1.0);
  std::vector<double> out(static_cast<std::size_t>(width) * height);
  for (int y = 0; y < height; ++y) {
    const int gy = y / cell;
    const double fy = smoothstep(static_cast<double>(y % cell) / cell);
    for (int x = 0; x < width; ++x) {
      const int gx = x / cell;
      const double fx = smoothstep(static_cast<double>(x % cell) / cell);
      auto g = [&](int i, int j) { return lattice[static_cast<std::size_t>(j) * gw + i]; };
      const double top = (1 - fx) * g(gx, gy) + fx * g(gx + 1, gy);
      const double bottom = (1 - fx) * g(gx, gy + 1) + fx * g(gx + 1, gy + 1);
      out[static_cast<std::size_t>(y) * width + x] = (1 - fy) * top + fy * bottom;
    }
  }
  return out;
}

bool in_triangle(double px, double py, std::array<double, 6> t) {
  auto cross = [](double ax, double ay, double bx, double by, double cx, double cy) {
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
  };
  const double d1 = cross(t[0], t[1], t[2], t[3], px, py);
  const double d2 = cross(t[2], t[3], t[4], t[5], px, py);
  const double d3 = cross(t[4], t[5], t[0], t[1], px, py);
  const bool neg = d1 < 0 || d2 < 0 || d3 < 0;
  const bool pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(neg && pos);
}

// Sprite intensity at body coordinates (u forward, v lateral), or nullopt
// outside the sprite.
std::optional<double> shade(double u, double v, const ClipStyle& style) {
  const double c = style.contrast;
  const double body = kSeabedMean + 110.0 * c;
  const double dark = body - 150.0 * c;
  const double e = (u / kHalfLength) * (u / kHalfLength) + (v / kHalfWidth) * (v / kHalfWidth);

  if (e > 1.0) {
    if (style.spines) {
      const double s = v < 0 ? -1.0 : 1.0;
      const std::array<double, 6> spine{0.35 * kHalfLength, s * 0.8 * kHalfWidth,  0.05 * kHalfLength,
                                        s * 0.98 * kHalfWidth, -0.5 * kHalfLength, s * 1.22 * kHalfWidth};
      if (in_triangle(u, v, spine)) return dark + 20.0 * c;
    }
    return std::nullopt;
  }
  if (style.rim && e >= 0.82) return dark;

  const double cephalon_edge = 0.35 * kHalfLength;
  const double pygidium_edge = -0.62 * kHalfLength;
  if (u > cephalon_edge) {
    if ((style.rim || style.segment_lines > 0) && u < cephalon_edge + 1.2) return dark;
    if (style.lobes && std::abs(v) < 0.3 * kHalfWidth && u < 0.8 * kHalfLength) return body + 35.0 * c;  // glabella
    return body + 20.0 * c;
  }
  if (style.lobes && std::abs(std::abs(v) - 0.33 * kHalfWidth) < 0.8 && u > -0.85 * kHalfLength) return dark;
  if (u < pygidium_edge) return body - 25.0 * c;
  for (int k = 1; k <= style.segment_lines; ++k) {
    const double uk = pygidium_edge + k * (cephalon_edge - pygidium_edge) / (style.segment_lines + 1);
    if (std::abs(u - uk) < 0.7) return dark;
  }
  return body;
}

struct Trajectory {
  double x, y, heading;
};

Trajectory random_pose(Rng& rng, int width, int height) {
  Trajectory t{};
  t.x = rng.uniform(kMargin, width - kMargin);
  t.y = rng.uniform(kMargin, height - kMargin);
  t.heading = rng.uniform(-0.5, 0.5) + (rng.uniform() < 0.5 ? kPi : 0.0);
  return t;
}

void advance(Trajectory& t, double speed, int width, int height) {
  double dx = speed * std::cos(t.heading);
  double dy = speed * std::sin(t.heading);
  if (t.x + dx < kMargin || t.x + dx > width - kMargin) dx = -dx;
  if (t.y + dy < kMargin || t.y + dy > height - kMargin) dy = -dy;
  t.heading = std::atan2(dy, dx);
  t.x = std::clamp(t.x + dx, kMargin, width - kMargin);
  t.y = std::clamp(t.y + dy, kMargin, height - kMargin);
}

}  // namespace

std::vector<prefopt::SlotSpec> TokenVocab::slots() const {
  return {{"verb", verbs}, {"detail", adjectives}, {"transition", transitions}};
}

ClipStyle interpret_clip(std::string_view text) {
  static const TokenVocab vocab;
  ClipStyle style;
  switch (first_match(text, vocab.verbs)) {
    case 1: style.speed = 0.25; break;  // crawls
    case 2: style.speed = 1.5; break;   // darts
    default: style.speed = 0.6; break;  // glides
  }
  // Detail words accumulate; each one alone leaves the shell too faint to
  // register against the corpus, except "longitudinal lobes". Any two
  // together also bring out the lobes.
  int details = 0;
  if (find_word(text, vocab.adjectives[0]) != std::string_view::npos) {  // hard shell
    style.contrast += 0.35;
    style.rim = true;
    ++details;
  }
  if (find_word(text, vocab.adjectives[2]) != std::string_view::npos) {  // segmented
    style.contrast += 0.3;
    style.segment_lines = 8;
    style.spines = true;
    ++details;
  }
  if (details >= 2) style.lobes = true;
  if (find_word(text, vocab.adjectives[1]) != std::string_view::npos) {  // longitudinal lobes
    const double speed = style.speed;
    style = full_detail_style();
    style.speed = speed;
  }
  style.contrast = std::min(style.contrast, 0.8);
  switch (first_match(text, vocab.transitions)) {
    case 0:  // smoothly
      style.jitter_scale = 0.2;
      style.continuous = true;
      break;
    case 1:  // abruptly
      style.jitter_scale = 2.0;
      break;
    case 2:  // gradually
      style.jitter_scale = 0.5;
      style.continuous = true;
      break;
    default:
      style.jitter_scale = 1.0;
      break;
  }
  return style;
}

ClipStyle full_detail_style() {
  ClipStyle s;
  s.contrast = 0.8;
  s.segment_lines = 8;
  s.rim = true;
  s.spines = true;
  s.lobes = true;
  return s;
}

std::vector<double> seabed(int width, int height, std::uint64_t scene_seed) {
  Rng rng(mix_seed(scene_seed, 0x5EABED));
  const auto coarse = value_noise(width, height, 16, rng);
  const auto fine = value_noise(width, height, 8, rng);
  const double phase = rng.uniform(0.0, 2.0 * kPi);
  std::vector<double> out(coarse.size());
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      const double ripple = 3.0 * std::sin(0.21 * x + 0.07 * y + phase);
      out[i] = kSeabedMean + 14.0 * coarse[i] + 5.0 * fine[i] + ripple;
    }
  }
  return out;
}

Image draw_sprite(const std::vector<double>& background, int width, int height, const SpritePose& pose,
                  const ClipStyle& style) {
  if (background.size() != static_cast<std::size_t>(width) * height) throw DataError("background size mismatch");
  std::vector<std::uint8_t> px(background.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = imagekit::quantize(background[i]);

  const double reach = 1.35 * kHalfLength * pose.scale + 2.0;
  const int x0 = std::max(0, static_cast<int>(std::floor(pose.x - reach)));
  const int x1 = std::min(width - 1, static_cast<int>(std::ceil(pose.x + reach)));
  const int y0 = std::max(0, static_cast<int>(std::floor(pose.y - reach)));
  const int y1 = std::min(height - 1, static_cast<int>(std::ceil(pose.y + reach)));
  const double ch = std::cos(pose.heading);
  const double sh = std::sin(pose.heading);
  for (int y = y0; y <= y1; ++y) {
    for (int x = x0; x <= x1; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * width + x;
      double acc = 0.0;
      for (int sy = 0; sy < kSupersample; ++sy) {
        for (int sx = 0; sx < kSupersample; ++sx) {
          const double dx = x + (sx + 0.5) / kSupersample - 0.5 - pose.x;
          const double dy = y + (sy + 0.5) / kSupersample - 0.5 - pose.y;
          const double u = (dx * ch + dy * sh) / pose.scale;
          const double v = (-dx * sh + dy * ch) / pose.scale;
          acc += shade(u, v, style).value_or(background[i]);
        }
      }
      px[i] = imagekit::quantize(acc / (kSupersample * kSupersample));
    }
  }
  return Image(width, height, 1, std::move(px));
}

script::PromptScript expand_prompt(const prefopt::PromptChoice& y, const TokenVocab& vocab, int clip_count,
                                   int frames_per_clip) {
  if (clip_count < 1 || frames_per_clip < 1) throw DataError("clip count and frames per clip must be positive");
  if (y.selections.size() != 3) throw DataError("prompt choice needs verb, detail and transition selections");
  auto pick = [](const std::vector<std::string>& words, int i) -> const std::string& {
    if (i < 0 || static_cast<std::size_t>(i) >= words.size()) throw DataError("token selection out of range");
    return words[static_cast<std::size_t>(i)];
  };
  const std::string text = pick(vocab.verbs, y.selections[0]) + " " + pick(vocab.adjectives, y.selections[1]) + " " +
                           pick(vocab.transitions, y.selections[2]);
  script::PromptScript s;
  for (int n = 0; n < clip_count; ++n) s.clips.push_back({1 + n * frames_per_clip, text});
  return s;
}

imagekit::Video render_script(const script::PromptScript& s, const RenderConfig& cfg) {
  if (cfg.width < 2 * kMargin || cfg.height < 2 * kMargin) throw DataError("render size too small for the sprite");
  if (cfg.base_jitter < 0) throw DataError("jitter must be non-negative");
  const script::ClipRanges ranges = script::clip_frame_ranges(s, cfg.total_frames);
  const auto background = seabed(cfg.width, cfg.height, cfg.scene_seed);

  // Separate streams; every draw happens whatever the tokens are, so two
  // scripts differing only in wording share the same underlying randomness.
  Rng pose_rng(mix_seed(cfg.seed, 1));
  Rng jitter_rng(mix_seed(cfg.seed, 2));
  Trajectory traj = random_pose(pose_rng, cfg.width, cfg.height);

  std::vector<Image> frames;
  frames.reserve(static_cast<std::size_t>(cfg.total_frames));
  for (std::size_t n = 0; n < ranges.size(); ++n) {
    const ClipStyle style = interpret_clip(s.clips[n].text);
    if (n > 0) {
      const Trajectory reset = random_pose(pose_rng, cfg.width, cfg.height);
      if (!style.continuous) traj = reset;
    }
    for (int f = ranges[n].lo; f <= ranges[n].hi; ++f) {
      const double amp = cfg.base_jitter * style.jitter_scale;
      const double jx = jitter_rng.normal() * amp;
      const double jy = jitter_rng.normal() * amp;
      const double jh = jitter_rng.normal() * 0.02 * style.jitter_scale;
      const SpritePose pose{traj.x + jx, traj.y + jy, traj.heading + jh, 1.0};
      frames.push_back(draw_sprite(background, cfg.width, cfg.height, pose, style));
      advance(traj, style.speed, cfg.width, cfg.height);
    }
  }
  return imagekit::Video(std::move(frames));
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw DataError("noise schedule needs at least one step");
  NoiseSchedule s;
  s.steps = steps;
  s.betas.resize(static_cast<std::size_t>(steps));
  s.alpha_bar.resize(static_cast<std::size_t>(steps) + 1);
  s.alpha_bar[0] = 1.0;
  for (int t = 1; t <= steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t - 1) / (steps - 1);
    s.betas[static_cast<std::size_t>(t - 1)] = beta_start + (beta_end - beta_start) * frac;
    s.alpha_bar[static_cast<std::size_t>(t)] = s.alpha_bar[static_cast<std::size_t>(t - 1)] * (1.0 - s.betas[static_cast<std::size_t>(t - 1)]);
  }
  return s;
}

double NoiseSchedule::mix(double x, double eps, int t) const {
  if (t < 0 || t > steps) throw DataError("noise step out of range");
  const double ab = alpha_bar[static_cast<std::size_t>(t)];
  return std::sqrt(ab) * x + std::sqrt(1.0 - ab) * eps;
}

imagekit::Video forward_noise(const imagekit::Video& video, int t, const NoiseSchedule& sched, std::uint64_t seed) {
  if (t < 1 || t > sched.steps) {
    throw DataError("noise step " + std::to_string(t) + " outside [1, " + std::to_string(sched.steps) + "]");
  }
  Rng rng(seed);
  std::vector<Image> frames;
  frames.reserve(video.size());
  for (const auto& frame : video.frames()) {
    std::vector<std::uint8_t> px(frame.pixels().size());
    for (std::size_t i = 0; i < px.size(); ++i) {
      const double noised = sched.mix(frame.pixels()[i] / 255.0, rng.normal(), t);
      px[i] = imagekit::quantize(std::clamp(noised, 0.0, 1.0) * 255.0);
    }
    frames.emplace_back(frame.width(), frame.height(), frame.channels(), std::move(px));
  }
  return imagekit::Video(std::move(frames), video.fps());
}

Image reference_still(const RenderConfig& cfg, int index, std::uint64_t seed) {
  Rng rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
  SpritePose pose;
  pose.heading = rng.uniform(0.0, 2.0 * kPi);
  pose.scale = rng.uniform(0.9, 1.1);
  pose.x = cfg.width / 2.0 + rng.uniform(-6.0, 6.0);
  pose.y = cfg.height / 2.0 + rng.uniform(-6.0, 6.0);
  const auto background = seabed(cfg.width, cfg.height, mix_seed(seed, 1000 + static_cast<std::uint64_t>(index)));
  return draw_sprite(background, cfg.width, cfg.height, pose, full_detail_style());
}

std::vector<std::filesystem::path> make_reference_corpus(const RenderConfig& cfg, int count, std::uint64_t seed,
                                                         const std::filesystem::path& dir) {
  if (count < 1) throw DataError("corpus count must be at least 1");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create " + dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> paths;
  for (int i = 0; i < count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "ref_%04d.pgm", i + 1);
    paths.push_back(dir / name);
    imagekit::write_pnm(paths.back(), reference_still(cfg, i, seed));
  }
  return paths;
}

}  // namespace promptloop::simgen
