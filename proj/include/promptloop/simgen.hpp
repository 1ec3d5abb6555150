#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "promptloop/imagekit.hpp"
#include "promptloop/prefopt.hpp"
#include "promptloop/script.hpp"

namespace promptloop::simgen {

/// Words the renderer reacts to, grouped by prompt slot.
struct TokenVocab {
  std::vector<std::string> verbs{"glides", "crawls", "darts"};
  std::vector<std::string> adjectives{"hard shell", "longitudinal lobes", "segmented", "plain"};
  std::vector<std::string> transitions{"smoothly", "abruptly", "gradually"};

  /// Slots in prompt order: verb, detail, transition.
  std::vector<prefopt::SlotSpec> slots() const;
};

/// How the sprite of one clip is drawn and moved.
struct ClipStyle {
  double speed = 0.6;         // pixels per frame
  int segment_lines = 0;      // thoracic segment furrows
  double contrast = 0.15;     // shell brightness and line depth, in [0, 1]
  bool rim = false;           // dark outline around the shell
  bool spines = false;        // genal spines
  bool lobes = false;         // longitudinal axial furrows
  double jitter_scale = 1.0;  // multiplier of RenderConfig::base_jitter
  bool continuous = false;    // no position reset when the clip starts
};

/// Keyword lookup. The first verb and transition found win; detail words
/// combine, and any two of them add the lobes. Missing words fall back to "glides", "plain" and a neutral
/// transition (1x jitter, reset at the clip start).
ClipStyle interpret_clip(std::string_view text);

/// The most detailed style; corpus stills use it.
ClipStyle full_detail_style();

struct RenderConfig {
  int width = 128;
  int height = 128;
  int total_frames = 48;
  double base_jitter = 0.6;  // pixels, standard deviation per axis
  std::uint64_t seed = 1;        // trajectory and jitter
  std::uint64_t scene_seed = 0;  // seabed texture
};

struct SpritePose {
  double x = 64;
  double y = 64;
  double heading = 0;  // radians
  double scale = 1.0;
};

/// Static seabed texture for a scene.
std::vector<double> seabed(int width, int height, std::uint64_t scene_seed);

/// Sprite composited over a background (row-major, width * height values).
imagekit::Image draw_sprite(const std::vector<double>& background, int width, int height, const SpritePose& pose,
                            const ClipStyle& style);

/// Clip n starts at 1 + (n - 1) * frames_per_clip with text
/// "<verb> <adjective> <transition>".
script::PromptScript expand_prompt(const prefopt::PromptChoice& y, const TokenVocab& vocab, int clip_count,
                                   int frames_per_clip);

/// Renders the script. Throws DataError when total_frames is before the last
/// clip start. The same (script, cfg) always yields the same video.
imagekit::Video render_script(const script::PromptScript& s, const RenderConfig& cfg);

/// Linear beta schedule and its cumulative products alpha_bar[0..T]
/// (alpha_bar[0] = 1).
struct NoiseSchedule {
  int steps = 1000;
  std::vector<double> betas;      // betas[t - 1] for t = 1..T
  std::vector<double> alpha_bar;  // alpha_bar[t] for t = 0..T

  static NoiseSchedule linear(int steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

  /// sqrt(alpha_bar_t) * x + sqrt(1 - alpha_bar_t) * eps, no clamping.
  double mix(double x, double eps, int t) const;
};

/// Per-pixel noising in [0, 1] scale, clamped and requantized to 8 bits.
imagekit::Video forward_noise(const imagekit::Video& video, int t, const NoiseSchedule& sched, std::uint64_t seed);

/// Writes `count` full-detail stills (ref_0001.pgm, ...) of varied pose and
/// scale into `dir`; returns the file paths in order.
std::vector<std::filesystem::path> make_reference_corpus(const RenderConfig& cfg, int count, std::uint64_t seed,
                                                         const std::filesystem::path& dir);

/// The still `index` of make_reference_corpus, without touching the disk.
imagekit::Image reference_still(const RenderConfig& cfg, int index, std::uint64_t seed);

}  // namespace promptloop::simgen
