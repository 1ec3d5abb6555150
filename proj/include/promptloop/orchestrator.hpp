#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "promptloop/prefopt.hpp"
#include "promptloop/realism.hpp"
#include "promptloop/script.hpp"
#include "promptloop/simgen.hpp"
#include "promptloop/smoothness.hpp"

namespace promptloop::orchestrator {

struct RunConfig {
  std::filesystem::path corpus_dir;
  std::vector<std::string> contexts{"ocean floor", "reef"};
  simgen::TokenVocab vocab;
  int clip_count = 2;
  int frames_per_clip = 24;
  int samples_per_context = 8;
  int iterations = 30;
  prefopt::KTOConfig kto;
  double learning_rate = 50.0;
  std::uint64_t seed = 42;
  std::filesystem::path output_dir;
  double smoothness_weight = 1.0;
  double realism_weight = 1.0;
  /// Stop early once the best sample of an iteration reaches this reward.
  std::optional<double> reward_threshold;
  /// Re-anchor the reference policy to the current policy every iteration.
  bool refresh_reference = false;
  int frame_width = 128;
  int frame_height = 128;
  double base_jitter = 0.6;
  bool dump_frames = true;
};

/// JSON object with RunConfig field names; missing fields keep defaults.
/// Relative paths resolve against `base_dir`.
RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

/// Uniform initial policy: one context per configured context, slots from
/// the vocabulary.
prefopt::PolicyParams initial_policy(const RunConfig& cfg);

struct PromptScore {
  script::PromptScript script;
  std::string prompt_text;
  double r_s = 0;
  double r_a = 0;
  double r_total = 0;
  smoothness::FidCurve curve;
  realism::RealismReport report;
};

/// Expands, renders and scores prompts. Rendering randomness is fixed per
/// (master seed, context), so a prompt's score is a pure function of the
/// prompt; results are memoised.
class Scorer {
 public:
  Scorer(const RunConfig& cfg, realism::ReferenceCorpus corpus);

  const PromptScore& score(const prefopt::PromptChoice& y);
  imagekit::Video render(const prefopt::PromptChoice& y) const;
  simgen::RenderConfig render_config(const std::string& context) const;
  const realism::ReferenceCorpus& corpus() const { return corpus_; }
  const RunConfig& config() const { return cfg_; }

 private:
  RunConfig cfg_;
  realism::ReferenceCorpus corpus_;
  std::map<std::pair<std::string, std::vector<int>>, PromptScore> cache_;
};

/// r_total = w_s * r_s + w_a * r_a over the whole video.
PromptScore score_prompt(const prefopt::PromptChoice& y, Scorer& scorer);

struct SampleRecord {
  prefopt::PromptChoice choice;
  std::string prompt_text;
  double r_s = 0;
  double r_a = 0;
  double r_total = 0;
};

struct IterationResult {
  std::uint64_t seed = 0;
  std::vector<SampleRecord> samples;
  prefopt::PreferenceDataset dataset;
  prefopt::PolicyParams policy_after;
  double loss_before = 0;
  double loss_after = 0;
  std::size_t best_index = 0;  // highest r_total, first on ties
  double mean_reward = 0;
  double max_reward = 0;
};

/// Samples prompts from `policy`, scores them, orders them into a preference
/// dataset and takes one KTO gradient step.
IterationResult run_iteration(const prefopt::PolicyParams& policy, const prefopt::PolicyParams& reference,
                              Scorer& scorer, std::uint64_t iteration_seed);

/// Per-iteration seed: mix_seed(master, index) with 1-based index.
std::uint64_t iteration_seed(std::uint64_t master, int index);

struct IterationSummary {
  IterationResult result;
  double best_match_score = 0;  // best-frame match score of the best video
  double best_mean_fid = 0;
};

struct RunManifest {
  std::vector<IterationSummary> iterations;
  prefopt::PolicyParams initial_policy;
  prefopt::PolicyParams final_policy;
  std::string final_checkpoint;  // file name inside the output directory
  bool stopped_early = false;
};

/// Best-frame match score of a report: 1 / max(min over frames of the
/// per-frame distance, 1e-6).
double best_frame_match_score(const realism::RealismReport& report);

/// Runs the loop; writes manifest.json, policy checkpoints, FID curves and
/// best-video frames into cfg.output_dir when it is set.
RunManifest run_loop(const RunConfig& cfg);
RunManifest run_loop(const RunConfig& cfg, Scorer& scorer);

std::string manifest_json(const RunConfig& cfg, const RunManifest& manifest);

}  // namespace promptloop::orchestrator
