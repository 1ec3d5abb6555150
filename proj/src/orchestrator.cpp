#include "promptloop/orchestrator.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "promptloop/error.hpp"
#include "promptloop/rng.hpp"

namespace promptloop::orchestrator {
namespace {

using nlohmann::ordered_json;

template <typename T>
void read_field(const ordered_json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

std::string iteration_tag(int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "iter_%04d", index);
  return buf;
}

void require_positive(int v, const char* name) {
  if (v < 1) throw DataError(std::string(name) + " must be positive");
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text, const std::filesystem::path& base_dir) {
  ordered_json j;
  try {
    j = ordered_json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw DataError("config must be a JSON object");
  RunConfig cfg;
  try {
    std::string corpus, output;
    read_field(j, "corpus_dir", corpus);
    read_field(j, "output_dir", output);
    auto resolve = [&](const std::string& p) {
      std::filesystem::path path(p);
      return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
    };
    if (!corpus.empty()) cfg.corpus_dir = resolve(corpus);
    if (!output.empty()) cfg.output_dir = resolve(output);
    read_field(j, "contexts", cfg.contexts);
    if (j.contains("vocab")) {
      const auto& v = j.at("vocab");
      read_field(v, "verbs", cfg.vocab.verbs);
      read_field(v, "adjectives", cfg.vocab.adjectives);
      read_field(v, "transitions", cfg.vocab.transitions);
    }
    read_field(j, "clip_count", cfg.clip_count);
    read_field(j, "frames_per_clip", cfg.frames_per_clip);
    read_field(j, "samples_per_context", cfg.samples_per_context);
    read_field(j, "iterations", cfg.iterations);
    if (j.contains("kto")) {
      const auto& k = j.at("kto");
      read_field(k, "beta", cfg.kto.beta);
      read_field(k, "lambda_D", cfg.kto.lambda_D);
      read_field(k, "lambda_U", cfg.kto.lambda_U);
    }
    read_field(j, "learning_rate", cfg.learning_rate);
    read_field(j, "seed", cfg.seed);
    read_field(j, "smoothness_weight", cfg.smoothness_weight);
    read_field(j, "realism_weight", cfg.realism_weight);
    if (j.contains("reward_threshold") && !j.at("reward_threshold").is_null()) {
      cfg.reward_threshold = j.at("reward_threshold").get<double>();
    }
    read_field(j, "refresh_reference", cfg.refresh_reference);
    read_field(j, "frame_width", cfg.frame_width);
    read_field(j, "frame_height", cfg.frame_height);
    read_field(j, "base_jitter", cfg.base_jitter);
    read_field(j, "dump_frames", cfg.dump_frames);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad config field: ") + e.what());
  }
  require_positive(cfg.clip_count, "clip_count");
  require_positive(cfg.frames_per_clip, "frames_per_clip");
  require_positive(cfg.samples_per_context, "samples_per_context");
  if (cfg.samples_per_context < 2) throw DataError("samples_per_context must be at least 2");
  if (cfg.iterations < 0) throw DataError("iterations must be non-negative");
  if (cfg.contexts.empty()) throw DataError("at least one context is required");
  if (!(cfg.learning_rate >= 0)) throw DataError("learning_rate must be non-negative");
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.parent_path());
}

prefopt::PolicyParams initial_policy(const RunConfig& cfg) {
  std::vector<prefopt::ContextSpec> contexts;
  for (const auto& id : cfg.contexts) contexts.push_back({id, cfg.vocab.slots()});
  return prefopt::PolicyParams(std::move(contexts));
}

Scorer::Scorer(const RunConfig& cfg, realism::ReferenceCorpus corpus) : cfg_(cfg), corpus_(std::move(corpus)) {}

simgen::RenderConfig Scorer::render_config(const std::string& context) const {
  simgen::RenderConfig rc;
  rc.width = cfg_.frame_width;
  rc.height = cfg_.frame_height;
  rc.total_frames = cfg_.clip_count * cfg_.frames_per_clip;
  rc.base_jitter = cfg_.base_jitter;
  rc.seed = mix_seed(cfg_.seed, hash_string(context));
  rc.scene_seed = mix_seed(cfg_.seed ^ 0x5CE7EULL, hash_string(context));
  return rc;
}

imagekit::Video Scorer::render(const prefopt::PromptChoice& y) const {
  const auto s = simgen::expand_prompt(y, cfg_.vocab, cfg_.clip_count, cfg_.frames_per_clip);
  return simgen::render_script(s, render_config(y.context));
}

const PromptScore& Scorer::score(const prefopt::PromptChoice& y) {
  auto key = std::make_pair(y.context, y.selections);
  if (auto it = cache_.find(key); it != cache_.end()) return it->second;

  PromptScore out;
  out.script = simgen::expand_prompt(y, cfg_.vocab, cfg_.clip_count, cfg_.frames_per_clip);
  out.prompt_text = script::serialize_script(out.script);
  const imagekit::Video video = simgen::render_script(out.script, render_config(y.context));
  out.curve = smoothness::fid_adjacent(video);
  out.r_s = smoothness::smoothness_reward(out.curve);
  out.report = realism::realism_reward(video, corpus_);
  out.r_a = out.report.reward;
  out.r_total = cfg_.smoothness_weight * out.r_s + cfg_.realism_weight * out.r_a;
  return cache_.emplace(std::move(key), std::move(out)).first->second;
}

PromptScore score_prompt(const prefopt::PromptChoice& y, Scorer& scorer) { return scorer.score(y); }

std::uint64_t iteration_seed(std::uint64_t master, int index) {
  return mix_seed(master, static_cast<std::uint64_t>(index));
}

IterationResult run_iteration(const prefopt::PolicyParams& policy, const prefopt::PolicyParams& reference,
                              Scorer& scorer, std::uint64_t seed) {
  const RunConfig& cfg = scorer.config();
  IterationResult out{seed, {}, {}, policy, 0, 0, 0, 0, 0};
  Rng rng(seed);
  std::vector<prefopt::ScoredSample> scored;
  for (std::size_t c = 0; c < policy.contexts().size(); ++c) {
    for (int k = 0; k < cfg.samples_per_context; ++k) {
      prefopt::PromptChoice y = prefopt::sample_choice(policy, c, rng);
      const PromptScore& s = scorer.score(y);
      out.samples.push_back({y, s.prompt_text, s.r_s, s.r_a, s.r_total});
      scored.push_back({y, s.prompt_text, s.r_total});
    }
  }
  double total = 0;
  for (std::size_t i = 0; i < out.samples.size(); ++i) {
    total += out.samples[i].r_total;
    if (out.samples[i].r_total > out.samples[out.best_index].r_total) out.best_index = i;
  }
  out.mean_reward = total / static_cast<double>(out.samples.size());
  out.max_reward = out.samples[out.best_index].r_total;

  out.dataset = prefopt::build_preference_dataset(scored);
  const auto before = prefopt::kto_loss(policy, reference, out.dataset.examples, cfg.kto);
  out.loss_before = before.loss;
  out.policy_after = prefopt::gradient_step(policy, before.gradient, cfg.learning_rate);
  out.loss_after = prefopt::kto_loss(out.policy_after, reference, out.dataset.examples, cfg.kto).loss;
  return out;
}

double best_frame_match_score(const realism::RealismReport& report) {
  const auto& d = report.per_frame_min_distance;
  return realism::match_score_from_distance(*std::min_element(d.begin(), d.end()));
}

RunManifest run_loop(const RunConfig& cfg) {
  Scorer scorer(cfg, realism::build_corpus(cfg.corpus_dir));
  return run_loop(cfg, scorer);
}

RunManifest run_loop(const RunConfig& cfg, Scorer& scorer) {
  const bool persist = !cfg.output_dir.empty();
  if (persist) {
    std::error_code ec;
    std::filesystem::create_directories(cfg.output_dir / "fid", ec);
    if (ec) throw DataError("cannot create output directory " + cfg.output_dir.string() + ": " + ec.message());
  }

  RunManifest manifest{{}, initial_policy(cfg), initial_policy(cfg), "policy_final.txt", false};
  prefopt::PolicyParams policy = manifest.initial_policy;
  prefopt::PolicyParams reference = manifest.initial_policy;
  if (persist) prefopt::save_policy(cfg.output_dir / "policy_initial.txt", policy);

  for (int i = 1; i <= cfg.iterations; ++i) {
    if (cfg.refresh_reference) reference = policy;
    auto summary = [&] {
      try {
        return IterationSummary{run_iteration(policy, reference, scorer, iteration_seed(cfg.seed, i)), 0, 0};
      } catch (const std::exception& e) {
        throw DataError("iteration " + std::to_string(i) + ": " + e.what());
      }
    }();
    const auto& best = summary.result.samples[summary.result.best_index];
    const PromptScore& best_score = scorer.score(best.choice);
    summary.best_match_score = best_frame_match_score(best_score.report);
    summary.best_mean_fid = smoothness::mean_fid(best_score.curve);
    if (persist) {
      smoothness::write_fid_csv(cfg.output_dir / "fid" / (iteration_tag(i) + ".csv"), best_score.curve);
      if (cfg.dump_frames) imagekit::write_video_dir(cfg.output_dir / "best" / iteration_tag(i), scorer.render(best.choice));
    }
    policy = summary.result.policy_after;
    const double best_reward = summary.result.max_reward;
    manifest.iterations.push_back(std::move(summary));
    if (cfg.reward_threshold && best_reward >= *cfg.reward_threshold) {
      manifest.stopped_early = true;
      break;
    }
  }
  manifest.final_policy = policy;
  if (persist) {
    prefopt::save_policy(cfg.output_dir / manifest.final_checkpoint, policy);
    std::ofstream out(cfg.output_dir / "manifest.json", std::ios::trunc);
    if (!out) throw DataError("cannot write manifest in " + cfg.output_dir.string());
    out << manifest_json(cfg, manifest);
  }
  return manifest;
}

std::string manifest_json(const RunConfig& cfg, const RunManifest& manifest) {
  ordered_json j;
  j["config"] = {
      {"contexts", cfg.contexts},
      {"clip_count", cfg.clip_count},
      {"frames_per_clip", cfg.frames_per_clip},
      {"samples_per_context", cfg.samples_per_context},
      {"iterations", cfg.iterations},
      {"kto", {{"beta", cfg.kto.beta}, {"lambda_D", cfg.kto.lambda_D}, {"lambda_U", cfg.kto.lambda_U}}},
      {"learning_rate", cfg.learning_rate},
      {"seed", cfg.seed},
      {"smoothness_weight", cfg.smoothness_weight},
      {"realism_weight", cfg.realism_weight},
      {"refresh_reference", cfg.refresh_reference},
  };
  ordered_json iterations = ordered_json::array();
  for (std::size_t i = 0; i < manifest.iterations.size(); ++i) {
    const auto& s = manifest.iterations[i];
    const auto& r = s.result;
    ordered_json samples = ordered_json::array();
    for (const auto& rec : r.samples) {
      samples.push_back({{"context", rec.choice.context},
                         {"selections", rec.choice.selections},
                         {"prompt", rec.prompt_text},
                         {"r_s", rec.r_s},
                         {"r_a", rec.r_a},
                         {"r_total", rec.r_total}});
    }
    iterations.push_back({{"iteration", i + 1},
                          {"seed", r.seed},
                          {"samples", samples},
                          {"mean_reward", r.mean_reward},
                          {"max_reward", r.max_reward},
                          {"best_sample", r.best_index},
                          {"best_match_score", s.best_match_score},
                          {"best_mean_fid", s.best_mean_fid},
                          {"kto_loss_before", r.loss_before},
                          {"kto_loss_after", r.loss_after}});
  }
  j["iterations"] = iterations;
  j["stopped_early"] = manifest.stopped_early;
  j["initial_checkpoint"] = "policy_initial.txt";
  j["final_checkpoint"] = manifest.final_checkpoint;
  return j.dump(2) + "\n";
}

}  // namespace promptloop::orchestrator
