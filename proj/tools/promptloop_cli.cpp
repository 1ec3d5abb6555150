#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "promptloop/error.hpp"
#include "promptloop/orchestrator.hpp"

namespace fs = std::filesystem;
using namespace promptloop;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<prefopt::PreferenceExample> parse_dataset(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("dataset is not valid JSON: ") + e.what());
  }
  if (!j.is_array()) throw DataError("dataset must be a JSON array");
  std::vector<prefopt::PreferenceExample> out;
  try {
    for (const auto& e : j) {
      out.push_back({{e.at("context").get<std::string>(), e.at("selections").get<std::vector<int>>()},
                     e.at("desirable").get<bool>()});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("bad dataset entry: ") + e.what());
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"promptloop: reward scoring and preference optimisation for prompt scripts"};
  app.require_subcommand(1);

  std::string frames_dir, corpus_dir, out_dir, script_file, policy_file, dataset_file, config_file, csv_out;
  std::string reference_file, policy_out, output_override;
  int count = 0, total_frames = 48, width = 128, height = 128, parse_frames = 0;
  std::uint64_t seed = 1, scene_seed = 0;
  double beta = 0.1, lambda_d = 1.0, lambda_u = 1.0, lr = orchestrator::RunConfig{}.learning_rate;

  auto* smooth = app.add_subcommand("score-smoothness", "Per-frame FID curve and smoothness reward of a frame directory");
  smooth->add_option("frames-dir", frames_dir)->required();
  smooth->add_option("--csv", csv_out, "Write the FID curve CSV here");

  auto* real = app.add_subcommand("score-realism", "Realism reward of a frame directory against a reference corpus");
  real->add_option("frames-dir", frames_dir)->required();
  real->add_option("corpus-dir", corpus_dir)->required();

  auto* corpus = app.add_subcommand("build-corpus", "Write synthetic high-detail reference stills");
  corpus->add_option("out-dir", out_dir)->required();
  corpus->add_option("--count", count)->required()->check(CLI::PositiveNumber);
  corpus->add_option("--seed", seed)->required();
  corpus->add_option("--width", width)->check(CLI::PositiveNumber);
  corpus->add_option("--height", height)->check(CLI::PositiveNumber);

  auto* render = app.add_subcommand("render", "Render a prompt script to a frame directory");
  render->add_option("script-file", script_file)->required();
  render->add_option("out-dir", out_dir)->required();
  render->add_option("--frames", total_frames, "Total frame count")->check(CLI::PositiveNumber);
  render->add_option("--seed", seed, "Trajectory seed");
  render->add_option("--scene-seed", scene_seed, "Seabed seed");
  render->add_option("--width", width)->check(CLI::PositiveNumber);
  render->add_option("--height", height)->check(CLI::PositiveNumber);

  auto* parse = app.add_subcommand("parse", "Validate a prompt script and print its canonical form");
  parse->add_option("script-file", script_file)->required();
  parse->add_option("--frames", parse_frames, "Also print clip frame ranges for this video length")
      ->check(CLI::PositiveNumber);

  auto* kto = app.add_subcommand("kto-step", "One KTO gradient step on a policy checkpoint");
  kto->add_option("policy", policy_file)->required();
  kto->add_option("dataset", dataset_file, "JSON array of {context, selections, desirable}")->required();
  kto->add_option("--reference", reference_file, "Reference checkpoint (default: the policy itself)");
  kto->add_option("--beta", beta)->check(CLI::PositiveNumber);
  kto->add_option("--lambda-d", lambda_d)->check(CLI::NonNegativeNumber);
  kto->add_option("--lambda-u", lambda_u)->check(CLI::NonNegativeNumber);
  kto->add_option("--lr", lr)->check(CLI::NonNegativeNumber);
  kto->add_option("--out", policy_out, "Write the updated checkpoint here (default: stdout)");

  auto* loop = app.add_subcommand("run-loop", "Run the closed optimisation loop from a JSON config");
  loop->add_option("config", config_file)->required();
  loop->add_option("--output", output_override, "Override the config's output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*smooth) {
      const auto curve = smoothness::fid_adjacent(imagekit::read_video_dir(frames_dir));
      if (!csv_out.empty()) smoothness::write_fid_csv(csv_out, curve);
      std::cout << "frames " << curve.scores.size() + 1 << "\nr_s " << fmt(smoothness::smoothness_reward(curve))
                << "\nmean_fid " << fmt(smoothness::mean_fid(curve)) << '\n';
    } else if (*real) {
      const auto video = imagekit::read_video_dir(frames_dir);
      const auto report = realism::realism_reward(video, realism::build_corpus(corpus_dir));
      std::cout << realism::report_text(report);
    } else if (*corpus) {
      simgen::RenderConfig cfg;
      cfg.width = width;
      cfg.height = height;
      for (const auto& p : simgen::make_reference_corpus(cfg, count, seed, out_dir)) std::cout << p.string() << '\n';
    } else if (*render) {
      const auto script = script::parse_script(read_text(script_file));
      simgen::RenderConfig cfg;
      cfg.width = width;
      cfg.height = height;
      cfg.total_frames = total_frames;
      cfg.seed = seed;
      cfg.scene_seed = scene_seed;
      const auto video = simgen::render_script(script, cfg);
      imagekit::write_video_dir(out_dir, video);
      std::cout << "wrote " << video.size() << " frames to " << out_dir << '\n';
    } else if (*parse) {
      const auto script = script::parse_script(read_text(script_file));
      std::cout << script::serialize_script(script) << '\n';
      if (parse_frames > 0) {
        const auto ranges = script::clip_frame_ranges(script, parse_frames);
        for (std::size_t n = 0; n < ranges.size(); ++n) {
          std::cout << "clip " << n + 1 << " frames " << ranges[n].lo << '-' << ranges[n].hi << '\n';
        }
      }
    } else if (*kto) {
      const auto policy = prefopt::load_policy(policy_file);
      const auto reference = reference_file.empty() ? policy : prefopt::load_policy(reference_file);
      const auto examples = parse_dataset(read_text(dataset_file));
      const prefopt::KTOConfig kc{beta, lambda_d, lambda_u};
      const auto before = prefopt::kto_loss(policy, reference, examples, kc);
      const auto updated = prefopt::gradient_step(policy, before.gradient, lr);
      const auto after = prefopt::kto_loss(updated, reference, examples, kc);
      std::cerr << "kto_loss_before " << fmt(before.loss) << "\nkto_loss_after " << fmt(after.loss) << '\n';
      if (policy_out.empty()) {
        std::cout << prefopt::serialize_policy(updated);
      } else {
        prefopt::save_policy(policy_out, updated);
      }
    } else if (*loop) {
      auto cfg = orchestrator::load_run_config(config_file);
      if (!output_override.empty()) cfg.output_dir = output_override;
      const auto manifest = orchestrator::run_loop(cfg);
      for (std::size_t i = 0; i < manifest.iterations.size(); ++i) {
        const auto& r = manifest.iterations[i].result;
        std::printf("iteration %zu mean %.6f max %.6f kto %.6f -> %.6f\n", i + 1, r.mean_reward, r.max_reward,
                    r.loss_before, r.loss_after);
      }
      if (!cfg.output_dir.empty()) std::cout << "manifest " << (cfg.output_dir / "manifest.json").string() << '\n';
    }
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return 0;
}
