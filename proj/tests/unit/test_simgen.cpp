#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "promptloop/error.hpp"
#include "promptloop/realism.hpp"
#include "promptloop/simgen.hpp"
#include "promptloop/smoothness.hpp"
#include "test_support.hpp"

using namespace promptloop;
using namespace promptloop::simgen;
using imagekit::Image;
using imagekit::Video;

namespace {

RenderConfig small_config() {
  RenderConfig cfg;
  cfg.total_frames = 48;
  cfg.seed = 3;
  cfg.scene_seed = 5;
  return cfg;
}

const realism::ReferenceCorpus& shared_corpus() {
  static const realism::ReferenceCorpus corpus = [] {
    std::vector<std::pair<std::string, Image>> refs;
    for (int i = 0; i < 24; ++i) refs.emplace_back("ref_" + std::to_string(i), reference_still(RenderConfig{}, i, 7));
    return realism::ReferenceCorpus(std::move(refs));
  }();
  return corpus;
}

script::PromptScript two_clips(const std::string& text) {
  return {{{1, text}, {25, text}}};
}

double r_s(const Video& v) { return smoothness::smoothness_reward(smoothness::fid_adjacent(v)); }
double r_a(const Video& v) { return realism::realism_reward(v, shared_corpus()).reward; }

}  // namespace

TEST_CASE("vocabulary and slots") {
  const TokenVocab vocab;
  const auto slots = vocab.slots();
  REQUIRE(slots.size() == 3);
  CHECK(slots[0].vocab.size() == 3);
  CHECK(slots[1].vocab.size() == 4);
  CHECK(slots[2].vocab.size() == 3);
}

TEST_CASE("expand prompt") {
  const TokenVocab vocab;
  const prefopt::PromptChoice y{"reef", {1, 2, 0}};
  const auto s = expand_prompt(y, vocab, 2, 48);
  REQUIRE(s.clips.size() == 2);
  CHECK(s.clips[0].start_frame == 1);
  CHECK(s.clips[1].start_frame == 49);
  CHECK(s.clips[0].text == "crawls segmented smoothly");
  CHECK(expand_prompt(y, vocab, 2, 48) == s);
  for (int v = 0; v < 3; ++v)
    for (int a = 0; a < 4; ++a)
      for (int t = 0; t < 3; ++t) {
        const auto e = expand_prompt({"x", {v, a, t}}, vocab, 3, 7);
        REQUIRE(script::parse_script(script::serialize_script(e)) == e);
      }
}

TEST_CASE("clip interpretation") {
  const ClipStyle plain = interpret_clip("glides plain abruptly");
  CHECK(plain.jitter_scale == 2.0);
  CHECK(!plain.continuous);
  CHECK(plain.segment_lines == 0);
  const ClipStyle smooth = interpret_clip("darts plain smoothly");
  CHECK(smooth.jitter_scale == doctest::Approx(0.2));
  CHECK(smooth.continuous);
  CHECK(interpret_clip("crawls").speed < interpret_clip("darts").speed);
  const ClipStyle both = interpret_clip("glides hard shell segmented");
  CHECK(both.rim);
  CHECK(both.segment_lines == 8);
  CHECK(both.contrast > interpret_clip("glides hard shell").contrast);
  CHECK(both.contrast <= 0.8);
  CHECK(both.lobes);
  CHECK(!interpret_clip("glides hard shell").lobes);
  CHECK(interpret_clip("longitudinal lobes").lobes);
}

TEST_CASE("render is deterministic and seed dependent") {
  const auto s = two_clips("glides segmented gradually");
  const RenderConfig cfg = small_config();
  const Video a = render_script(s, cfg);
  CHECK(a.size() == 48);
  CHECK(a.frame(0).width() == 128);
  CHECK(render_script(s, cfg) == a);
  RenderConfig other = cfg;
  other.seed = 4;
  CHECK(!(render_script(s, other) == a));

  RenderConfig short_cfg = cfg;
  short_cfg.total_frames = 20;
  CHECK_THROWS_AS(render_script(s, short_cfg), DataError);
}

TEST_CASE("smooth beats abrupt on the smoothness reward") {
  const RenderConfig cfg = small_config();
  for (const char* verb : {"glides", "crawls", "darts"}) {
    const std::string v(verb);
    CHECK(r_s(render_script(two_clips(v + " plain smoothly"), cfg)) >
          r_s(render_script(two_clips(v + " plain abruptly"), cfg)));
  }
}

TEST_CASE("detail words raise realism") {
  const RenderConfig cfg = small_config();
  const double plain = r_a(render_script(two_clips("glides plain smoothly"), cfg));
  const double detailed = r_a(render_script(two_clips("glides hard shell segmented smoothly"), cfg));
  MESSAGE("plain " << plain << " hard shell segmented " << detailed);
  CHECK(detailed > plain);
}

TEST_CASE("token monotonicity over the full grid") {
  const TokenVocab vocab;
  const RenderConfig cfg = small_config();
  double rs[3][4][3], ra[3][4][3];
  for (int v = 0; v < 3; ++v)
    for (int a = 0; a < 4; ++a)
      for (int t = 0; t < 3; ++t) {
        const Video video = render_script(expand_prompt({"x", {v, a, t}}, vocab, 2, 24), cfg);
        rs[v][a][t] = r_s(video);
        ra[v][a][t] = r_a(video);
      }
  const int smoothly = 0, abruptly = 1, plain = 3;
  for (int v = 0; v < 3; ++v) {
    for (int a = 0; a < 4; ++a) CHECK(rs[v][a][smoothly] >= rs[v][a][abruptly]);
    for (int t = 0; t < 3; ++t)
      for (int a = 0; a < 3; ++a) CHECK(ra[v][a][t] >= ra[v][plain][t]);
  }
}

TEST_CASE("noise schedule") {
  const auto s = NoiseSchedule::linear();
  REQUIRE(s.alpha_bar.size() == 1001);
  CHECK(s.alpha_bar[0] == 1.0);
  CHECK(s.betas.front() == doctest::Approx(1e-4));
  CHECK(s.betas.back() == doctest::Approx(0.02));
  double prod = 1.0;
  for (int t = 1; t <= 1000; ++t) {
    prod *= 1.0 - (1e-4 + (0.02 - 1e-4) * (t - 1) / 999.0);
    REQUIRE(s.alpha_bar[t] < s.alpha_bar[t - 1]);
    REQUIRE(s.alpha_bar[t] > 0.0);
    REQUIRE(s.alpha_bar[t] == doctest::Approx(prod).epsilon(1e-12));
  }
  // zero noise scales toward 0
  CHECK(s.mix(0.8, 0.0, 300) == doctest::Approx(std::sqrt(s.alpha_bar[300]) * 0.8));
  CHECK(s.mix(0.8, 0.0, 0) == 0.8);
}

TEST_CASE("variance law of the mixing step") {
  const auto s = NoiseSchedule::linear();
  for (int t : {50, 200, 350, 500}) {
    Rng rng(static_cast<std::uint64_t>(t));
    const int n = 200000;
    double sum = 0, sq = 0;
    for (int i = 0; i < n; ++i) {
      const double v = s.mix(0.5, rng.normal(), t);
      sum += v;
      sq += v * v;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(var == doctest::Approx(1.0 - s.alpha_bar[t]).epsilon(0.05));
    CHECK(mean == doctest::Approx(0.5 * std::sqrt(s.alpha_bar[t])).epsilon(0.02));
  }
}

TEST_CASE("forward noise") {
  const auto sched = NoiseSchedule::linear();
  const Video clean = render_script(two_clips("glides longitudinal lobes smoothly"), small_config());
  CHECK(forward_noise(clean, 100, sched, 9) == forward_noise(clean, 100, sched, 9));
  CHECK_THROWS_AS(forward_noise(clean, 0, sched, 1), DataError);
  CHECK_THROWS_AS(forward_noise(clean, 1001, sched, 1), DataError);

  // t = 1: noise std is 255 * sqrt(1e-4) = 2.55 levels, so the residual
  // follows that law; 99% of pixels stay within three of its deviations.
  const Video light = forward_noise(clean, 1, sched, 2);
  std::size_t close = 0, total = 0;
  double sq = 0;
  for (std::size_t f = 0; f < clean.size(); ++f) {
    for (std::size_t i = 0; i < clean.frame(f).pixels().size(); ++i) {
      const int d = light.frame(f).pixels()[i] - clean.frame(f).pixels()[i];
      close += std::abs(d) <= 8;
      sq += d * d;
      ++total;
    }
  }
  CHECK(static_cast<double>(close) / total >= 0.99);
  CHECK(std::sqrt(sq / total) == doctest::Approx(255.0 * std::sqrt(1.0 - sched.alpha_bar[1])).epsilon(0.1));

  // t = T: almost no trace of the input
  const Video heavy = forward_noise(clean, 1000, sched, 3);
  double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  double n = 0;
  for (std::size_t f = 0; f < clean.size(); ++f) {
    for (std::size_t i = 0; i < clean.frame(f).pixels().size(); ++i) {
      const double x = clean.frame(f).pixels()[i], y = heavy.frame(f).pixels()[i];
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
      sxy += x * y;
      ++n;
    }
  }
  const double corr = (sxy / n - sx / n * sy / n) /
                      std::sqrt((sxx / n - sx / n * sx / n) * (syy / n - sy / n * sy / n));
  MESSAGE("correlation at T " << corr);
  CHECK(corr <= 0.2);
}

TEST_CASE("noise degrades smoothness monotonically") {
  const auto sched = NoiseSchedule::linear();
  const Video clean = render_script(two_clips("crawls longitudinal lobes smoothly"), small_config());
  double prev = r_s(clean);
  for (int t : {50, 200, 400, 600, 800}) {
    const double cur = r_s(forward_noise(clean, t, sched, 11));
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("reference corpus") {
  testsupport::TempDir dir("refcorpus");
  RenderConfig cfg;
  const auto paths = make_reference_corpus(cfg, 5, 7, dir.path);
  REQUIRE(paths.size() == 5);
  CHECK(paths[0].filename() == "ref_0001.pgm");
  CHECK(paths[4].filename() == "ref_0005.pgm");
  for (int i = 0; i < 5; ++i) CHECK(imagekit::read_pnm(paths[i]) == reference_still(cfg, i, 7));

  testsupport::TempDir again("refcorpus2");
  const auto second = make_reference_corpus(cfg, 5, 7, again.path);
  for (int i = 0; i < 5; ++i) {
    std::ifstream a(paths[i], std::ios::binary), b(second[i], std::ios::binary);
    std::stringstream sa, sb;
    sa << a.rdbuf();
    sb << b.rdbuf();
    CHECK(sa.str() == sb.str());
  }
  CHECK(!(reference_still(cfg, 0, 7) == reference_still(cfg, 1, 7)));
  CHECK_THROWS_AS(make_reference_corpus(cfg, 0, 7, dir.path), DataError);

  const auto corpus = realism::build_corpus(dir.path);
  for (const auto& e : corpus.entries()) CHECK(realism::frame_realism(e.image, corpus).min_distance == 0.0);

  const Video detailed = render_script(two_clips("glides hard shell segmented smoothly"), small_config());
  const double best = realism::frame_realism(detailed.frame(10), shared_corpus()).min_distance;
  CHECK(best < realism::frame_realism(Image::filled(128, 128, 1, 0), shared_corpus()).min_distance);
}
