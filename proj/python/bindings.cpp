#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>

#include "promptloop/error.hpp"
#include "promptloop/orchestrator.hpp"

namespace py = pybind11;
using namespace promptloop;

namespace {

using Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

// (H, W) or (H, W, 3) uint8 arrays.
imagekit::Image to_image(const Array& a) {
  if (a.ndim() != 2 && a.ndim() != 3) throw DataError("image array must be (H, W) or (H, W, C)");
  const int h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  const int c = a.ndim() == 3 ? static_cast<int>(a.shape(2)) : 1;
  std::vector<std::uint8_t> px(a.data(), a.data() + a.size());
  return imagekit::Image(w, h, c, std::move(px));
}

Array to_array(const imagekit::Image& img) {
  std::vector<py::ssize_t> shape{img.height(), img.width()};
  if (img.channels() == 3) shape.push_back(3);
  Array out(shape);
  std::memcpy(out.mutable_data(), img.pixels().data(), img.pixels().size());
  return out;
}

imagekit::Video to_video(const std::vector<Array>& frames) {
  std::vector<imagekit::Image> out;
  for (const auto& f : frames) out.push_back(to_image(f));
  return imagekit::Video(std::move(out));
}

std::vector<Array> from_video(const imagekit::Video& v) {
  std::vector<Array> out;
  for (const auto& f : v.frames()) out.push_back(to_array(f));
  return out;
}

script::PromptScript to_script(const std::vector<std::pair<int, std::string>>& clips) {
  script::PromptScript s;
  for (const auto& [start, text] : clips) s.clips.push_back({start, text});
  script::validate(s);
  return s;
}

std::vector<std::pair<int, std::string>> from_script(const script::PromptScript& s) {
  std::vector<std::pair<int, std::string>> out;
  for (const auto& c : s.clips) out.emplace_back(c.start_frame, c.text);
  return out;
}

py::dict report_dict(const realism::RealismReport& r) {
  py::dict d;
  d["per_frame_min_distance"] = r.per_frame_min_distance;
  d["argmin_reference_id"] = r.argmin_reference_id;
  d["worst_frame_index"] = r.worst_frame_index;
  d["reward"] = r.reward;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "promptloop reward scoring and preference optimisation";
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);

  m.def("read_pnm", [](const std::filesystem::path& p) { return to_array(imagekit::read_pnm(p)); });
  m.def("write_pnm", [](const std::filesystem::path& p, const Array& a) { imagekit::write_pnm(p, to_image(a)); });
  m.def("read_frames", [](const std::filesystem::path& dir) { return from_video(imagekit::read_video_dir(dir)); });
  m.def("write_frames", [](const std::filesystem::path& dir, const std::vector<Array>& frames) {
    imagekit::write_video_dir(dir, to_video(frames));
  });

  m.def("parse_script", [](const std::string& text) { return from_script(script::parse_script(text)); });
  m.def("serialize_script", [](const std::vector<std::pair<int, std::string>>& clips) {
    return script::serialize_script(to_script(clips));
  });
  m.def("clip_frame_ranges", [](const std::string& text, int total_frames) {
    std::vector<std::pair<int, int>> out;
    for (const auto& r : script::clip_frame_ranges(script::parse_script(text), total_frames)) out.emplace_back(r.lo, r.hi);
    return out;
  });

  m.def("fid_curve", [](const std::vector<Array>& frames) { return smoothness::fid_adjacent(to_video(frames)).scores; },
        "Squared embedding distance between consecutive frames.");
  m.def("smoothness_reward", [](const std::vector<Array>& frames) {
    return smoothness::smoothness_reward(smoothness::fid_adjacent(to_video(frames)));
  });

  m.def("hamming", [](const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
    if (a.size() != 4 || b.size() != 4) throw DataError("descriptors are four 64-bit words");
    orb::Descriptor x, y;
    std::copy(a.begin(), a.end(), x.words.begin());
    std::copy(b.begin(), b.end(), y.words.begin());
    return orb::hamming(x, y);
  });
  m.def("frame_distance", [](const Array& frame, const Array& ref) {
    return orb::frame_ref_distance(to_image(frame), to_image(ref));
  });

  py::class_<realism::ReferenceCorpus>(m, "ReferenceCorpus")
      .def(py::init([](const std::vector<std::pair<std::string, Array>>& entries) {
        std::vector<std::pair<std::string, imagekit::Image>> out;
        for (const auto& [id, a] : entries) out.emplace_back(id, to_image(a));
        return realism::ReferenceCorpus(std::move(out));
      }))
      .def_static("from_dir", [](const std::filesystem::path& dir) { return realism::build_corpus(dir); })
      .def("__len__", &realism::ReferenceCorpus::size)
      .def_property_readonly("ids", [](const realism::ReferenceCorpus& c) {
        std::vector<std::string> out;
        for (const auto& e : c.entries()) out.push_back(e.id);
        return out;
      });
  m.def("realism_reward", [](const std::vector<Array>& frames, const realism::ReferenceCorpus& corpus) {
    return report_dict(realism::realism_reward(to_video(frames), corpus));
  });

  m.def(
      "render",
      [](const std::string& text, int total_frames, std::uint64_t seed, std::uint64_t scene_seed, int width, int height) {
        simgen::RenderConfig cfg;
        cfg.total_frames = total_frames;
        cfg.seed = seed;
        cfg.scene_seed = scene_seed;
        cfg.width = width;
        cfg.height = height;
        return from_video(simgen::render_script(script::parse_script(text), cfg));
      },
      py::arg("script"), py::arg("total_frames") = 48, py::arg("seed") = 1, py::arg("scene_seed") = 0,
      py::arg("width") = 128, py::arg("height") = 128);
  m.def(
      "build_corpus",
      [](const std::filesystem::path& out_dir, int count, std::uint64_t seed) {
        return simgen::make_reference_corpus(simgen::RenderConfig{}, count, seed, out_dir);
      },
      py::arg("out_dir"), py::arg("count"), py::arg("seed"));

  m.def(
      "kto_step",
      [](const std::string& policy_text, const std::vector<std::tuple<std::string, std::vector<int>, bool>>& data,
         double learning_rate, double beta) {
        const auto policy = prefopt::parse_policy(policy_text);
        std::vector<prefopt::PreferenceExample> examples;
        for (const auto& [ctx, sel, desirable] : data) examples.push_back({{ctx, sel}, desirable});
        const prefopt::KTOConfig kc{beta, 1.0, 1.0};
        const auto before = prefopt::kto_loss(policy, policy, examples, kc);
        const auto updated = prefopt::gradient_step(policy, before.gradient, learning_rate);
        const double after = prefopt::kto_loss(updated, policy, examples, kc).loss;
        return py::make_tuple(prefopt::serialize_policy(updated), before.loss, after);
      },
      py::arg("policy"), py::arg("dataset"), py::arg("learning_rate") = orchestrator::RunConfig{}.learning_rate,
      py::arg("beta") = 0.1, "One KTO step with the policy as its own reference. Returns (policy, loss_before, loss_after).");

  m.def(
      "run_loop",
      [](const std::filesystem::path& config, std::optional<std::filesystem::path> output_dir) {
        auto cfg = orchestrator::load_run_config(config);
        if (output_dir) cfg.output_dir = *output_dir;
        py::gil_scoped_release release;
        const auto manifest = orchestrator::run_loop(cfg);
        return orchestrator::manifest_json(cfg, manifest);
      },
      py::arg("config"), py::arg("output_dir") = std::nullopt, "Runs the loop and returns the manifest JSON text.");
}
