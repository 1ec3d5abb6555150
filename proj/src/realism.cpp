#include "promptloop/realism.hpp"

#include <algorithm>
#include <cstdio>

#include "promptloop/error.hpp"

namespace promptloop::realism {

ReferenceCorpus::ReferenceCorpus(std::vector<std::pair<std::string, imagekit::Image>> images, orb::OrbParams params)
    : params_(params) {
  if (images.empty()) throw DataError("reference corpus needs at least one image");
  std::stable_sort(images.begin(), images.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  entries_.reserve(images.size());
  for (auto& [id, image] : images) {
    orb::Features features = orb::extract_features(image, params_);
    const bool flagged = features.keypoints.size() < static_cast<std::size_t>(params_.min_matches);
    entries_.push_back({std::move(id), std::move(image), std::move(features), flagged});
  }
}

ReferenceCorpus ReferenceCorpus::with_entry(std::string id, imagekit::Image image) const {
  ReferenceCorpus out;
  out.params_ = params_;
  out.entries_ = entries_;
  orb::Features features = orb::extract_features(image, params_);
  const bool flagged = features.keypoints.size() < static_cast<std::size_t>(params_.min_matches);
  out.entries_.push_back({std::move(id), std::move(image), std::move(features), flagged});
  std::stable_sort(out.entries_.begin(), out.entries_.end(),
                   [](const CorpusEntry& a, const CorpusEntry& b) { return a.id < b.id; });
  return out;
}

ReferenceCorpus build_corpus(const std::filesystem::path& dir, const orb::OrbParams& params) {
  if (!std::filesystem::is_directory(dir)) throw DataError("corpus directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm" || ext == ".pnm")) files.push_back(entry.path());
  }
  if (files.empty()) throw DataError("corpus directory has no pixmap files: " + dir.string());
  std::sort(files.begin(), files.end(),
            [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
  std::vector<std::pair<std::string, imagekit::Image>> images;
  images.reserve(files.size());
  for (const auto& f : files) images.emplace_back(f.stem().string(), imagekit::read_pnm(f));
  return ReferenceCorpus(std::move(images), params);
}

FrameRealism frame_realism(const orb::Features& frame, const ReferenceCorpus& corpus) {
  FrameRealism best{2.0, {}};
  for (const auto& entry : corpus.entries()) {
    const double d = orb::feature_distance(frame, entry.features, corpus.params());
    // Entries are id-sorted, so a strict comparison keeps the smallest id on ties.
    if (d < best.min_distance) best = {d, entry.id};
  }
  return best;
}

FrameRealism frame_realism(const imagekit::Image& frame, const ReferenceCorpus& corpus) {
  return frame_realism(orb::extract_features(frame, corpus.params()), corpus);
}

RealismReport assemble_report(std::vector<FrameRealism> per_frame) {
  if (per_frame.empty()) throw DataError("realism report needs at least one frame");
  RealismReport report;
  for (auto& fr : per_frame) {
    report.per_frame_min_distance.push_back(fr.min_distance);
    report.argmin_reference_id.push_back(std::move(fr.argmin_id));
  }
  const auto& d = report.per_frame_min_distance;
  report.worst_frame_index = static_cast<std::size_t>(std::max_element(d.begin(), d.end()) - d.begin());
  report.reward = -d[report.worst_frame_index];
  return report;
}

RealismReport realism_reward(const imagekit::Video& video, const ReferenceCorpus& corpus,
                             std::optional<std::pair<std::size_t, std::size_t>> frames) {
  const auto [first, last] = frames.value_or(std::pair<std::size_t, std::size_t>{0, video.size() - 1});
  if (first > last || last >= video.size()) throw DataError("realism frame range out of bounds");
  std::vector<FrameRealism> per_frame;
  per_frame.reserve(last - first + 1);
  for (std::size_t i = first; i <= last; ++i) per_frame.push_back(frame_realism(video.frame(i), corpus));
  return assemble_report(std::move(per_frame));
}

double match_score_from_distance(double min_distance) { return 1.0 / std::max(min_distance, kDistanceFloor); }

double match_score(const imagekit::Image& frame, const ReferenceCorpus& corpus) {
  return match_score_from_distance(frame_realism(frame, corpus).min_distance);
}

std::string report_text(const RealismReport& report) {
  std::string out = "frame_id,min_distance,argmin_reference_id\n";
  char buf[96];
  for (std::size_t i = 0; i < report.per_frame_min_distance.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%zu,%.17g,", i + 1, report.per_frame_min_distance[i]);
    out += buf;
    out += report.argmin_reference_id[i];
    out += '\n';
  }
  std::snprintf(buf, sizeof buf, "worst_frame,%zu\nr_a,%.17g\n", report.worst_frame_index + 1, report.reward);
  out += buf;
  return out;
}

}  // namespace promptloop::realism
