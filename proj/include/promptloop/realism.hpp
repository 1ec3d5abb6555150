#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "promptloop/imagekit.hpp"
#include "promptloop/orb.hpp"

namespace promptloop::realism {

struct CorpusEntry {
  std::string id;  // file stem
  imagekit::Image image;
  orb::Features features;
  /// Fewer keypoints than the match floor: this entry always scores D = 1.
  bool flagged = false;
};

/// Reference images with their features computed once at build time.
class ReferenceCorpus {
 public:
  /// Entries are sorted by id. Throws DataError for an empty list.
  ReferenceCorpus(std::vector<std::pair<std::string, imagekit::Image>> images, orb::OrbParams params = {});

  const std::vector<CorpusEntry>& entries() const { return entries_; }
  const orb::OrbParams& params() const { return params_; }
  std::size_t size() const { return entries_.size(); }

  /// New corpus with one more entry (descriptors of the others are reused).
  ReferenceCorpus with_entry(std::string id, imagekit::Image image) const;

 private:
  ReferenceCorpus() = default;

  std::vector<CorpusEntry> entries_;
  orb::OrbParams params_;
};

/// Loads every *.pgm / *.ppm / *.pnm file of `dir` in lexicographic order.
ReferenceCorpus build_corpus(const std::filesystem::path& dir, const orb::OrbParams& params = {});

struct FrameRealism {
  double min_distance = 1.0;
  std::string argmin_id;
};

FrameRealism frame_realism(const imagekit::Image& frame, const ReferenceCorpus& corpus);
FrameRealism frame_realism(const orb::Features& frame, const ReferenceCorpus& corpus);

struct RealismReport {
  std::vector<double> per_frame_min_distance;
  std::vector<std::string> argmin_reference_id;
  std::size_t worst_frame_index = 0;  // 0-based
  double reward = 0.0;                // r_a = -max(per_frame_min_distance)
};

/// Scores frames [first, last] (0-based, inclusive) of the video, or all of
/// them when no range is given. Restricting to a clip gives the per-clip
/// reward.
RealismReport realism_reward(const imagekit::Video& video, const ReferenceCorpus& corpus,
                             std::optional<std::pair<std::size_t, std::size_t>> frames = std::nullopt);

/// Builds the report from per-frame results already computed.
RealismReport assemble_report(std::vector<FrameRealism> per_frame);

inline constexpr double kDistanceFloor = 1e-6;

/// 1 / max(distance, 1e-6).
double match_score_from_distance(double min_distance);
double match_score(const imagekit::Image& frame, const ReferenceCorpus& corpus);

/// Rows "frame_id,min_distance,argmin_reference_id" (1-based frame ids),
/// then "worst_frame,<id>" and "r_a,<value>".
std::string report_text(const RealismReport& report);

}  // namespace promptloop::realism
