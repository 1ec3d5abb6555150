#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace promptloop::script {

struct Clip {
  int start_frame = 1;  // 1-based
  std::string text;

  friend bool operator==(const Clip&, const Clip&) = default;
};

/// Timestamped prompt: "t1: text1; t2: text2; ...".
///
/// Invariants: at least one clip, the first starting at frame 1, start
/// frames strictly increasing, and each text non-empty, free of surrounding
/// whitespace and free of the reserved delimiters ':' and ';'.
struct PromptScript {
  std::vector<Clip> clips;

  friend bool operator==(const PromptScript&, const PromptScript&) = default;
};

/// Inclusive 1-based frame interval owned by one clip.
struct FrameRange {
  int lo = 1;
  int hi = 1;

  friend bool operator==(const FrameRange&, const FrameRange&) = default;
};

using ClipRanges = std::vector<FrameRange>;

/// Throws DataError naming the offending clip when an invariant fails.
void validate(const PromptScript& s);

PromptScript parse_script(std::string_view src);
std::string serialize_script(const PromptScript& s);

/// Clip n covers [t_n, t_{n+1} - 1]; the last clip runs to `total_frames`.
ClipRanges clip_frame_ranges(const PromptScript& s, int total_frames);

}  // namespace promptloop::script
