#include "promptloop/script.hpp"

#include <cctype>
#include <charconv>
#include <string>

#include "promptloop/error.hpp"

namespace promptloop::script {
namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

[[noreturn]] void fail(const std::string& what, std::size_t ordinal) {
  throw DataError(what + " at entry " + std::to_string(ordinal));
}

void check_text(std::string_view text, std::size_t ordinal) {
  if (text.empty()) fail("empty text", ordinal);
  if (text.find_first_of(":;") != std::string_view::npos) fail("reserved delimiter in text", ordinal);
  if (trim(text).size() != text.size()) fail("surrounding whitespace in text", ordinal);
}

}  // namespace

void validate(const PromptScript& s) {
  if (s.clips.empty()) throw DataError("prompt script has no clips");
  for (std::size_t i = 0; i < s.clips.size(); ++i) {
    const auto& clip = s.clips[i];
    if (i == 0 && clip.start_frame != 1) fail("first start_frame must be 1", 1);
    if (i > 0 && clip.start_frame <= s.clips[i - 1].start_frame) fail("non-increasing start_frame", i + 1);
    check_text(clip.text, i + 1);
  }
}

PromptScript parse_script(std::string_view src) {
  if (trim(src).empty()) throw DataError("empty prompt script");
  PromptScript out;
  std::size_t ordinal = 0;
  std::size_t begin = 0;
  while (true) {
    ++ordinal;
    const std::size_t end = src.find(';', begin);
    const std::string_view entry = src.substr(begin, end == std::string_view::npos ? std::string_view::npos : end - begin);

    const std::size_t colon = entry.find(':');
    if (colon == std::string_view::npos) fail("missing ':'", ordinal);
    const std::string_view index_text = trim(entry.substr(0, colon));
    const std::string_view text = trim(entry.substr(colon + 1));

    int start = 0;
    const auto [ptr, ec] = std::from_chars(index_text.data(), index_text.data() + index_text.size(), start);
    if (index_text.empty() || ec != std::errc() || ptr != index_text.data() + index_text.size()) {
      fail("non-integer index '" + std::string(index_text) + "'", ordinal);
    }
    if (ordinal == 1 && start != 1) fail("first start_frame must be 1", ordinal);
    if (ordinal > 1 && start <= out.clips.back().start_frame) fail("non-increasing start_frame", ordinal);
    check_text(text, ordinal);
    out.clips.push_back({start, std::string(text)});

    if (end == std::string_view::npos) break;
    begin = end + 1;
  }
  return out;
}

std::string serialize_script(const PromptScript& s) {
  std::string out;
  for (std::size_t i = 0; i < s.clips.size(); ++i) {
    if (i > 0) out += "; ";
    out += std::to_string(s.clips[i].start_frame);
    out += ": ";
    out += s.clips[i].text;
  }
  return out;
}

ClipRanges clip_frame_ranges(const PromptScript& s, int total_frames) {
  validate(s);
  if (total_frames < s.clips.back().start_frame) {
    throw DataError("total_frames " + std::to_string(total_frames) + " is before the last clip start " +
                    std::to_string(s.clips.back().start_frame));
  }
  ClipRanges ranges;
  ranges.reserve(s.clips.size());
  for (std::size_t i = 0; i < s.clips.size(); ++i) {
    const int hi = i + 1 < s.clips.size() ? s.clips[i + 1].start_frame - 1 : total_frames;
    ranges.push_back({s.clips[i].start_frame, hi});
  }
  return ranges;
}

}  // namespace promptloop::script
