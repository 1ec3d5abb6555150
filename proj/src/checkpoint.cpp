// Policy checkpoint format:
//
//   promptloop-policy 1
//   context <id>
//   slot <vocab size> <name>
//   <logit> <token>          (one line per vocabulary entry)
//   ...
//   end
//
// Identifiers run to the end of their line, so they may contain spaces.

#include <charconv>
#include <cstdlib>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "promptloop/error.hpp"
#include "promptloop/prefopt.hpp"

namespace promptloop::prefopt {
namespace {

constexpr std::string_view kMagic = "promptloop-policy 1";

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

class LineReader {
 public:
  explicit LineReader(std::string_view text) : text_(text) {}

  std::string_view next() {
    if (pos_ >= text_.size()) fail("unexpected end of checkpoint");
    const std::size_t end = text_.find('\n', pos_);
    std::string_view line = text_.substr(pos_, end == std::string_view::npos ? std::string_view::npos : end - pos_);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    pos_ = end == std::string_view::npos ? text_.size() : end + 1;
    ++line_no_;
    return line;
  }

  [[noreturn]] void fail(const std::string& what) const {
    throw DataError("policy checkpoint line " + std::to_string(line_no_) + ": " + what);
  }

 private:
  std::string_view text_;
  std::size_t pos_ = 0;
  int line_no_ = 0;
};

// Splits "<head> <rest>" at the first space.
std::pair<std::string_view, std::string_view> split_head(std::string_view line) {
  const std::size_t sp = line.find(' ');
  if (sp == std::string_view::npos) return {line, {}};
  return {line.substr(0, sp), line.substr(sp + 1)};
}

}  // namespace

std::string serialize_policy(const PolicyParams& policy) {
  std::ostringstream out;
  out << kMagic << '\n';
  for (std::size_t c = 0; c < policy.contexts().size(); ++c) {
    const auto& ctx = policy.contexts()[c];
    out << "context " << ctx.id << '\n';
    for (std::size_t s = 0; s < ctx.slots.size(); ++s) {
      const auto& slot = ctx.slots[s];
      out << "slot " << slot.vocab.size() << ' ' << slot.name << '\n';
      const auto logits = policy.slot_logits(c, s);
      for (std::size_t k = 0; k < slot.vocab.size(); ++k) out << format_double(logits[k]) << ' ' << slot.vocab[k] << '\n';
    }
  }
  out << "end\n";
  return out.str();
}

PolicyParams parse_policy(std::string_view text) {
  LineReader in(text);
  if (in.next() != kMagic) in.fail("missing header '" + std::string(kMagic) + "'");
  std::vector<ContextSpec> contexts;
  std::vector<double> logits;
  while (true) {
    const std::string_view line = in.next();
    const auto [head, rest] = split_head(line);
    if (head == "end") break;
    if (head == "context") {
      if (rest.empty()) in.fail("empty context id");
      contexts.push_back({std::string(rest), {}});
    } else if (head == "slot") {
      if (contexts.empty()) in.fail("slot before any context");
      const auto [count_text, name] = split_head(rest);
      std::size_t count = 0;
      const auto [ptr, ec] = std::from_chars(count_text.data(), count_text.data() + count_text.size(), count);
      if (ec != std::errc() || ptr != count_text.data() + count_text.size() || count == 0) in.fail("bad vocab size");
      SlotSpec slot{std::string(name), {}};
      for (std::size_t k = 0; k < count; ++k) {
        const auto [value_text, token] = split_head(in.next());
        const std::string value_str(value_text);
        char* endp = nullptr;
        const double v = std::strtod(value_str.c_str(), &endp);
        if (value_str.empty() || endp != value_str.c_str() + value_str.size()) in.fail("bad logit '" + value_str + "'");
        logits.push_back(v);
        slot.vocab.emplace_back(token);
      }
      contexts.back().slots.push_back(std::move(slot));
    } else {
      in.fail("unexpected line '" + std::string(line) + "'");
    }
  }
  return PolicyParams(std::move(contexts), std::move(logits));
}

void save_policy(const std::filesystem::path& path, const PolicyParams& policy) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << serialize_policy(policy);
}

PolicyParams load_policy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_policy(buf.str());
}

}  // namespace promptloop::prefopt
