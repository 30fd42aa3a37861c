#ifndef VFKIT_TCG_PARSE_HPP
#define VFKIT_TCG_PARSE_HPP

#include <algorithm>
#include <cctype>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vfkit::tcg {

struct CaseScript {
  std::string language = "python";
  std::string script_source;
  std::string math_explanation;
  std::optional<std::string> self_validation_source;
  std::size_t target_count = 0;  ///< inputs requested from the script; 0 uses the configured default
  bool operator==(const CaseScript&) const = default;
};

enum class ParseMode { strict, lenient };

struct ParseResult {
  std::vector<CaseScript> scripts;
  std::vector<std::string> diagnostics;
};

struct FencedBlock {
  std::string tag;  ///< normalized first word of the info string
  std::string body;
};

namespace detail {

inline std::string normalize_tag(std::string_view info) {
  std::string tag;
  for (char c : info) {
    if (std::isspace(static_cast<unsigned char>(c))) break;
    tag.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return tag;
}

inline std::string_view trim_right(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// All fenced blocks in order. A fence of N >= 3 backticks closes at the next line
/// holding only >= N backticks; an unclosed block runs to the end of the text.
inline std::vector<FencedBlock> fenced_blocks(std::string_view text) {
  std::vector<FencedBlock> out;
  std::size_t pos = 0;
  std::optional<FencedBlock> open;
  std::size_t fence_len = 0;
  while (pos < text.size()) {
    const auto eol = text.find('\n', pos);
    const std::string_view raw = text.substr(pos, eol == std::string_view::npos ? text.size() - pos : eol - pos);
    const std::string_view line = detail::trim_right(raw);
    std::string_view lead = line;
    while (!lead.empty() && (lead.front() == ' ' || lead.front() == '\t')) lead.remove_prefix(1);
    const std::size_t ticks = lead.find_first_not_of('`') == std::string_view::npos ? lead.size() : lead.find_first_not_of('`');
    if (open) {
      if (ticks >= fence_len && ticks == lead.size()) {
        out.push_back(std::move(*open));
        open.reset();
      } else {
        open->body.append(raw);
        open->body.push_back('\n');
      }
    } else if (ticks >= 3) {
      open = FencedBlock{detail::normalize_tag(lead.substr(ticks)), {}};
      fence_len = ticks;
    }
    if (eol == std::string_view::npos) break;
    pos = eol + 1;
  }
  if (open) out.push_back(std::move(*open));
  return out;
}

/// Groups `case-script` / `explanation` / `self-validation` blocks into triples.
/// A case-script opens a triple; the other two attach to the most recent one.
/// Strict mode drops triples missing the explanation or validator; lenient mode
/// keeps them with whatever was present.
inline ParseResult parse_llm_response(std::string_view text, ParseMode mode = ParseMode::strict) {
  ParseResult result;
  std::optional<CaseScript> cur;
  bool has_explanation = false;
  std::size_t triple_no = 0;

  const auto finish = [&] {
    if (!cur) return;
    ++triple_no;
    const bool complete = has_explanation && cur->self_validation_source.has_value();
    if (complete || mode == ParseMode::lenient) {
      if (!complete)
        result.diagnostics.push_back("strategy " + std::to_string(triple_no) + ": kept without " +
                                     (has_explanation ? "self-validation" : "explanation"));
      result.scripts.push_back(std::move(*cur));
    } else {
      std::string missing = !has_explanation ? "explanation" : "";
      if (!cur->self_validation_source) missing += std::string(missing.empty() ? "" : " and ") + "self-validation";
      result.diagnostics.push_back("strategy " + std::to_string(triple_no) + ": skipped, missing " + missing);
    }
    cur.reset();
    has_explanation = false;
  };

  for (auto& b : fenced_blocks(text)) {
    if (b.tag == "case-script") {
      finish();
      cur = CaseScript{};
      cur->script_source = std::move(b.body);
    } else if (b.tag == "explanation" || b.tag == "math-explanation") {
      if (!cur) {
        result.diagnostics.push_back("explanation block before any case-script ignored");
        continue;
      }
      cur->math_explanation = std::move(b.body);
      has_explanation = true;
    } else if (b.tag == "self-validation" || b.tag == "validator") {
      if (!cur) {
        result.diagnostics.push_back("self-validation block before any case-script ignored");
        continue;
      }
      cur->self_validation_source = std::move(b.body);
    }
  }
  finish();
  if (text.find_first_not_of(" \t\r\n") != std::string_view::npos && result.scripts.empty() &&
      result.diagnostics.empty())
    result.diagnostics.push_back("no case-script blocks found");
  return result;
}

struct DirectParse {
  std::vector<std::pair<std::string, std::string>> cases;
  std::vector<std::string> diagnostics;
};

/// Pairs each `input` block with the `output` block that follows it.
inline DirectParse parse_direct_cases(std::string_view text) {
  DirectParse out;
  std::optional<std::string> pending;
  for (auto& b : fenced_blocks(text)) {
    if (b.tag == "input") {
      if (pending) out.diagnostics.push_back("input block without output dropped");
      pending = std::move(b.body);
    } else if (b.tag == "output") {
      if (!pending) {
        out.diagnostics.push_back("output block without input dropped");
        continue;
      }
      out.cases.emplace_back(std::move(*pending), std::move(b.body));
      pending.reset();
    }
  }
  if (pending) out.diagnostics.push_back("input block without output dropped");
  if (out.cases.empty() && out.diagnostics.empty()) out.diagnostics.push_back("no input/output blocks found");
  return out;
}

}  // namespace vfkit::tcg

#endif  // VFKIT_TCG_PARSE_HPP
