#ifndef VFKIT_VERDICT_HPP
#define VFKIT_VERDICT_HPP

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace vfkit {

enum class Verdict { AC, WA, TLE, RE, CE };

using VerdictVector = std::vector<Verdict>;

constexpr std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::AC: return "AC";
    case Verdict::WA: return "WA";
    case Verdict::TLE: return "TLE";
    case Verdict::RE: return "RE";
    case Verdict::CE: return "CE";
  }
  return "?";
}

inline std::optional<Verdict> parse_verdict(std::string_view s) noexcept {
  if (s == "AC") return Verdict::AC;
  if (s == "WA") return Verdict::WA;
  if (s == "TLE") return Verdict::TLE;
  if (s == "RE") return Verdict::RE;
  if (s == "CE") return Verdict::CE;
  return std::nullopt;
}

/// Any non-AC verdict counts as a detected error.
constexpr bool detects(Verdict v) noexcept { return v != Verdict::AC; }

}  // namespace vfkit

#endif  // VFKIT_VERDICT_HPP
