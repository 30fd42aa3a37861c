#ifndef VFKIT_TCG_PROMPTS_HPP
#define VFKIT_TCG_PROMPTS_HPP

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vfkit/dataset.hpp"
#include "vfkit/error.hpp"

namespace vfkit::tcg {

/// Every template carries a version tag; change the tag whenever the text changes,
/// since replay fixtures are keyed by the rendered prompt.
struct PromptTemplate {
  std::string_view version;
  std::string_view text;
};

inline constexpr std::string_view kScriptFormat = R"(Answer format. For every test strategy emit exactly three fenced blocks, in this order:

```case-script
A Python 3 program. It is called as `python3 script.py COUNT SEED`. It prints up to COUNT
complete test inputs for the problem, deterministic for a given SEED. Separate consecutive
inputs with a line containing exactly ###CASE###.
```

```explanation
The constraint or strategy the script targets, written as short formal statements,
for example `boundary_value: n = 1, n = 10^5` or `equivalence_class: all elements equal`.
```

```self-validation
A Python 3 program that reads ONE test input from standard input and exits with status 0
if the input satisfies every constraint of the problem and the stated strategy, and with
status 1 otherwise.
```

Emit between 1 and 5 strategies. Do not print expected outputs; they are computed separately.)";

inline constexpr PromptTemplate kMultidimTemplate{"multidim/v1", R"(You are designing test inputs for a competitive programming problem.

## Problem
{{statement}}

## Constraints
{{constraints}}

## Accepted solutions
Below are {{count}} distinct accepted solutions written by different people.

{{solutions}}

## Task
Study how these solutions handle the problem and derive test inputs that a plausible but
flawed solution would get wrong:
1. Constraint handling differences: where the solutions guard against limits, overflow,
   empty or degenerate structures, and where a weaker solution would not.
2. Defense pattern deconstruction: turn each defensive check or special case you see into a
   formal constraint (boundary values, equivalence classes, extremal structures) and state
   it in the explanation block.
3. Targeted generation: write case scripts that construct inputs hitting those constraints,
   including extreme sizes within the limits.

{{format}}
)"};

inline constexpr PromptTemplate kDifferentialTemplate{"differential/v1", R"(You are designing test inputs for a competitive programming problem.

## Problem
{{statement}}

## Constraints
{{constraints}}

## Failed submission (judge verdict: {{verdict}})
```{{wrong_language}}
{{wrong_source}}
```

## Same author's corrected submission
```{{corrected_language}}
{{corrected_source}}
```

## Task
Compare the two submissions and find inputs on which they produce different results:
1. Constraint handling differences: limits, types or ranges the failed version mishandles.
2. Lack of defensive completeness: edge cases or boundary inputs the failed version does not
   guard against but the corrected version does.
3. Failure pattern analysis: concrete inputs that make the failed version give a wrong
   answer, crash or run too long while the corrected version handles them.
Every input must still be valid for the problem.

{{format}}
)"};

inline constexpr PromptTemplate kDirectTemplate{"direct/v1", R"(You are writing test cases for a competitive programming problem.

## Problem
{{statement}}

## Constraints
{{constraints}}

## Task
Write {{n}} complete test cases covering typical inputs and boundary conditions. For each
case emit an input block followed by its expected output block:

```input
<exact contents of standard input>
```

```output
<exact expected standard output>
```
)"};

inline constexpr PromptTemplate kSamplerTemplate{"sampler/v1", R"(You are writing a random input generator for a competitive programming problem.

## Problem
{{statement}}

## Constraints
{{constraints}}

## Task
Write one Python 3 program, called as `python3 gen.py COUNT SEED`, that prints COUNT
independent random valid inputs sampled uniformly within the constraints, deterministic for
a given SEED, with a line containing exactly ###CASE### between consecutive inputs.
Put it in a single fenced block:

```case-script
...
```
)"};

inline constexpr PromptTemplate kSimplePriorsTemplate{"simple-priors/v1", R"(You are writing test cases for a competitive programming problem.

## Problem
{{statement}}

## Constraints
{{constraints}}

## Reference solutions
{{solutions}}

## Task
Read the reference solutions, list the boundary values they check explicitly (minimum and
maximum sizes, zero, equal elements, sign changes), and write {{n}} test inputs that exercise
those boundary values.

{{format}}
)"};

/// Replaces every `{{key}}` with its value; unknown placeholders are an error.
inline std::string render(std::string_view templ, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(templ.size() * 2);
  std::size_t pos = 0;
  while (pos < templ.size()) {
    const auto open = templ.find("{{", pos);
    if (open == std::string_view::npos) {
      out.append(templ.substr(pos));
      break;
    }
    const auto close = templ.find("}}", open + 2);
    if (close == std::string_view::npos) throw DomainError("unterminated placeholder in template");
    out.append(templ.substr(pos, open - pos));
    const std::string key(templ.substr(open + 2, close - open - 2));
    const auto it = values.find(key);
    if (it == values.end()) throw DomainError("template placeholder without value: " + key);
    out += it->second;
    pos = close + 2;
  }
  return out;
}

struct BuiltPrompt {
  std::string text;
  std::string template_version;
  std::vector<std::string> notes;
};

namespace detail {

inline std::string or_placeholder(const std::string& s) { return s.empty() ? "(not given)" : s; }

inline std::map<std::string, std::string> problem_fields(const Problem& p) {
  return {{"statement", or_placeholder(p.statement)}, {"constraints", or_placeholder(p.constraints_text)}};
}

inline std::string solution_listing(const std::vector<Solution>& solutions) {
  std::string out;
  for (std::size_t i = 0; i < solutions.size(); ++i) {
    if (i) out += "\n";
    out += "### Solution " + std::to_string(i + 1) + "\n```" + solutions[i].language + "\n" + solutions[i].source;
    if (!solutions[i].source.empty() && solutions[i].source.back() != '\n') out += "\n";
    out += "```\n";
  }
  return out;
}

}  // namespace detail

inline constexpr std::size_t kDefaultMultidimCap = 10;

/// Multidimensional-analysis prompt over the first `cap` correct solutions, in corpus order.
inline BuiltPrompt build_multidim_prompt(const Problem& problem, const std::vector<Solution>& correct,
                                         std::size_t cap = kDefaultMultidimCap) {
  if (correct.empty()) throw DomainError("multidimensional analysis needs at least one correct solution");
  if (cap == 0) throw DomainError("solution cap must be >= 1");
  BuiltPrompt b;
  const std::vector<Solution> used(correct.begin(), correct.begin() + static_cast<std::ptrdiff_t>(std::min(cap, correct.size())));
  if (used.size() < cap)
    b.notes.push_back("fewer than requested: " + std::to_string(used.size()) + " of " + std::to_string(cap) +
                      " correct solutions available");
  auto values = detail::problem_fields(problem);
  values["count"] = std::to_string(used.size());
  values["solutions"] = detail::solution_listing(used);
  values["format"] = std::string(kScriptFormat);
  b.text = render(kMultidimTemplate.text, values);
  b.template_version = std::string(kMultidimTemplate.version);
  return b;
}

inline BuiltPrompt build_differential_prompt(const Problem& problem, const SubmissionPair& pair) {
  if (pair.problem_id != problem.id || pair.wrong.problem_id != problem.id || pair.corrected.problem_id != problem.id)
    throw DomainError("submission pair does not belong to problem " + problem.id);
  auto values = detail::problem_fields(problem);
  values["verdict"] = pair.wrong.recorded_verdict ? std::string(to_string(*pair.wrong.recorded_verdict)) : "unknown";
  values["wrong_language"] = pair.wrong.language;
  values["wrong_source"] = pair.wrong.source;
  values["corrected_language"] = pair.corrected.language;
  values["corrected_source"] = pair.corrected.source;
  values["format"] = std::string(kScriptFormat);
  for (auto* key : {"wrong_source", "corrected_source"})
    if (!values[key].empty() && values[key].back() == '\n') values[key].pop_back();
  return {render(kDifferentialTemplate.text, values), std::string(kDifferentialTemplate.version), {}};
}

inline BuiltPrompt build_direct_prompt(const Problem& problem, std::size_t n) {
  auto values = detail::problem_fields(problem);
  values["n"] = std::to_string(n);
  return {render(kDirectTemplate.text, values), std::string(kDirectTemplate.version), {}};
}

inline BuiltPrompt build_sampler_prompt(const Problem& problem) {
  return {render(kSamplerTemplate.text, detail::problem_fields(problem)), std::string(kSamplerTemplate.version), {}};
}

/// Minimal "human priors" variant: boundary values read off reference solutions.
inline BuiltPrompt build_simple_priors_prompt(const Problem& problem, const std::vector<Solution>& reference,
                                              std::size_t n) {
  auto values = detail::problem_fields(problem);
  values["solutions"] = reference.empty() ? "(none)" : detail::solution_listing(reference);
  values["n"] = std::to_string(n);
  values["format"] = std::string(kScriptFormat);
  return {render(kSimplePriorsTemplate.text, values), std::string(kSimplePriorsTemplate.version), {}};
}

}  // namespace vfkit::tcg

#endif  // VFKIT_TCG_PROMPTS_HPP
