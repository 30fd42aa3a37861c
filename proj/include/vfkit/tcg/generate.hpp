#ifndef VFKIT_TCG_GENERATE_HPP
#define VFKIT_TCG_GENERATE_HPP

#include <cctype>
#include <charconv>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vfkit/dataset.hpp"
#include "vfkit/error.hpp"
#include "vfkit/exec.hpp"
#include "vfkit/tcg/llm.hpp"
#include "vfkit/tcg/parse.hpp"
#include "vfkit/tcg/prompts.hpp"
#include "vfkit/util/format.hpp"
#include "vfkit/util/hash.hpp"
#include "vfkit/util/parallel.hpp"

namespace vfkit::tcg {

enum class Paradigm { direct, interpreter_random, saga_multidim, saga_differential, saga_full };

constexpr std::string_view to_string(Paradigm p) noexcept {
  switch (p) {
    case Paradigm::direct: return "direct";
    case Paradigm::interpreter_random: return "interpreter_random";
    case Paradigm::saga_multidim: return "saga_multidim";
    case Paradigm::saga_differential: return "saga_differential";
    case Paradigm::saga_full: return "saga_full";
  }
  return "?";
}

/// One generation step and its input accounting.
/// produced: inputs emitted by scripts or the model; validated: inputs accepted by
/// self-validation; labeled: unique inputs the ground truth answered.
struct GenerationRecord {
  std::string id;
  std::string problem_id;
  Paradigm paradigm = Paradigm::saga_full;
  std::string template_version;
  std::vector<std::string> prompt_hashes;
  std::vector<std::string> prompts;
  std::vector<std::string> responses;
  std::vector<CaseScript> scripts;
  std::vector<std::string> notes;
  std::size_t produced = 0;
  std::size_t validated = 0;
  std::size_t labeled = 0;
  std::size_t invalid = 0;
  std::size_t validator_crashes = 0;
  std::size_t script_failures = 0;
  std::size_t duplicates = 0;
  std::size_t ground_truth_failures = 0;

  [[nodiscard]] double retention_rate() const noexcept {
    return produced == 0 ? 0.0 : static_cast<double>(labeled) / static_cast<double>(produced);
  }
  [[nodiscard]] bool chain_holds() const noexcept { return labeled <= validated && validated <= produced; }
};

inline nlohmann::json to_json(const GenerationRecord& r) {
  nlohmann::json scripts = nlohmann::json::array();
  for (const auto& s : r.scripts)
    scripts.push_back({{"language", s.language},
                       {"script", s.script_source},
                       {"explanation", s.math_explanation},
                       {"self_validation", s.self_validation_source ? nlohmann::json(*s.self_validation_source)
                                                                    : nlohmann::json(nullptr)}});
  return {{"id", r.id},
          {"problem_id", r.problem_id},
          {"paradigm", to_string(r.paradigm)},
          {"template_version", r.template_version},
          {"prompt_hashes", r.prompt_hashes},
          {"prompts", r.prompts},
          {"responses", r.responses},
          {"scripts", scripts},
          {"notes", r.notes},
          {"produced", r.produced},
          {"validated", r.validated},
          {"labeled", r.labeled},
          {"invalid", r.invalid},
          {"validator_crashes", r.validator_crashes},
          {"script_failures", r.script_failures},
          {"duplicates", r.duplicates},
          {"ground_truth_failures", r.ground_truth_failures},
          {"retention_rate", r.retention_rate()}};
}

struct LlmSettings {
  std::string model_tag = "deepseek-v3";
  double temperature = 0.0;
  int max_tokens = 4096;

  [[nodiscard]] LlmRequest request(std::string prompt) const {
    return {model_tag, std::move(prompt), temperature, max_tokens};
  }
};

inline constexpr std::string_view kCaseDelimiter = "###CASE###";
inline constexpr std::size_t kDefaultMaxInputsPerScript = 100;

/// Splits script stdout on `###CASE###` lines. Blank blocks are skipped; every
/// kept block ends with a newline.
inline std::vector<std::string> split_cases(std::string_view out, std::size_t cap) {
  std::vector<std::string> cases;
  std::string cur;
  const auto flush = [&] {
    if (cur.find_first_not_of(" \t\r\n") != std::string::npos && cases.size() < cap) cases.push_back(cur);
    cur.clear();
  };
  std::size_t pos = 0;
  while (pos < out.size()) {
    auto eol = out.find('\n', pos);
    const bool last = eol == std::string_view::npos;
    std::string_view line = out.substr(pos, last ? out.size() - pos : eol - pos);
    std::string_view bare = line;
    while (!bare.empty() && (bare.back() == '\r' || bare.back() == ' ')) bare.remove_suffix(1);
    if (bare == kCaseDelimiter) {
      flush();
    } else {
      cur.append(line);
      cur.push_back('\n');
    }
    if (last) break;
    pos = eol + 1;
  }
  flush();
  return cases;
}

struct ScriptRun {
  std::vector<std::string> inputs;
  Verdict verdict = Verdict::AC;
  std::string note;
};

/// Runs a case script as `<run> COUNT SEED` and splits its output into inputs.
inline ScriptRun run_case_script(const CaseScript& script, Executor& exec, std::size_t count, std::uint64_t seed,
                                 const Limits& limits = Limits::for_scripts(),
                                 std::size_t max_inputs = kDefaultMaxInputsPerScript) {
  ScriptRun run;
  const auto compiled = exec.compile(script.language, script.script_source);
  if (!compiled.ok()) {
    run.verdict = Verdict::CE;
    run.note = "case script failed to compile: " + compiled.diagnostics.substr(0, 300);
    return run;
  }
  const std::string args[] = {std::to_string(count), std::to_string(seed)};
  const auto r = exec.run_one(*compiled.program, "", limits, args);
  run.verdict = r.verdict;
  if (r.verdict != Verdict::AC) {
    run.note = "case script " + std::string(to_string(r.verdict)) + ": " + r.stderr_excerpt.substr(0, 300);
    return run;
  }
  run.inputs = split_cases(r.stdout_data, max_inputs);
  return run;
}

struct ValidationOutcome {
  std::vector<std::string> kept;
  std::size_t invalid = 0;
  std::size_t crashed = 0;
};

/// An uncaught Python exception also exits with status 1; its traceback tells it apart.
inline bool is_python_traceback(const RunResult& r) {
  return r.stderr_excerpt.find("Traceback (most recent call last):") != std::string::npos;
}

/// Keeps the inputs the script's validator accepts (exit 0). Exit 1 means invalid;
/// any other exit, a signal or a timeout counts as a validator crash. Without a
/// validator every input is kept.
inline ValidationOutcome self_validate(const CaseScript& script, const std::vector<std::string>& inputs,
                                       Executor& exec, const Limits& limits = Limits::for_scripts()) {
  ValidationOutcome out;
  if (!script.self_validation_source) {
    out.kept = inputs;
    return out;
  }
  const auto compiled = exec.compile(script.language, *script.self_validation_source);
  if (!compiled.ok()) {
    out.crashed = inputs.size();
    return out;
  }
  enum class Status { valid, invalid, crashed };
  std::vector<Status> status(inputs.size(), Status::crashed);
  util::parallel_for(inputs.size(), exec.parallelism(), [&](std::size_t i) {
    const auto r = exec.run_one(*compiled.program, inputs[i], limits);
    if (r.verdict == Verdict::AC) status[i] = Status::valid;
    else if (r.verdict == Verdict::RE && r.term_signal == 0 && r.exit_code == 1 && !is_python_traceback(r))
      status[i] = Status::invalid;
  });
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (status[i] == Status::valid) out.kept.push_back(inputs[i]);
    else if (status[i] == Status::invalid) ++out.invalid;
    else ++out.crashed;
  }
  return out;
}

struct LabelOutcome {
  TestSuite suite;
  std::size_t dropped_tle = 0;
  std::size_t dropped_re = 0;
  [[nodiscard]] std::size_t dropped() const noexcept { return dropped_tle + dropped_re; }
};

/// Runs the ground truth on every input; inputs it fails on are dropped and counted.
inline LabelOutcome label_outputs(const Problem& problem, const Solution& ground_truth,
                                  const std::vector<std::string>& inputs, Executor& exec,
                                  Provenance provenance = Provenance::manual,
                                  const std::optional<std::string>& record_id = std::nullopt) {
  const auto compiled = exec.compile(ground_truth);
  if (!compiled.ok())
    throw GroundTruthError("ground truth " + ground_truth.id + " of problem " + problem.id +
                           " does not compile: " + compiled.diagnostics.substr(0, 500));
  std::vector<RunResult> results(inputs.size());
  util::parallel_for(inputs.size(), exec.parallelism(), [&](std::size_t i) {
    results[i] = exec.run_one(*compiled.program, inputs[i], Limits::for_problem(problem));
  });
  LabelOutcome out;
  out.suite.problem_id = problem.id;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (results[i].verdict == Verdict::TLE) {
      ++out.dropped_tle;
      continue;
    }
    if (results[i].verdict != Verdict::AC) {
      ++out.dropped_re;
      continue;
    }
    out.suite.cases.push_back({out.suite.cases.size(), inputs[i], std::move(results[i].stdout_data), provenance,
                               record_id});
  }
  return out;
}

inline const Solution& require_ground_truth(const Corpus& corpus, const Problem& problem) {
  const Solution* gt = corpus.ground_truth(problem);
  if (gt == nullptr) throw GroundTruthError("problem " + problem.id + " has no ground truth");
  return *gt;
}

inline std::string record_id(std::string_view problem_id, Paradigm paradigm, std::string_view salt) {
  std::string material(problem_id);
  material += '\0';
  material += to_string(paradigm);
  material += '\0';
  material.append(salt);
  return std::string(to_string(paradigm)) + "-" + util::sha256_hex(material).substr(0, 16);
}

struct GenerationResult {
  TestSuite suite;
  GenerationRecord record;
};

// ---------------------------------------------------------------------------
// Direct generation

/// Asks the model for complete (input, output) cases and keeps those whose output
/// the ground truth reproduces under the problem's checker.
inline GenerationResult gen_direct(const Problem& problem, const Solution& ground_truth, LlmClient& llm,
                                   std::size_t n_target, Executor& exec, const LlmSettings& settings = {}) {
  GenerationResult res;
  auto& rec = res.record;
  const auto prompt = build_direct_prompt(problem, n_target);
  const auto request = settings.request(prompt.text);
  rec.id = record_id(problem.id, Paradigm::direct, prompt.text);
  rec.problem_id = problem.id;
  rec.paradigm = Paradigm::direct;
  rec.template_version = prompt.template_version;
  rec.prompts.push_back(prompt.text);
  rec.prompt_hashes.push_back(request_hash(request));
  const auto response = llm_call(request, llm);
  rec.responses.push_back(response.text);

  auto parsed = parse_direct_cases(response.text);
  rec.notes = parsed.diagnostics;
  if (parsed.cases.size() > n_target) parsed.cases.resize(n_target);
  rec.produced = parsed.cases.size();

  const auto compiled = exec.compile(ground_truth);
  if (!compiled.ok())
    throw GroundTruthError("ground truth " + ground_truth.id + " of problem " + problem.id +
                           " does not compile: " + compiled.diagnostics.substr(0, 500));
  std::vector<RunResult> runs(parsed.cases.size());
  std::vector<char> agrees(parsed.cases.size(), 0);
  util::parallel_for(parsed.cases.size(), exec.parallelism(), [&](std::size_t i) {
    runs[i] = exec.run_one(*compiled.program, parsed.cases[i].first, Limits::for_problem(problem));
    if (runs[i].verdict == Verdict::AC)
      agrees[i] = exec.check_output(parsed.cases[i].second, runs[i].stdout_data, parsed.cases[i].first,
                                    problem.checker) ? 1 : 0;
  });
  res.suite.problem_id = problem.id;
  for (std::size_t i = 0; i < parsed.cases.size(); ++i) {
    if (runs[i].verdict != Verdict::AC) {
      ++rec.ground_truth_failures;
      continue;
    }
    ++rec.validated;
    if (agrees[i])
      res.suite.cases.push_back({0, parsed.cases[i].first, std::move(runs[i].stdout_data), Provenance::direct, rec.id});
  }
  rec.labeled = res.suite.size();
  res.suite.renumber();
  return res;
}

// ---------------------------------------------------------------------------
// Input-interpreter (random sampling)

/// Constraint-driven random input template. Whitespace-separated tokens per line:
///   int:LO:HI          uniform integer in [LO, HI]
///   NAME=int:LO:HI     same, and binds NAME for later counts
///   ints:COUNT:LO:HI   COUNT space-separated integers (COUNT literal or a bound NAME)
///   choice:A|B|C       one of the listed words
/// Anything else is copied verbatim. Lines are kept as written.
class BuiltinSampler {
 public:
  static BuiltinSampler parse(std::string_view spec) {
    BuiltinSampler s;
    for (const auto& raw_line : util::split(spec, '\n')) {
      std::vector<Token> line;
      for (const auto& word : util::split(util::trim(raw_line), ' ')) {
        if (word.empty()) continue;
        line.push_back(parse_token(word));
      }
      s.lines_.push_back(std::move(line));
    }
    while (!s.lines_.empty() && s.lines_.back().empty()) s.lines_.pop_back();
    if (s.lines_.empty()) throw DomainError("empty sampler spec");
    return s;
  }

  template <class Rng>
  [[nodiscard]] std::string sample(Rng& rng) const {
    std::map<std::string, std::int64_t> bound;
    std::string out;
    for (const auto& line : lines_) {
      bool first = true;
      const auto emit = [&](const std::string& w) {
        if (!first) out.push_back(' ');
        out += w;
        first = false;
      };
      for (const auto& t : line) {
        switch (t.kind) {
          case Token::literal: emit(t.text); break;
          case Token::integer: {
            const auto v = uniform(rng, t.lo, t.hi);
            if (!t.name.empty()) bound[t.name] = v;
            emit(std::to_string(v));
            break;
          }
          case Token::integers: {
            std::int64_t count = 0;
            if (!t.count_name.empty()) {
              const auto it = bound.find(t.count_name);
              if (it == bound.end()) throw DomainError("sampler count refers to unbound name " + t.count_name);
              count = it->second;
            } else {
              count = t.count;
            }
            for (std::int64_t i = 0; i < count; ++i) emit(std::to_string(uniform(rng, t.lo, t.hi)));
            break;
          }
          case Token::choice: emit(t.options[static_cast<std::size_t>(uniform(rng, 0, static_cast<std::int64_t>(t.options.size()) - 1))]); break;
        }
      }
      out.push_back('\n');
    }
    return out;
  }

  /// Portable uniform integer in [lo, hi] by rejection on 64-bit draws.
  template <class Rng>
  static std::int64_t uniform(Rng& rng, std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo);
    if (span == std::numeric_limits<std::uint64_t>::max()) return static_cast<std::int64_t>(rng());
    const std::uint64_t range = span + 1;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % range;
    std::uint64_t x;
    do x = rng();
    while (x >= limit);
    return static_cast<std::int64_t>(static_cast<std::uint64_t>(lo) + x % range);
  }

 private:
  struct Token {
    enum Kind { literal, integer, integers, choice } kind = literal;
    std::string text;
    std::string name;
    std::int64_t lo = 0, hi = 0, count = 0;
    std::string count_name;
    std::vector<std::string> options;
  };

  static std::int64_t to_int(const std::string& s, std::string_view word) {
    std::int64_t v = 0;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
      throw DomainError("bad integer '" + s + "' in sampler token " + std::string(word));
    return v;
  }

  static Token parse_token(const std::string& word) {
    Token t;
    std::string body = word;
    if (const auto eq = word.find('='); eq != std::string::npos && word.find(':') != std::string::npos && eq < word.find(':')) {
      t.name = word.substr(0, eq);
      body = word.substr(eq + 1);
    }
    const auto parts = util::split(body, ':');
    if (parts[0] == "int" && parts.size() == 3) {
      t.kind = Token::integer;
      t.lo = to_int(parts[1], word);
      t.hi = to_int(parts[2], word);
    } else if (parts[0] == "ints" && parts.size() == 4 && t.name.empty()) {
      t.kind = Token::integers;
      if (!parts[1].empty() && (std::isdigit(static_cast<unsigned char>(parts[1][0])) != 0)) t.count = to_int(parts[1], word);
      else t.count_name = parts[1];
      t.lo = to_int(parts[2], word);
      t.hi = to_int(parts[3], word);
    } else if (parts[0] == "choice" && parts.size() == 2 && t.name.empty()) {
      t.kind = Token::choice;
      t.options = util::split(parts[1], '|');
    } else if (parts[0] == "int" || parts[0] == "ints" || parts[0] == "choice") {
      throw DomainError("malformed sampler token " + word);
    } else {
      t.text = word;
      return t;
    }
    if ((t.kind == Token::integer || t.kind == Token::integers) && t.lo > t.hi)
      throw DomainError("empty range in sampler token " + word);
    return t;
  }

  std::vector<std::vector<Token>> lines_;
};

using InputGenerator = std::variant<BuiltinSampler, CaseScript>;

/// Asks the model for a random-sampler script (lenient parse; the first script wins).
inline std::pair<std::optional<CaseScript>, GenerationRecord> gen_sampler_script(const Problem& problem, LlmClient& llm,
                                                                                 const LlmSettings& settings = {}) {
  GenerationRecord rec;
  const auto prompt = build_sampler_prompt(problem);
  const auto request = settings.request(prompt.text);
  rec.id = record_id(problem.id, Paradigm::interpreter_random, prompt.text);
  rec.problem_id = problem.id;
  rec.paradigm = Paradigm::interpreter_random;
  rec.template_version = prompt.template_version;
  rec.prompts.push_back(prompt.text);
  rec.prompt_hashes.push_back(request_hash(request));
  const auto response = llm_call(request, llm);
  rec.responses.push_back(response.text);
  auto parsed = parse_llm_response(response.text, ParseMode::lenient);
  rec.notes = parsed.diagnostics;
  if (parsed.scripts.empty()) return {std::nullopt, rec};
  auto script = parsed.scripts.front();
  rec.scripts.push_back(script);
  return {script, rec};
}

/// Samples `n_target` inputs (with replacement), self-validates when the generator
/// carries a validator, and labels them with the ground truth.
inline GenerationResult gen_random_inputs(const Problem& problem, const Solution& ground_truth,
                                          const InputGenerator& generator, std::size_t n_target, std::uint64_t seed,
                                          Executor& exec, GenerationRecord record = {}) {
  GenerationResult res;
  auto& rec = res.record;
  rec = std::move(record);
  rec.problem_id = problem.id;
  rec.paradigm = Paradigm::interpreter_random;
  if (rec.id.empty()) rec.id = record_id(problem.id, Paradigm::interpreter_random, std::to_string(seed));
  res.suite.problem_id = problem.id;
  res.suite.created_with_seed = static_cast<std::int64_t>(seed);
  if (n_target == 0) return res;

  std::vector<std::string> inputs;
  std::optional<CaseScript> validator;
  if (const auto* sampler = std::get_if<BuiltinSampler>(&generator)) {
    std::mt19937_64 rng(util::derive_seed(seed, "sampler:" + problem.id, 0));
    for (std::size_t i = 0; i < n_target; ++i) inputs.push_back(sampler->sample(rng));
  } else {
    const auto& script = std::get<CaseScript>(generator);
    auto run = run_case_script(script, exec, n_target, seed, Limits::for_scripts(), n_target);
    if (!run.note.empty()) {
      rec.notes.push_back(run.note);
      ++rec.script_failures;
    }
    inputs = std::move(run.inputs);
    validator = script;
  }
  rec.produced = inputs.size();
  if (validator) {
    auto v = self_validate(*validator, inputs, exec);
    rec.invalid = v.invalid;
    rec.validator_crashes = v.crashed;
    inputs = std::move(v.kept);
  }
  rec.validated = inputs.size();
  auto labeled = label_outputs(problem, ground_truth, inputs, exec, Provenance::random_interpreter, rec.id);
  rec.ground_truth_failures = labeled.dropped();
  rec.labeled = labeled.suite.size();
  labeled.suite.created_with_seed = res.suite.created_with_seed;
  res.suite = std::move(labeled.suite);
  return res;
}

// ---------------------------------------------------------------------------
// SAGA

inline constexpr std::size_t kDefaultPairCap = 5;
inline constexpr std::size_t kDefaultTargetSize = 50;

struct SagaConfig {
  LlmSettings llm;
  bool multidim = true;
  bool differential = true;
  std::size_t max_correct = kDefaultMultidimCap;
  std::size_t max_pairs = kDefaultPairCap;
  std::size_t target_size = kDefaultTargetSize;
  std::size_t cases_per_script = 10;
  std::size_t max_inputs_per_script = kDefaultMaxInputsPerScript;
  ParseMode parse_mode = ParseMode::strict;
  std::uint64_t seed = 0;
  std::size_t llm_concurrency = 4;
  /// When set and the suite ends up smaller, `top_up` is asked for the missing inputs.
  std::optional<std::size_t> curation_threshold;
  std::function<std::vector<std::string>(const Problem&, std::size_t missing)> top_up;
  Limits script_limits = Limits::for_scripts();
};

struct SagaResult {
  TestSuite suite;
  std::vector<GenerationRecord> records;  ///< one per prompt
  GenerationRecord summary;
};

namespace detail {

struct SagaStep {
  GenerationRecord record;
  BuiltPrompt prompt;
  Provenance provenance;
  std::vector<std::string> inputs;  // validated, deduplicated
  std::vector<TestCase> cases;      // labeled
};

}  // namespace detail

/// Multidimensional analysis over up to `max_correct` correct solutions plus
/// differential analysis over the `max_pairs` most recent submission pairs. Inputs
/// are self-validated, deduplicated byte-exactly across all scripts, labeled by the
/// ground truth and selected round-robin across prompts up to `target_size`.
inline SagaResult saga_generate(const Problem& problem, const Corpus& corpus, LlmClient& llm, Executor& exec,
                                const SagaConfig& config = {}) {
  const Solution& gt = require_ground_truth(corpus, problem);
  SagaResult res;
  std::vector<detail::SagaStep> steps;
  std::vector<std::string> notes;

  if (config.multidim) {
    const auto correct = corpus.solutions_of(problem.id, SolutionKind::correct_human);
    if (correct.empty()) {
      notes.emplace_back("multidimensional analysis skipped: no correct solutions");
    } else {
      detail::SagaStep s;
      s.prompt = build_multidim_prompt(problem, correct, config.max_correct);
      s.provenance = Provenance::saga_multidim;
      s.record.paradigm = Paradigm::saga_multidim;
      steps.push_back(std::move(s));
    }
  }
  if (config.differential) {
    auto pairs = corpus.pairs_of(problem.id);
    if (pairs.empty()) notes.emplace_back("differential analysis skipped: no submission pairs");
    if (pairs.size() > config.max_pairs) pairs.resize(config.max_pairs);
    for (const auto& pair : pairs) {
      detail::SagaStep s;
      s.prompt = build_differential_prompt(problem, pair);
      s.provenance = Provenance::saga_differential;
      s.record.paradigm = Paradigm::saga_differential;
      s.record.notes.push_back("pair " + pair.wrong.id + " -> " + pair.corrected.id);
      steps.push_back(std::move(s));
    }
  }

  for (auto& s : steps) {
    auto& r = s.record;
    r.id = record_id(problem.id, r.paradigm, s.prompt.text);
    r.problem_id = problem.id;
    r.template_version = s.prompt.template_version;
    r.prompts.push_back(s.prompt.text);
    r.notes.insert(r.notes.end(), s.prompt.notes.begin(), s.prompt.notes.end());
  }

  std::vector<LlmResponse> responses(steps.size());
  util::parallel_for(steps.size(), config.llm_concurrency, [&](std::size_t i) {
    const auto request = config.llm.request(steps[i].prompt.text);
    steps[i].record.prompt_hashes.push_back(request_hash(request));
    responses[i] = llm_call(request, llm);
  });

  std::set<std::string> seen;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    auto& s = steps[i];
    auto& r = s.record;
    r.responses.push_back(responses[i].text);
    auto parsed = parse_llm_response(responses[i].text, config.parse_mode);
    r.notes.insert(r.notes.end(), parsed.diagnostics.begin(), parsed.diagnostics.end());
    r.scripts = parsed.scripts;
    for (std::size_t k = 0; k < parsed.scripts.size(); ++k) {
      const auto& script = parsed.scripts[k];
      const std::size_t count = script.target_count ? script.target_count : config.cases_per_script;
      auto run = run_case_script(script, exec, count, util::derive_seed(config.seed, r.id, k),
                                 config.script_limits, config.max_inputs_per_script);
      if (!run.note.empty()) {
        ++r.script_failures;
        r.notes.push_back("strategy " + std::to_string(k + 1) + ": " + run.note);
      }
      r.produced += run.inputs.size();
      auto v = self_validate(script, run.inputs, exec, config.script_limits);
      r.invalid += v.invalid;
      r.validator_crashes += v.crashed;
      r.validated += v.kept.size();
      for (auto& in : v.kept) {
        if (seen.insert(in).second) s.inputs.push_back(std::move(in));
        else ++r.duplicates;
      }
    }
    auto labeled = label_outputs(problem, gt, s.inputs, exec, s.provenance, r.id);
    r.ground_truth_failures = labeled.dropped();
    r.labeled = labeled.suite.size();
    s.cases = std::move(labeled.suite.cases);
  }

  // Round-robin selection keeps every prompt represented when truncating.
  res.suite.problem_id = problem.id;
  res.suite.created_with_seed = static_cast<std::int64_t>(config.seed);
  for (std::size_t round = 0; res.suite.size() < config.target_size; ++round) {
    bool any = false;
    for (auto& s : steps) {
      if (round >= s.cases.size()) continue;
      any = true;
      if (res.suite.size() < config.target_size) res.suite.cases.push_back(s.cases[round]);
    }
    if (!any) break;
  }

  GenerationRecord& sum = res.summary;
  sum.problem_id = problem.id;
  sum.paradigm = config.multidim && config.differential
                     ? Paradigm::saga_full
                     : (config.multidim ? Paradigm::saga_multidim : Paradigm::saga_differential);
  std::string salt;
  for (const auto& s : steps) {
    salt += s.record.id + ";";
    sum.produced += s.record.produced;
    sum.validated += s.record.validated;
    sum.labeled += s.record.labeled;
    sum.invalid += s.record.invalid;
    sum.validator_crashes += s.record.validator_crashes;
    sum.script_failures += s.record.script_failures;
    sum.duplicates += s.record.duplicates;
    sum.ground_truth_failures += s.record.ground_truth_failures;
  }
  sum.id = record_id(problem.id, sum.paradigm, salt + std::to_string(config.seed));
  sum.notes = notes;

  if (config.curation_threshold && res.suite.size() < *config.curation_threshold && config.top_up) {
    const std::size_t want = config.target_size > res.suite.size() ? config.target_size - res.suite.size() : 0;
    std::vector<std::string> extra;
    for (auto& in : config.top_up(problem, want))
      if (seen.insert(in).second && extra.size() < want) extra.push_back(std::move(in));
    auto labeled = label_outputs(problem, gt, extra, exec, Provenance::manual, sum.id);
    for (auto& c : labeled.suite.cases) res.suite.cases.push_back(std::move(c));
    sum.notes.push_back("manual top-up added " + std::to_string(labeled.suite.size()) + " cases");
  }
  if (res.suite.cases.empty()) sum.notes.emplace_back("no cases generated");
  sum.notes.push_back("suite size " + std::to_string(res.suite.size()) + " of target " +
                      std::to_string(config.target_size));
  res.suite.renumber();
  for (auto& s : steps) res.records.push_back(std::move(s.record));
  return res;
}

}  // namespace vfkit::tcg

#endif  // VFKIT_TCG_GENERATE_HPP
