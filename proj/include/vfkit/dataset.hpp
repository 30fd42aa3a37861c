#ifndef VFKIT_DATASET_HPP
#define VFKIT_DATASET_HPP

/**
 * \file
 * \brief Corpus, solution and test-suite records and their line-delimited JSON storage.
 *
 * A corpus directory holds up to three files, each with one JSON object per line:
 * `problems.jsonl`, `solutions.jsonl` and `pairs.jsonl`. Missing files are read as
 * empty. Field names are documented in docs/format.md.
 */

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vfkit/error.hpp"
#include "vfkit/util/fs.hpp"
#include "vfkit/util/hash.hpp"
#include "vfkit/verdict.hpp"

namespace vfkit {

using json = nlohmann::json;
namespace fs = std::filesystem;

enum class Platform { atcoder, codeforces, nowcoder, local };
enum class Difficulty { easy, medium, hard };
enum class SolutionKind { ground_truth, correct_human, wrong_human, model_candidate };
enum class Provenance { direct, random_interpreter, saga_multidim, saga_differential, manual };

NLOHMANN_JSON_SERIALIZE_ENUM(Platform, {{Platform::atcoder, "atcoder"},
                                        {Platform::codeforces, "codeforces"},
                                        {Platform::nowcoder, "nowcoder"},
                                        {Platform::local, "local"}})
NLOHMANN_JSON_SERIALIZE_ENUM(Difficulty, {{Difficulty::easy, "easy"},
                                          {Difficulty::medium, "medium"},
                                          {Difficulty::hard, "hard"}})
NLOHMANN_JSON_SERIALIZE_ENUM(SolutionKind, {{SolutionKind::ground_truth, "ground_truth"},
                                            {SolutionKind::correct_human, "correct_human"},
                                            {SolutionKind::wrong_human, "wrong_human"},
                                            {SolutionKind::model_candidate, "model_candidate"}})

constexpr std::string_view to_string(Provenance p) noexcept {
  switch (p) {
    case Provenance::direct: return "direct";
    case Provenance::random_interpreter: return "random_interpreter";
    case Provenance::saga_multidim: return "saga_multidim";
    case Provenance::saga_differential: return "saga_differential";
    case Provenance::manual: return "manual";
  }
  return "?";
}

inline std::optional<Provenance> parse_provenance(std::string_view s) noexcept {
  for (auto p : {Provenance::direct, Provenance::random_interpreter, Provenance::saga_multidim,
                 Provenance::saga_differential, Provenance::manual}) {
    if (to_string(p) == s) return p;
  }
  return std::nullopt;
}

/// Output comparison rule for a problem.
struct Checker {
  enum class Kind { token, floating, custom };
  Kind kind = Kind::token;
  double epsilon = 1e-6;  ///< floating only
  std::string language;   ///< custom only
  std::string source;     ///< custom only

  static Checker token() { return {}; }
  static Checker floating(double eps) { return {Kind::floating, eps, {}, {}}; }
  static Checker custom(std::string language, std::string source) {
    return {Kind::custom, 0.0, std::move(language), std::move(source)};
  }
  bool operator==(const Checker&) const = default;
};

struct Problem {
  std::string id;
  Platform platform = Platform::local;
  std::string statement;
  std::string constraints_text;
  Difficulty difficulty = Difficulty::medium;
  std::optional<std::string> ground_truth;  ///< solution id
  int time_limit_ms = 2000;
  int memory_limit_mb = 256;
  Checker checker;
  /// Optional built-in random sampler spec (see tcg::BuiltinSampler).
  std::optional<std::string> sampler;
  bool operator==(const Problem&) const = default;
};

struct Solution {
  std::string id;
  std::string problem_id;
  SolutionKind kind = SolutionKind::correct_human;
  std::string language;  ///< "cpp", "python" or any other toolchain tag
  std::string source;
  std::optional<Verdict> recorded_verdict;
  bool operator==(const Solution&) const = default;
};

/// A wrong submission and the same author's later accepted fix.
struct SubmissionPair {
  std::string problem_id;
  Solution wrong;
  Solution corrected;
  bool same_author = true;
  std::int64_t submitted_at = 0;  ///< time of the wrong submission; larger is more recent
  bool operator==(const SubmissionPair&) const = default;
};

struct TestCase {
  std::size_t index = 0;
  std::string input;
  std::string output;
  Provenance provenance = Provenance::manual;
  std::optional<std::string> generator_record_id;
  bool operator==(const TestCase&) const = default;
};

struct TestSuite {
  std::string problem_id;
  std::vector<TestCase> cases;
  std::optional<std::int64_t> created_with_seed;

  [[nodiscard]] std::size_t size() const noexcept { return cases.size(); }
  /// Rewrites case indices to 0..n-1 in current order.
  void renumber() {
    for (std::size_t i = 0; i < cases.size(); ++i) cases[i].index = i;
  }
  bool operator==(const TestSuite&) const = default;
};

class Corpus {
 public:
  std::vector<Problem> problems;
  std::vector<Solution> solutions;
  std::vector<SubmissionPair> pairs;
  /// wrong_human records dropped at load time because their platform verdict was CE.
  std::size_t skipped_compile_errors = 0;

  [[nodiscard]] bool empty() const noexcept { return problems.empty(); }

  [[nodiscard]] const Problem* find_problem(std::string_view id) const {
    for (const auto& p : problems)
      if (p.id == id) return &p;
    return nullptr;
  }
  [[nodiscard]] const Problem& problem(std::string_view id) const {
    if (const auto* p = find_problem(id)) return *p;
    throw ReferenceError("unknown problem id: " + std::string(id));
  }
  [[nodiscard]] const Solution* find_solution(std::string_view id) const {
    for (const auto& s : solutions)
      if (s.id == id) return &s;
    return nullptr;
  }
  [[nodiscard]] const Solution* ground_truth(const Problem& p) const {
    return p.ground_truth ? find_solution(*p.ground_truth) : nullptr;
  }
  /// Solutions of one kind for a problem, in corpus order.
  [[nodiscard]] std::vector<Solution> solutions_of(std::string_view problem_id, SolutionKind kind) const {
    std::vector<Solution> out;
    for (const auto& s : solutions)
      if (s.problem_id == problem_id && s.kind == kind) out.push_back(s);
    return out;
  }
  /// Pairs for a problem, most recent first; ties keep corpus order.
  [[nodiscard]] std::vector<SubmissionPair> pairs_of(std::string_view problem_id) const {
    std::vector<SubmissionPair> out;
    for (const auto& p : pairs)
      if (p.problem_id == problem_id) out.push_back(p);
    std::stable_sort(out.begin(), out.end(),
                     [](const auto& a, const auto& b) { return a.submitted_at > b.submitted_at; });
    return out;
  }
  bool operator==(const Corpus&) const = default;
};

namespace detail {

inline std::string read_source_field(const json& j, const fs::path& dir, const std::string& file,
                                     std::size_t line, const char* inline_key, const char* file_key) {
  if (j.contains(inline_key)) return j.at(inline_key).get<std::string>();
  if (j.contains(file_key)) {
    const fs::path p = dir / j.at(file_key).get<std::string>();
    if (!fs::exists(p)) throw ParseError(file, line, "source file not found: " + p.string());
    return util::read_file(p);
  }
  throw ParseError(file, line, std::string("missing '") + inline_key + "' or '" + file_key + "'");
}

template <class Fn>
void for_each_record(const fs::path& path, Fn&& fn) {
  if (!fs::exists(path)) return;
  std::istringstream in(util::read_file(path));
  std::string text;
  std::size_t line_no = 0;
  const std::string name = path.filename().string();
  while (std::getline(in, text)) {
    ++line_no;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text);
    } catch (const json::exception& e) {
      throw ParseError(name, line_no, e.what());
    }
    if (!j.is_object()) throw ParseError(name, line_no, "record is not an object");
    try {
      fn(j, name, line_no);
    } catch (const json::exception& e) {
      throw ParseError(name, line_no, e.what());
    }
  }
}

inline Checker parse_checker(const json& j, const fs::path& dir, const std::string& file, std::size_t line) {
  if (j.is_string()) {
    if (j == "token") return Checker::token();
    throw ParseError(file, line, "unknown checker " + j.get<std::string>());
  }
  const auto type = j.at("type").get<std::string>();
  if (type == "token") return Checker::token();
  if (type == "float") {
    const double eps = j.value("epsilon", 1e-6);
    if (!(eps >= 0)) throw ParseError(file, line, "float checker epsilon must be >= 0");
    return Checker::floating(eps);
  }
  if (type == "custom") {
    return Checker::custom(j.at("language").get<std::string>(),
                           read_source_field(j, dir, file, line, "source", "source_file"));
  }
  throw ParseError(file, line, "unknown checker type " + type);
}

inline json checker_to_json(const Checker& c) {
  switch (c.kind) {
    case Checker::Kind::token: return {{"type", "token"}};
    case Checker::Kind::floating: return {{"type", "float"}, {"epsilon", c.epsilon}};
    case Checker::Kind::custom: return {{"type", "custom"}, {"language", c.language}, {"source", c.source}};
  }
  return {};
}

}  // namespace detail

/// Loads and cross-checks a corpus directory.
inline Corpus load_corpus(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw ConfigError("corpus directory does not exist: " + dir.string());
  Corpus corpus;
  std::set<std::string> problem_ids;
  std::set<std::string> solution_ids;

  detail::for_each_record(dir / "problems.jsonl", [&](const json& j, const std::string& f, std::size_t ln) {
    Problem p;
    p.id = j.at("id").get<std::string>();
    if (p.id.empty()) throw ParseError(f, ln, "empty problem id");
    if (!problem_ids.insert(p.id).second) throw DuplicateIdError("duplicate problem id: " + p.id);
    p.platform = j.value("platform", Platform::local);
    if (j.contains("platform") && j["platform"].is_string()) {
      const auto s = j["platform"].get<std::string>();
      if (s != "atcoder" && s != "codeforces" && s != "nowcoder" && s != "local")
        throw ParseError(f, ln, "unknown platform " + s);
    }
    p.statement = j.value("statement", std::string{});
    p.constraints_text = j.value("constraints", std::string{});
    if (j.contains("difficulty")) {
      const auto s = j["difficulty"].get<std::string>();
      if (s != "easy" && s != "medium" && s != "hard") throw ParseError(f, ln, "unknown difficulty " + s);
      p.difficulty = j["difficulty"].get<Difficulty>();
    }
    if (j.contains("ground_truth") && !j["ground_truth"].is_null())
      p.ground_truth = j["ground_truth"].get<std::string>();
    p.time_limit_ms = j.value("time_limit_ms", 2000);
    p.memory_limit_mb = j.value("memory_limit_mb", 256);
    if (p.time_limit_ms <= 0) throw ParseError(f, ln, "time_limit_ms must be positive");
    if (p.memory_limit_mb <= 0) throw ParseError(f, ln, "memory_limit_mb must be positive");
    if (j.contains("checker")) p.checker = detail::parse_checker(j["checker"], dir, f, ln);
    if (j.contains("sampler") && !j["sampler"].is_null()) p.sampler = j["sampler"].get<std::string>();
    corpus.problems.push_back(std::move(p));
  });

  std::set<std::string> dropped;
  detail::for_each_record(dir / "solutions.jsonl", [&](const json& j, const std::string& f, std::size_t ln) {
    Solution s;
    s.id = j.at("id").get<std::string>();
    if (s.id.empty()) throw ParseError(f, ln, "empty solution id");
    if (!solution_ids.insert(s.id).second) throw DuplicateIdError("duplicate solution id: " + s.id);
    s.problem_id = j.at("problem_id").get<std::string>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind != "ground_truth" && kind != "correct_human" && kind != "wrong_human" && kind != "model_candidate")
      throw ParseError(f, ln, "unknown solution kind " + kind);
    s.kind = j.at("kind").get<SolutionKind>();
    s.language = j.at("language").get<std::string>();
    s.source = detail::read_source_field(j, dir, f, ln, "source", "source_file");
    if (s.source.empty()) throw ParseError(f, ln, "empty source for solution " + s.id);
    if (j.contains("verdict") && !j["verdict"].is_null()) {
      const auto v = parse_verdict(j["verdict"].get<std::string>());
      if (!v || *v == Verdict::AC) throw ParseError(f, ln, "recorded verdict must be WA, TLE, RE or CE");
      s.recorded_verdict = v;
    }
    if (s.kind == SolutionKind::wrong_human) {
      if (!s.recorded_verdict) throw ParseError(f, ln, "wrong_human solution " + s.id + " lacks a verdict");
      if (*s.recorded_verdict == Verdict::CE) {
        ++corpus.skipped_compile_errors;
        dropped.insert(s.id);
        return;
      }
    }
    corpus.solutions.push_back(std::move(s));
  });

  detail::for_each_record(dir / "pairs.jsonl", [&](const json& j, const std::string& f, std::size_t ln) {
    const auto wrong_id = j.at("wrong").get<std::string>();
    const auto corrected_id = j.at("corrected").get<std::string>();
    if (dropped.contains(wrong_id)) return;
    const Solution* w = corpus.find_solution(wrong_id);
    const Solution* c = corpus.find_solution(corrected_id);
    std::vector<std::string> missing;
    if (!w) missing.push_back(wrong_id);
    if (!c) missing.push_back(corrected_id);
    if (!missing.empty()) {
      std::string msg = "pairs.jsonl:" + std::to_string(ln) + ": dangling solution reference:";
      for (const auto& id : missing) msg += " " + id;
      throw ReferenceError(msg);
    }
    SubmissionPair pair;
    pair.problem_id = j.value("problem_id", w->problem_id);
    pair.wrong = *w;
    pair.corrected = *c;
    pair.same_author = j.value("same_author", true);
    pair.submitted_at = j.value("submitted_at", std::int64_t{0});
    if (w->kind != SolutionKind::wrong_human || c->kind != SolutionKind::correct_human)
      throw ParseError(f, ln, "pair must join a wrong_human and a correct_human solution");
    if (w->problem_id != pair.problem_id || c->problem_id != pair.problem_id)
      throw ParseError(f, ln, "pair members belong to different problems");
    corpus.pairs.push_back(std::move(pair));
  });

  std::vector<std::string> dangling;
  for (const auto& s : corpus.solutions)
    if (!problem_ids.contains(s.problem_id)) dangling.push_back(s.problem_id);
  for (const auto& p : corpus.pairs)
    if (!problem_ids.contains(p.problem_id)) dangling.push_back(p.problem_id);
  for (const auto& p : corpus.problems) {
    if (!p.ground_truth) continue;
    const Solution* gt = corpus.find_solution(*p.ground_truth);
    if (!gt) {
      dangling.push_back(*p.ground_truth);
    } else if (gt->kind != SolutionKind::ground_truth || gt->problem_id != p.id) {
      throw ReferenceError("problem " + p.id + " ground_truth " + gt->id +
                           " is not a ground_truth solution of that problem");
    }
  }
  if (!dangling.empty()) {
    std::sort(dangling.begin(), dangling.end());
    dangling.erase(std::unique(dangling.begin(), dangling.end()), dangling.end());
    std::string msg = "dangling reference(s):";
    for (const auto& id : dangling) msg += " " + id;
    throw ReferenceError(msg);
  }
  return corpus;
}

/// Writes a corpus in the same layout `load_corpus` reads, with sources inlined.
inline void save_corpus(const Corpus& corpus, const fs::path& dir) {
  fs::create_directories(dir);
  std::string problems, solutions, pairs;
  for (const auto& p : corpus.problems) {
    json j = {{"id", p.id},
              {"platform", p.platform},
              {"statement", p.statement},
              {"constraints", p.constraints_text},
              {"difficulty", p.difficulty},
              {"time_limit_ms", p.time_limit_ms},
              {"memory_limit_mb", p.memory_limit_mb},
              {"checker", detail::checker_to_json(p.checker)}};
    if (p.ground_truth) j["ground_truth"] = *p.ground_truth;
    if (p.sampler) j["sampler"] = *p.sampler;
    problems += j.dump() + "\n";
  }
  for (const auto& s : corpus.solutions) {
    json j = {{"id", s.id}, {"problem_id", s.problem_id}, {"kind", s.kind},
              {"language", s.language}, {"source", s.source}};
    if (s.recorded_verdict) j["verdict"] = std::string(to_string(*s.recorded_verdict));
    solutions += j.dump() + "\n";
  }
  for (const auto& p : corpus.pairs) {
    json j = {{"problem_id", p.problem_id}, {"wrong", p.wrong.id}, {"corrected", p.corrected.id},
              {"same_author", p.same_author}, {"submitted_at", p.submitted_at}};
    pairs += j.dump() + "\n";
  }
  util::write_file(dir / "problems.jsonl", problems);
  util::write_file(dir / "solutions.jsonl", solutions);
  util::write_file(dir / "pairs.jsonl", pairs);
}

// ---------------------------------------------------------------------------
// Validation

/// Per-problem readiness summary.
struct ProblemValidation {
  std::string problem_id;
  bool has_ground_truth = false;
  std::size_t n_correct = 0;
  std::size_t n_wrong = 0;
  std::size_t n_pairs = 0;
  bool eligible_direct = false;
  bool eligible_interpreter = false;
  bool eligible_saga_multidim = false;
  bool eligible_saga_differential = false;
  bool eligible_metrics = false;
  std::vector<std::string> flags;

  [[nodiscard]] bool eligible_all() const noexcept {
    return eligible_direct && eligible_interpreter && eligible_saga_multidim && eligible_saga_differential &&
           eligible_metrics;
  }
};

struct ValidationReport {
  std::vector<ProblemValidation> problems;
  std::size_t skipped_compile_errors = 0;

  [[nodiscard]] const ProblemValidation* find(std::string_view id) const {
    for (const auto& p : problems)
      if (p.problem_id == id) return &p;
    return nullptr;
  }
};

inline constexpr std::size_t kMultidimSolutionCap = 10;

inline ValidationReport validate_corpus(const Corpus& corpus) {
  ValidationReport report;
  report.skipped_compile_errors = corpus.skipped_compile_errors;
  for (const auto& p : corpus.problems) {
    ProblemValidation v;
    v.problem_id = p.id;
    v.has_ground_truth = corpus.ground_truth(p) != nullptr;
    v.n_correct = corpus.solutions_of(p.id, SolutionKind::correct_human).size();
    v.n_wrong = corpus.solutions_of(p.id, SolutionKind::wrong_human).size();
    v.n_pairs = corpus.pairs_of(p.id).size();
    v.eligible_direct = v.has_ground_truth;
    v.eligible_interpreter = v.has_ground_truth;
    v.eligible_saga_multidim = v.has_ground_truth && v.n_correct >= 1;
    v.eligible_saga_differential = v.has_ground_truth && v.n_pairs >= 1;
    v.eligible_metrics = v.n_wrong >= 1;
    if (!v.has_ground_truth) v.flags.emplace_back("unusable for labeling: ground truth missing");
    if (v.n_wrong == 0) v.flags.emplace_back("metrics undefined: VAcc vacuous");
    if (v.n_correct == 0) v.flags.emplace_back("saga-multidim unavailable: no correct solutions");
    else if (v.n_correct < kMultidimSolutionCap)
      v.flags.emplace_back("saga-multidim: fewer than " + std::to_string(kMultidimSolutionCap) +
                           " correct solutions");
    if (v.n_pairs == 0) v.flags.emplace_back("saga-differential unavailable: no submission pairs");
    report.problems.push_back(std::move(v));
  }
  return report;
}

inline json to_json(const ValidationReport& r) {
  json problems = json::array();
  for (const auto& v : r.problems) {
    problems.push_back({{"problem_id", v.problem_id},
                        {"has_ground_truth", v.has_ground_truth},
                        {"n_correct", v.n_correct},
                        {"n_wrong", v.n_wrong},
                        {"n_pairs", v.n_pairs},
                        {"eligible",
                         {{"direct", v.eligible_direct},
                          {"interpreter", v.eligible_interpreter},
                          {"saga_multidim", v.eligible_saga_multidim},
                          {"saga_differential", v.eligible_saga_differential},
                          {"metrics", v.eligible_metrics}}},
                        {"flags", v.flags}});
  }
  return {{"problems", problems}, {"skipped_compile_errors", r.skipped_compile_errors}};
}

// ---------------------------------------------------------------------------
// Suites

/// Serializes a suite: a header line followed by one line per case, payloads base64.
inline std::string serialize_suite(const TestSuite& suite) {
  std::string out;
  json header = {{"problem_id", suite.problem_id}, {"cases", suite.cases.size()}};
  header["created_with_seed"] = suite.created_with_seed ? json(*suite.created_with_seed) : json(nullptr);
  out += header.dump() + "\n";
  for (const auto& c : suite.cases) {
    json j = {{"index", c.index},
              {"input", util::base64_encode(c.input)},
              {"output", util::base64_encode(c.output)},
              {"provenance", std::string(to_string(c.provenance))}};
    j["generator_record_id"] = c.generator_record_id ? json(*c.generator_record_id) : json(nullptr);
    out += j.dump() + "\n";
  }
  return out;
}

inline TestSuite parse_suite(std::string_view text, const std::string& name = "suite") {
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  TestSuite suite;
  std::size_t declared = 0;
  bool have_header = false;
  std::vector<bool> seen;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json j = json::parse(line);
      if (!have_header) {
        suite.problem_id = j.at("problem_id").get<std::string>();
        declared = j.at("cases").get<std::size_t>();
        if (j.contains("created_with_seed") && !j["created_with_seed"].is_null())
          suite.created_with_seed = j["created_with_seed"].get<std::int64_t>();
        have_header = true;
        continue;
      }
      TestCase c;
      c.index = j.at("index").get<std::size_t>();
      if (c.index != suite.cases.size())
        throw InvariantError(name + ":" + std::to_string(line_no) + ": index gap/duplicate (expected " +
                             std::to_string(suite.cases.size()) + ", found " + std::to_string(c.index) + ")");
      c.input = util::base64_decode(j.at("input").get<std::string>());
      c.output = util::base64_decode(j.at("output").get<std::string>());
      const auto prov = parse_provenance(j.at("provenance").get<std::string>());
      if (!prov) throw ParseError(name, line_no, "unknown provenance");
      c.provenance = *prov;
      if (j.contains("generator_record_id") && !j["generator_record_id"].is_null())
        c.generator_record_id = j["generator_record_id"].get<std::string>();
      suite.cases.push_back(std::move(c));
    }
  } catch (const json::exception& e) {
    throw ParseError(name, line_no, e.what());
  } catch (const DomainError& e) {
    throw ParseError(name, line_no, e.what());
  }
  if (!have_header) throw ParseError(name, 0, "missing suite header");
  if (declared != suite.cases.size())
    throw InvariantError(name + ": header declares " + std::to_string(declared) + " cases, found " +
                         std::to_string(suite.cases.size()));
  return suite;
}

inline void save_suite(const TestSuite& suite, const fs::path& path) {
  for (std::size_t i = 0; i < suite.cases.size(); ++i)
    if (suite.cases[i].index != i) throw InvariantError("suite case indices must be 0..n-1 in order");
  util::write_file_atomic(path, serialize_suite(suite));
}

inline TestSuite load_suite(const fs::path& path) {
  return parse_suite(util::read_file(path), path.filename().string());
}

/// Content hash of a suite (inputs, outputs and order).
inline std::string suite_hash(const TestSuite& suite) { return util::sha256_hex(serialize_suite(suite)); }

/// Appends `b` after `a`, dropping cases whose input already occurred; indices renumbered.
inline TestSuite union_suites(const TestSuite& a, const TestSuite& b) {
  if (!a.problem_id.empty() && !b.problem_id.empty() && a.problem_id != b.problem_id)
    throw DomainError("cannot union suites of different problems");
  TestSuite out;
  out.problem_id = a.problem_id.empty() ? b.problem_id : a.problem_id;
  out.created_with_seed = a.created_with_seed;
  std::set<std::string> seen;
  for (const auto* s : {&a, &b})
    for (const auto& c : s->cases)
      if (seen.insert(c.input).second) out.cases.push_back(c);
  out.renumber();
  return out;
}

}  // namespace vfkit

#endif  // VFKIT_DATASET_HPP
