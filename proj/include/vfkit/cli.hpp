#ifndef VFKIT_CLI_HPP
#define VFKIT_CLI_HPP

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstdint>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vfkit/dataset.hpp"
#include "vfkit/error.hpp"
#include "vfkit/exec.hpp"
#include "vfkit/killmatrix.hpp"
#include "vfkit/metrics.hpp"
#include "vfkit/saturation.hpp"
#include "vfkit/tcg/generate.hpp"
#include "vfkit/util/format.hpp"
#include "vfkit/util/fs.hpp"

namespace vfkit::cli {

using nlohmann::json;
using namespace vfkit::saturation;

inline constexpr const char* kToolVersion = "vfkit 0.3.0";

struct GenSettings {
  std::string paradigm = "saga-full";
  std::vector<std::string> problems;  ///< empty: every problem in the corpus
  std::size_t target_size = tcg::kDefaultTargetSize;
  std::size_t n_target = tcg::kDefaultTargetSize;  ///< direct / interpreter
  std::size_t max_pairs = tcg::kDefaultPairCap;
  std::size_t max_correct = tcg::kDefaultMultidimCap;
  std::size_t cases_per_script = 10;
  std::size_t max_inputs_per_script = tcg::kDefaultMaxInputsPerScript;
  std::string parse_mode = "strict";
  std::string sampler = "auto";  ///< auto | builtin | llm
  std::optional<std::size_t> curation_threshold;
};

struct EvalSettings {
  std::optional<fs::path> suites;
  Protocol protocol;
};

struct LlmConfig {
  std::string mode = "replay";  ///< replay | live
  std::string endpoint = tcg::LiveOptions{}.endpoint;
  std::string model_tag = tcg::LlmSettings{}.model_tag;
  double temperature = 0.0;
  int max_tokens = 4096;
  std::optional<fs::path> replay_dir;  ///< default <corpus>/replay
  std::size_t concurrency = 4;
  int max_attempts = 4;
};

struct SimulateSettings {
  double p = 0.2;
  double rho = 0.3;
  std::size_t nmax = 100;
  std::size_t trials = 100000;
  bool svg = true;
};

/// Every knob of a run. The persisted effective config holds all of them.
struct RunConfig {
  fs::path corpus = "data/toy";
  fs::path out = "runs/default";
  std::optional<std::uint64_t> seed;
  std::size_t parallelism = util::default_parallelism();
  std::optional<fs::path> workdir;
  Limits script_limits = Limits::for_scripts();
  json toolchain = json::object();
  GenSettings gen;
  EvalSettings eval;
  LlmConfig llm;
  SimulateSettings simulate;
  std::optional<fs::path> fit_curve;
  std::map<std::string, fs::path> mix_sources;
  std::optional<fs::path> manifest;
  std::optional<fs::path> replay_store;
};

namespace detail {

template <class T>
json opt(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

inline json opt_path(const std::optional<fs::path>& p) { return p ? json(p->string()) : json(nullptr); }

template <class T>
void read_opt(const json& j, const char* key, std::optional<T>& out) {
  if (!j.contains(key) || j[key].is_null()) out.reset();
  else out = j[key].get<T>();
}

inline void read_opt_path(const json& j, const char* key, std::optional<fs::path>& out) {
  if (!j.contains(key) || j[key].is_null()) out.reset();
  else out = fs::path(j[key].get<std::string>());
}

/// Keys of `given` must exist in `schema`; objects recurse except the free-form maps.
inline void check_keys(const json& given, const json& schema, const std::string& where) {
  for (const auto& [key, value] : given.items()) {
    const std::string path = where.empty() ? key : where + "." + key;
    if (!schema.contains(key)) throw ConfigError("unknown config key: " + path);
    if (path == "toolchain" || path == "mix.sources") continue;
    if (value.is_object() && schema[key].is_object()) check_keys(value, schema[key], path);
  }
}

}  // namespace detail

inline json to_json(const RunConfig& c) {
  return {
      {"corpus", c.corpus.string()},
      {"out", c.out.string()},
      {"seed", detail::opt(c.seed)},
      {"parallelism", c.parallelism},
      {"exec",
       {{"workdir", detail::opt_path(c.workdir)},
        {"script_time_limit_ms", c.script_limits.time_limit_ms},
        {"script_wall_limit_ms", c.script_limits.wall_limit_ms},
        {"script_memory_limit_mb", c.script_limits.memory_limit_mb}}},
      {"toolchain", c.toolchain},
      {"gen",
       {{"paradigm", c.gen.paradigm},
        {"problems", c.gen.problems},
        {"target_size", c.gen.target_size},
        {"n_target", c.gen.n_target},
        {"max_pairs", c.gen.max_pairs},
        {"max_correct", c.gen.max_correct},
        {"cases_per_script", c.gen.cases_per_script},
        {"max_inputs_per_script", c.gen.max_inputs_per_script},
        {"parse_mode", c.gen.parse_mode},
        {"sampler", c.gen.sampler},
        {"curation_threshold", detail::opt(c.gen.curation_threshold)}}},
      {"eval",
       {{"suites", detail::opt_path(c.eval.suites)},
        {"k_list", c.eval.protocol.k_list},
        {"k_min", c.eval.protocol.k_min},
        {"N", c.eval.protocol.n_max},
        {"mc_trials", c.eval.protocol.mc_trials},
        {"include_compile_errors", c.eval.protocol.include_compile_errors}}},
      {"llm",
       {{"mode", c.llm.mode},
        {"endpoint", c.llm.endpoint},
        {"model_tag", c.llm.model_tag},
        {"temperature", c.llm.temperature},
        {"max_tokens", c.llm.max_tokens},
        {"replay_dir", detail::opt_path(c.llm.replay_dir)},
        {"concurrency", c.llm.concurrency},
        {"max_attempts", c.llm.max_attempts}}},
      {"simulate",
       {{"p", c.simulate.p},
        {"rho", c.simulate.rho},
        {"nmax", c.simulate.nmax},
        {"trials", c.simulate.trials},
        {"svg", c.simulate.svg}}},
      {"fit", {{"curve", detail::opt_path(c.fit_curve)}}},
      {"mix", {{"sources", [&] {
                  json s = json::object();
                  for (const auto& [k, v] : c.mix_sources) s[k] = v.string();
                  return s;
                }()}}},
      {"replay_pack", {{"manifest", detail::opt_path(c.manifest)}, {"store", detail::opt_path(c.replay_store)}}},
  };
}

inline RunConfig config_from_json(const json& j) {
  RunConfig c;
  try {
    c.corpus = j.at("corpus").get<std::string>();
    c.out = j.at("out").get<std::string>();
    detail::read_opt(j, "seed", c.seed);
    c.parallelism = j.at("parallelism").get<std::size_t>();
    const auto& e = j.at("exec");
    detail::read_opt_path(e, "workdir", c.workdir);
    c.script_limits.time_limit_ms = e.at("script_time_limit_ms").get<int>();
    c.script_limits.wall_limit_ms = e.at("script_wall_limit_ms").get<int>();
    c.script_limits.memory_limit_mb = e.at("script_memory_limit_mb").get<int>();
    c.toolchain = j.at("toolchain");
    const auto& g = j.at("gen");
    c.gen.paradigm = g.at("paradigm").get<std::string>();
    c.gen.problems = g.at("problems").get<std::vector<std::string>>();
    c.gen.target_size = g.at("target_size").get<std::size_t>();
    c.gen.n_target = g.at("n_target").get<std::size_t>();
    c.gen.max_pairs = g.at("max_pairs").get<std::size_t>();
    c.gen.max_correct = g.at("max_correct").get<std::size_t>();
    c.gen.cases_per_script = g.at("cases_per_script").get<std::size_t>();
    c.gen.max_inputs_per_script = g.at("max_inputs_per_script").get<std::size_t>();
    c.gen.parse_mode = g.at("parse_mode").get<std::string>();
    c.gen.sampler = g.at("sampler").get<std::string>();
    detail::read_opt(g, "curation_threshold", c.gen.curation_threshold);
    const auto& ev = j.at("eval");
    detail::read_opt_path(ev, "suites", c.eval.suites);
    c.eval.protocol.k_list = ev.at("k_list").get<std::vector<std::size_t>>();
    c.eval.protocol.k_min = ev.at("k_min").get<std::size_t>();
    c.eval.protocol.n_max = ev.at("N").get<std::size_t>();
    c.eval.protocol.mc_trials = ev.at("mc_trials").get<std::size_t>();
    c.eval.protocol.include_compile_errors = ev.at("include_compile_errors").get<bool>();
    const auto& l = j.at("llm");
    c.llm.mode = l.at("mode").get<std::string>();
    c.llm.endpoint = l.at("endpoint").get<std::string>();
    c.llm.model_tag = l.at("model_tag").get<std::string>();
    c.llm.temperature = l.at("temperature").get<double>();
    c.llm.max_tokens = l.at("max_tokens").get<int>();
    detail::read_opt_path(l, "replay_dir", c.llm.replay_dir);
    c.llm.concurrency = l.at("concurrency").get<std::size_t>();
    c.llm.max_attempts = l.at("max_attempts").get<int>();
    const auto& s = j.at("simulate");
    c.simulate.p = s.at("p").get<double>();
    c.simulate.rho = s.at("rho").get<double>();
    c.simulate.nmax = s.at("nmax").get<std::size_t>();
    c.simulate.trials = s.at("trials").get<std::size_t>();
    c.simulate.svg = s.at("svg").get<bool>();
    detail::read_opt_path(j.at("fit"), "curve", c.fit_curve);
    for (const auto& [k, v] : j.at("mix").at("sources").items()) c.mix_sources[k] = v.get<std::string>();
    detail::read_opt_path(j.at("replay_pack"), "manifest", c.manifest);
    detail::read_opt_path(j.at("replay_pack"), "store", c.replay_store);
  } catch (const json::exception& ex) {
    throw ConfigError(std::string("invalid config: ") + ex.what());
  }
  if (c.parallelism < 1) throw ConfigError("parallelism must be >= 1");
  if (c.gen.parse_mode != "strict" && c.gen.parse_mode != "lenient")
    throw ConfigError("gen.parse_mode must be strict or lenient");
  if (c.gen.sampler != "auto" && c.gen.sampler != "builtin" && c.gen.sampler != "llm")
    throw ConfigError("gen.sampler must be auto, builtin or llm");
  if (c.llm.mode != "replay" && c.llm.mode != "live") throw ConfigError("llm.mode must be replay or live");
  if (c.eval.protocol.k_list.empty()) throw ConfigError("eval.k_list must not be empty");
  try {
    c.script_limits.validate();
  } catch (const DomainError& ex) {
    throw ConfigError(std::string("invalid script limits: ") + ex.what());
  }
  return c;
}

/// Defaults, then the config file, then flag overrides (both as JSON merge patches).
inline RunConfig resolve_config(const std::optional<fs::path>& file, const json& overrides) {
  const json defaults = to_json(RunConfig{});
  json merged = defaults;
  if (file) {
    if (!fs::exists(*file)) throw ConfigError("config file not found: " + file->string());
    json j;
    try {
      j = json::parse(util::read_file(*file));
    } catch (const json::parse_error& e) {
      throw ParseError(file->string(), 1, e.what());
    }
    if (!j.is_object()) throw ConfigError("config file must hold a JSON object");
    detail::check_keys(j, defaults, "");
    merged.merge_patch(j);
  }
  detail::check_keys(overrides, defaults, "");
  merged.merge_patch(overrides);
  return config_from_json(merged);
}

// ---------------------------------------------------------------------------
// Run directory

/// Exclusive ownership of an output directory for one command.
class RunDir {
 public:
  RunDir(const fs::path& dir, const RunConfig& config, std::string_view command) : dir_(dir) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw InfraError("cannot create output directory " + dir_.string());
    lock_ = dir_ / ".lock";
    const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) throw ConfigError("output directory " + dir_.string() + " is locked by another run (" + lock_.string() + ")");
    const std::string pid = std::to_string(::getpid()) + "\n";
    (void)!::write(fd, pid.data(), pid.size());
    ::close(fd);
    json eff = to_json(config);
    eff["command"] = command;
    eff["version"] = kToolVersion;
    util::write_file_atomic(dir_ / ("effective_config." + std::string(command) + ".json"), eff.dump(2) + "\n");
  }
  RunDir(const RunDir&) = delete;
  RunDir& operator=(const RunDir&) = delete;
  ~RunDir() {
    std::error_code ec;
    fs::remove(lock_, ec);
  }
  [[nodiscard]] const fs::path& path() const noexcept { return dir_; }
  [[nodiscard]] fs::path operator/(const fs::path& p) const { return dir_ / p; }

 private:
  fs::path dir_;
  fs::path lock_;
};

inline int exit_code_for(const Error& e) { return e.infrastructure() ? 2 : 1; }

/// Writes `error.json` into `dir` (when given) and returns the exit code.
inline int record_error(const std::optional<fs::path>& dir, std::string_view command, const std::string& kind,
                        const std::string& message, int code, std::ostream& err = std::cerr) {
  err << "vfkit " << command << ": " << kind << ": " << message << "\n";
  if (dir) {
    std::error_code ec;
    fs::create_directories(*dir, ec);
    const json rec = {{"command", command}, {"kind", kind}, {"message", message}, {"exit_code", code}};
    try {
      util::write_file_atomic(*dir / "error.json", rec.dump(2) + "\n");
    } catch (const Error&) {
      // the directory itself is unusable; the stderr line is all we can give
    }
  }
  return code;
}

/// Runs `body`, mapping library errors onto exit codes 1 (user) and 2 (infrastructure).
template <class Fn>
int guarded(std::string_view command, const std::optional<fs::path>& out_dir, Fn&& body) {
  try {
    body();
    std::error_code ec;
    if (out_dir) fs::remove(*out_dir / "error.json", ec);
    return 0;
  } catch (const Error& e) {
    return record_error(out_dir, command, e.kind(), e.what(), exit_code_for(e));
  } catch (const json::exception& e) {
    return record_error(out_dir, command, "parse", e.what(), 1);
  } catch (const std::filesystem::filesystem_error& e) {
    return record_error(out_dir, command, "infrastructure", e.what(), 2);
  } catch (const std::exception& e) {
    return record_error(out_dir, command, "internal", e.what(), 2);
  }
}

// ---------------------------------------------------------------------------
// Shared setup

/// Defaults, overlaid by <corpus>/toolchain.json, overlaid by the config's toolchain map.
inline Toolchain load_toolchain(const RunConfig& c) {
  json merged = json::object();
  const fs::path corpus_tc = c.corpus / "toolchain.json";
  if (fs::exists(corpus_tc)) {
    try {
      merged = json::parse(util::read_file(corpus_tc));
    } catch (const json::parse_error& e) {
      throw ParseError(corpus_tc.string(), 1, e.what());
    }
    if (!merged.is_object()) throw ConfigError(corpus_tc.string() + " must hold a JSON object");
  }
  for (const auto& [lang, entry] : c.toolchain.items()) {
    if (!entry.is_object()) throw ConfigError("toolchain." + lang + " must be an object");
    if (!merged.contains(lang)) merged[lang] = json::object();
    merged[lang].update(entry);
  }
  return Toolchain::from_json(merged);
}

inline Executor make_executor(const RunConfig& c) {
  Executor::Options o;
  o.workdir = c.workdir.value_or(util::default_workdir());
  o.parallelism = c.parallelism;
  o.toolchain = load_toolchain(c);
  return Executor(std::move(o));
}

inline Corpus load_corpus_checked(const RunConfig& c) {
  if (!fs::is_directory(c.corpus)) throw ConfigError("corpus directory not found: " + c.corpus.string());
  return load_corpus(c.corpus);
}

inline std::uint64_t require_seed(const RunConfig& c, std::string_view command) {
  if (!c.seed) throw ConfigError(std::string(command) + " needs a seed (--seed or \"seed\" in the config)");
  return *c.seed;
}

inline fs::path replay_dir(const RunConfig& c) { return c.llm.replay_dir.value_or(c.corpus / "replay"); }

inline std::unique_ptr<tcg::LlmClient> make_llm(const RunConfig& c) {
  if (c.llm.mode == "replay") return std::make_unique<tcg::ReplayClient>(replay_dir(c));
  tcg::LiveOptions o;
  o.endpoint = c.llm.endpoint;
  o.max_attempts = c.llm.max_attempts;
  o.record_dir = replay_dir(c);
  return tcg::LiveClient::from_environment(o);
}

inline tcg::LlmSettings llm_settings(const RunConfig& c) {
  return {c.llm.model_tag, c.llm.temperature, c.llm.max_tokens};
}

inline std::vector<const Problem*> selected_problems(const Corpus& corpus, const std::vector<std::string>& ids) {
  std::vector<const Problem*> out;
  if (ids.empty()) {
    for (const auto& p : corpus.problems) out.push_back(&p);
  } else {
    for (const auto& id : ids) out.push_back(&corpus.problem(id));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Commands. Each takes a resolved config and writes only into config.out.

inline json cmd_ingest(const RunConfig& c, std::ostream& log = std::cout) {
  RunDir run(c.out, c, "ingest");
  const Corpus corpus = load_corpus_checked(c);
  const auto report = validate_corpus(corpus);
  json j = to_json(report);
  j["problems"] = corpus.problems.size();
  j["solutions"] = corpus.solutions.size();
  j["pairs"] = corpus.pairs.size();
  j["skipped_compile_errors"] = corpus.skipped_compile_errors;
  util::write_file_atomic(run / "validation.json", j.dump(2) + "\n");
  log << "corpus " << c.corpus.string() << ": " << corpus.problems.size() << " problems, " << corpus.solutions.size()
      << " solutions, " << corpus.pairs.size() << " pairs\n";
  for (const auto& p : report.problems)
    for (const auto& flag : p.flags) log << "  " << p.problem_id << ": " << flag << "\n";
  return j;
}

inline tcg::Paradigm parse_paradigm(std::string_view s) {
  if (s == "direct") return tcg::Paradigm::direct;
  if (s == "interpreter") return tcg::Paradigm::interpreter_random;
  if (s == "saga-multidim") return tcg::Paradigm::saga_multidim;
  if (s == "saga-differential") return tcg::Paradigm::saga_differential;
  if (s == "saga-full") return tcg::Paradigm::saga_full;
  throw ConfigError("unknown paradigm '" + std::string(s) +
                    "' (direct, interpreter, saga-multidim, saga-differential, saga-full)");
}

inline constexpr const char* kGenSummaryHeader = "problem,paradigm,produced,validated,labeled,retention_rate,suite_size\n";

inline json cmd_gen(const RunConfig& c, std::ostream& log = std::cout) {
  const auto paradigm = parse_paradigm(c.gen.paradigm);
  const std::uint64_t seed = require_seed(c, "gen");
  RunDir run(c.out, c, "gen");
  const Corpus corpus = load_corpus_checked(c);
  Executor exec = make_executor(c);
  const auto settings = llm_settings(c);
  std::unique_ptr<tcg::LlmClient> llm;
  const auto client = [&]() -> tcg::LlmClient& {
    if (!llm) llm = make_llm(c);
    return *llm;
  };

  fs::create_directories(run / "suites");
  fs::create_directories(run / "records");
  std::string summary_csv = kGenSummaryHeader;
  json out = json::array();
  for (const Problem* p : selected_problems(corpus, c.gen.problems)) {
    const Solution& gt = tcg::require_ground_truth(corpus, *p);
    TestSuite suite;
    json records = json::array();
    tcg::GenerationRecord summary;
    switch (paradigm) {
      case tcg::Paradigm::direct: {
        auto r = tcg::gen_direct(*p, gt, client(), c.gen.n_target, exec, settings);
        suite = std::move(r.suite);
        summary = r.record;
        records.push_back(tcg::to_json(r.record));
        break;
      }
      case tcg::Paradigm::interpreter_random: {
        const bool builtin = c.gen.sampler == "builtin" || (c.gen.sampler == "auto" && p->sampler.has_value());
        tcg::GenerationResult r;
        if (builtin) {
          if (!p->sampler) throw ConfigError("problem " + p->id + " has no built-in sampler spec");
          r = tcg::gen_random_inputs(*p, gt, tcg::BuiltinSampler::parse(*p->sampler), c.gen.n_target, seed, exec);
          r.record.notes.insert(r.record.notes.begin(), "built-in sampler: " + *p->sampler);
        } else {
          auto [script, rec] = tcg::gen_sampler_script(*p, client(), settings);
          if (script) {
            r = tcg::gen_random_inputs(*p, gt, *script, c.gen.n_target, seed, exec, rec);
          } else {
            r.record = rec;
            r.suite.problem_id = p->id;
            r.record.notes.emplace_back("no sampler script in the model response");
          }
        }
        suite = std::move(r.suite);
        summary = r.record;
        records.push_back(tcg::to_json(r.record));
        break;
      }
      default: {
        tcg::SagaConfig sc;
        sc.llm = settings;
        sc.multidim = paradigm != tcg::Paradigm::saga_differential;
        sc.differential = paradigm != tcg::Paradigm::saga_multidim;
        sc.max_correct = c.gen.max_correct;
        sc.max_pairs = c.gen.max_pairs;
        sc.target_size = c.gen.target_size;
        sc.cases_per_script = c.gen.cases_per_script;
        sc.max_inputs_per_script = c.gen.max_inputs_per_script;
        sc.parse_mode = c.gen.parse_mode == "lenient" ? tcg::ParseMode::lenient : tcg::ParseMode::strict;
        sc.seed = seed;
        sc.llm_concurrency = c.llm.concurrency;
        sc.curation_threshold = c.gen.curation_threshold;
        sc.script_limits = c.script_limits;
        auto r = tcg::saga_generate(*p, corpus, client(), exec, sc);
        suite = std::move(r.suite);
        summary = r.summary;
        for (const auto& rec : r.records) records.push_back(tcg::to_json(rec));
        break;
      }
    }
    save_suite(suite, run / "suites" / (p->id + ".suite.jsonl"));
    const json doc = {{"problem_id", p->id},
                      {"paradigm", c.gen.paradigm},
                      {"seed", seed},
                      {"summary", tcg::to_json(summary)},
                      {"records", records}};
    util::write_file_atomic(run / "records" / (p->id + ".json"), doc.dump(2) + "\n");
    summary_csv += util::csv_escape(p->id) + "," + c.gen.paradigm + "," + std::to_string(summary.produced) + "," +
                   std::to_string(summary.validated) + "," + std::to_string(summary.labeled) + "," +
                   util::format_double(summary.retention_rate()) + "," + std::to_string(suite.size()) + "\n";
    log << p->id << ": " << suite.size() << " cases (produced " << summary.produced << ", retention "
        << util::format_double(summary.retention_rate()) << ")\n";
    out.push_back({{"problem_id", p->id}, {"suite_size", suite.size()}, {"suite_hash", suite_hash(suite)}});
  }
  util::write_file_atomic(run / "gen_summary.csv", summary_csv);
  return out;
}

inline constexpr const char* kCurvesCsvHeader = "scope,k,dr_at_k,vacc_at_k,extrapolated\n";

inline std::string curves_csv_rows(const MetricReport& r) {
  std::string out;
  for (const auto& row : r.curves)
    out += util::csv_escape(r.scope) + "," + std::to_string(row.k) + "," + util::format_double(row.dr) + "," +
           util::format_double(row.vacc) + "," + (row.extrapolated ? "1" : "0") + "\n";
  return out;
}

/// Kill matrices of every problem that has a suite in `suites_dir` and at least one
/// wrong solution, in corpus order.
inline std::vector<KillMatrix> build_matrices(const Corpus& corpus, const fs::path& suites_dir, Executor& exec,
                                              const RunConfig& c, std::vector<std::string>* skipped = nullptr) {
  if (!fs::is_directory(suites_dir)) throw ConfigError("suite directory not found: " + suites_dir.string());
  KillMatrixOptions kmo;
  kmo.cache_dir = exec.options().workdir / "verdicts";
  std::vector<KillMatrix> out;
  for (const auto& p : corpus.problems) {
    const fs::path file = suites_dir / (p.id + ".suite.jsonl");
    if (!fs::exists(file)) {
      if (skipped) skipped->push_back(p.id + ": no suite");
      continue;
    }
    const auto wrong = corpus.solutions_of(p.id, SolutionKind::wrong_human);
    if (wrong.empty()) {
      if (skipped) skipped->push_back(p.id + ": no incorrect solutions");
      continue;
    }
    auto suite = load_suite(file);
    if (suite.problem_id != p.id)
      throw ConfigError("suite " + file.string() + " belongs to problem " + suite.problem_id);
    out.push_back(build_kill_matrix(p, suite, wrong, exec, kmo));
  }
  (void)c;
  return out;
}

inline std::vector<MetricReport> cmd_eval(const RunConfig& c, std::ostream& log = std::cout) {
  Protocol protocol = c.eval.protocol;
  protocol.seed = require_seed(c, "eval");
  const fs::path suites = c.eval.suites.value_or(c.out / "suites");
  RunDir run(c.out, c, "eval");
  const Corpus corpus = load_corpus_checked(c);
  Executor exec = make_executor(c);
  std::vector<std::string> skipped;
  const auto matrices = build_matrices(corpus, suites, exec, c, &skipped);
  if (matrices.empty()) throw ConfigError("no problem in " + c.corpus.string() + " has a suite in " + suites.string());

  fs::create_directories(run / "killmatrix");
  std::vector<MetricReport> reports;
  for (const auto& km : matrices) {
    save_kill_matrix(km, run / "killmatrix" / (km.problem_id() + ".vfkm"));
    util::write_file_atomic(run / "killmatrix" / (km.problem_id() + ".csv"), kill_matrix_csv(km));
    reports.push_back(evaluate(km, protocol));
  }
  reports.push_back(aggregate(reports));

  std::string metrics = kMetricsCsvHeader;
  std::string curves = kCurvesCsvHeader;
  json all = json::array();
  for (const auto& r : reports) {
    metrics += metrics_csv_rows(r);
    curves += curves_csv_rows(r);
    all.push_back(to_json(r));
  }
  util::write_file_atomic(run / "metrics.csv", metrics);
  util::write_file_atomic(run / "curves.csv", curves);
  util::write_file_atomic(run / "reports.json", json{{"reports", all}, {"skipped", skipped}}.dump(2) + "\n");
  for (const auto& r : reports)
    log << r.scope << ": DR " << util::format_double(r.dr_full) << ", VAcc " << util::format_double(r.vacc_full)
        << ", DEPC " << r.depc << ", AUC@" << r.protocol.n_max << " " << util::format_double(r.auc_at_n) << "\n";
  for (const auto& s : skipped) log << "skipped " << s << "\n";
  return reports;
}

/// Static line chart of DR(n) and the bound on a log n axis.
inline std::string sim_curve_svg(const SimCurve& curve, double p_bar, double rho) {
  constexpr double W = 640, H = 400, L = 60, R = 20, T = 20, B = 50;
  const double n_max = static_cast<double>(curve.points.empty() ? 1 : curve.points.back().first);
  const auto x = [&](double n) {
    return L + (n_max <= 1 ? 0.0 : std::log(n) / std::log(n_max)) * (W - L - R);
  };
  const auto y = [&](double v) { return T + (1.0 - v) * (H - T - B); };
  const auto fmt = [](double v) {
    std::ostringstream s;
    s.setf(std::ios::fixed);
    s.precision(2);
    s << v;
    return s.str();
  };
  std::string sim, bound, indep;
  for (const auto& [n, dr] : curve.points) {
    const double nd = static_cast<double>(n);
    sim += fmt(x(nd)) + "," + fmt(y(dr)) + " ";
    bound += fmt(x(nd)) + "," + fmt(y(dr_upper_bound(p_bar, rho, nd))) + " ";
    indep += fmt(x(nd)) + "," + fmt(y(1.0 - std::pow(1.0 - p_bar, nd))) + " ";
  }
  std::string svg = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  svg += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(H - B) + "\" x2=\"" + fmt(W - R) + "\" y2=\"" + fmt(H - B) + "\" stroke=\"black\"/>\n";
  svg += "<line x1=\"" + fmt(L) + "\" y1=\"" + fmt(T) + "\" x2=\"" + fmt(L) + "\" y2=\"" + fmt(H - B) + "\" stroke=\"black\"/>\n";
  for (double v : {0.0, 0.25, 0.5, 0.75, 1.0})
    svg += "<text x=\"" + fmt(L - 8) + "\" y=\"" + fmt(y(v) + 4) + "\" text-anchor=\"end\">" + fmt(v) + "</text>\n";
  for (double n = 1; n <= n_max; n *= 10)
    svg += "<text x=\"" + fmt(x(n)) + "\" y=\"" + fmt(H - B + 18) + "\" text-anchor=\"middle\">" +
           std::to_string(static_cast<long long>(n)) + "</text>\n";
  svg += "<text x=\"" + fmt((L + W - R) / 2) + "\" y=\"" + fmt(H - 10) + "\" text-anchor=\"middle\">tests n (log scale)</text>\n";
  svg += "<polyline fill=\"none\" stroke=\"#999999\" stroke-dasharray=\"4 3\" points=\"" + indep + "\"/>\n";
  svg += "<polyline fill=\"none\" stroke=\"#d62728\" stroke-width=\"1.5\" points=\"" + bound + "\"/>\n";
  svg += "<polyline fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\" points=\"" + sim + "\"/>\n";
  svg += "<text x=\"" + fmt(W - R - 4) + "\" y=\"" + fmt(y(0.08)) + "\" text-anchor=\"end\">simulated DR (blue), bound (red), independent (grey); p=" +
         util::format_double(p_bar) + " rho=" + util::format_double(rho) + "</text>\n";
  svg += "</svg>\n";
  return svg;
}

inline SimCurve cmd_simulate(const RunConfig& c, std::ostream& log = std::cout) {
  const auto& s = c.simulate;
  RunDir run(c.out, c, "simulate");
  const auto curve = simulate_exchangeable(s.nmax, s.p, s.rho, s.trials, c.seed.value_or(0), c.parallelism);
  util::write_file_atomic(run / "sim_curve.csv", sim_curve_csv(curve, s.p, s.rho));
  if (s.svg) util::write_file_atomic(run / "sim_curve.svg", sim_curve_svg(curve, s.p, s.rho));
  log << "simulated " << s.trials << " trials up to n = " << s.nmax << "; DR(" << s.nmax
      << ") = " << util::format_double(curve.points.back().second) << ", asymptotic limit "
      << util::format_double(asymptotic_limit(s.p, s.rho)) << "\n";
  return curve;
}

inline FitResult cmd_fit(const RunConfig& c, std::ostream& log = std::cout) {
  const fs::path curve_file = c.fit_curve.value_or(c.out / "sim_curve.csv");
  if (!fs::exists(curve_file)) throw ConfigError("curve file not found: " + curve_file.string());
  const auto curve = read_curve_csv(util::read_file(curve_file));
  RunDir run(c.out, c, "fit");
  const auto fit = fit_saturation(curve);
  const json j = {{"curve", curve_file.string()},
                  {"p_hat", fit.p_hat},
                  {"rho_hat", fit.rho_hat},
                  {"rmse", fit.rmse},
                  {"points_used", fit.points_used},
                  {"asymptotic_limit", asymptotic_limit(fit.p_hat, fit.rho_hat)}};
  util::write_file_atomic(run / "fit.json", j.dump(2) + "\n");
  log << "p_hat " << util::format_double(fit.p_hat) << ", rho_hat " << util::format_double(fit.rho_hat) << ", rmse "
      << util::format_double(fit.rmse) << "\n";
  return fit;
}

inline MixGrid cmd_mix(const RunConfig& c, std::ostream& log = std::cout) {
  if (c.mix_sources.size() < 2) throw ConfigError("mix needs at least two sources (--source name=suite_dir)");
  Protocol protocol = c.eval.protocol;
  protocol.seed = c.seed.value_or(0);
  RunDir run(c.out, c, "mix");
  const Corpus corpus = load_corpus_checked(c);
  Executor exec = make_executor(c);
  std::vector<std::string> names;
  std::vector<std::vector<KillMatrix>> matrices;
  for (const auto& [name, dir] : c.mix_sources) {
    names.push_back(name);
    matrices.push_back(build_matrices(corpus, dir, exec, c));
  }
  for (std::size_t s = 1; s < matrices.size(); ++s) {
    if (matrices[s].size() != matrices[0].size())
      throw ConfigError("mix sources cover different problems: " + names[0] + " vs " + names[s]);
    for (std::size_t p = 0; p < matrices[s].size(); ++p)
      if (matrices[s][p].problem_id() != matrices[0][p].problem_id())
        throw ConfigError("mix sources cover different problems: " + names[0] + " vs " + names[s]);
  }
  const auto grid = mix_grid(names, matrices, protocol);
  util::write_file_atomic(run / "mix_grid.csv", mix_grid_csv(grid));

  std::string metrics = kMetricsCsvHeader;
  for (std::size_t i = 0; i < names.size(); ++i) {
    for (std::size_t j = i; j < names.size(); ++j) {
      std::vector<MetricReport> per;
      for (std::size_t p = 0; p < matrices[i].size(); ++p)
        per.push_back(i == j ? evaluate(matrices[i][p], protocol) : mix_report(matrices[i][p], matrices[j][p], protocol));
      metrics += metrics_csv_rows(aggregate(per, i == j ? names[i] : names[i] + "+" + names[j]));
    }
  }
  util::write_file_atomic(run / "mix_metrics.csv", metrics);
  log << mix_grid_csv(grid);
  return grid;
}

/// Markdown summary of whatever a run directory holds.
inline std::string cmd_report(const RunConfig& c, std::ostream& log = std::cout) {
  if (!fs::is_directory(c.out)) throw ConfigError("run directory not found: " + c.out.string());
  RunDir run(c.out, c, "report");
  std::string md = "# Run report: " + c.out.filename().string() + "\n\n";
  std::vector<std::string> configs;
  for (const auto& e : fs::directory_iterator(c.out)) {
    const auto name = e.path().filename().string();
    if (name.rfind("effective_config.", 0) == 0 && name != "effective_config.report.json") configs.push_back(name);
  }
  std::sort(configs.begin(), configs.end());
  md += "Commands recorded:";
  for (const auto& f : configs) {
    const auto j = json::parse(util::read_file(c.out / f));
    md += " `" + j.value("command", std::string("?")) + "` (seed " +
          (j["seed"].is_null() ? std::string("none") : j["seed"].dump()) + ")";
  }
  md += "\n\n";

  if (fs::exists(c.out / "validation.json")) {
    const auto j = json::parse(util::read_file(c.out / "validation.json"));
    md += "## Corpus\n\n" + std::to_string(j.value("problems", 0)) + " problems, " +
          std::to_string(j.value("solutions", 0)) + " solutions, " + std::to_string(j.value("pairs", 0)) + " pairs.\n\n";
  }
  if (fs::exists(c.out / "gen_summary.csv")) {
    md += "## Generation\n\n| problem | paradigm | produced | validated | labeled | retention | suite size |\n|---|---|---|---|---|---|---|\n";
    const auto lines = util::split(util::read_file(c.out / "gen_summary.csv"), '\n');
    for (std::size_t i = 1; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      md += "|";
      for (const auto& cell : util::split(lines[i], ',')) md += " " + cell + " |";
      md += "\n";
    }
    md += "\n";
  }
  if (fs::exists(c.out / "reports.json")) {
    const auto j = json::parse(util::read_file(c.out / "reports.json"));
    md += "## Evaluation\n\n| scope | tests | wrong solutions | DR | VAcc | DEPC | diversity | AUC@N |\n|---|---|---|---|---|---|---|---|\n";
    for (const auto& r : j.at("reports")) {
      md += "| " + r.at("scope").get<std::string>() + " | " + std::to_string(r.at("n_tests").get<std::size_t>()) + " | " +
            std::to_string(r.at("m_solutions").get<std::size_t>()) + " | " + util::format_double(r.at("dr").get<double>()) +
            " | " + util::format_double(r.at("vacc").get<double>()) + " | " + std::to_string(r.at("depc").get<std::size_t>()) +
            " | " + util::format_double(r.at("diversity_ratio").get<double>()) + " | " +
            util::format_double(r.at("auc_at_n").get<double>()) + " |\n";
    }
    for (const auto& s : j.value("skipped", json::array())) md += "\nSkipped: " + s.get<std::string>() + "\n";
    md += "\n";
  }
  if (fs::exists(c.out / "sim_curve.csv")) {
    const auto curve = read_curve_csv(util::read_file(c.out / "sim_curve.csv"));
    md += "## Saturation simulation\n\n";
    if (!curve.empty())
      md += "DR(" + util::format_double(curve.back().first) + ") = " + util::format_double(curve.back().second) + ".";
    if (fs::exists(c.out / "sim_curve.svg")) md += " Chart: `sim_curve.svg`.";
    md += "\n\n";
  }
  if (fs::exists(c.out / "fit.json")) {
    const auto j = json::parse(util::read_file(c.out / "fit.json"));
    md += "## Fit\n\np_hat = " + util::format_double(j.at("p_hat").get<double>()) +
          ", rho_hat = " + util::format_double(j.at("rho_hat").get<double>()) +
          ", RMSE = " + util::format_double(j.at("rmse").get<double>()) + ".\n\n";
  }
  if (fs::exists(c.out / "mix_grid.csv")) {
    md += "## Mixing (AUC@N)\n\n```\n" + util::read_file(c.out / "mix_grid.csv") + "```\n\n";
  }
  if (fs::exists(c.out / "error.json")) {
    const auto j = json::parse(util::read_file(c.out / "error.json"));
    md += "## Last error\n\n`" + j.value("command", std::string()) + "`: " + j.value("message", std::string()) + "\n";
  }
  util::write_file_atomic(run / "report.md", md);
  log << md;
  return md;
}

// ---------------------------------------------------------------------------
// Replay fixtures

/// One manifest entry: which prompt a stored response answers.
struct FixtureEntry {
  std::string problem_id;
  std::string kind;  ///< multidim | differential | direct | sampler
  std::optional<std::string> wrong_id;
  std::optional<std::size_t> n;
  fs::path response;
};

inline std::vector<FixtureEntry> load_manifest(const fs::path& path) {
  std::vector<FixtureEntry> out;
  const json j = json::parse(util::read_file(path));
  for (const auto& e : j.at("fixtures")) {
    FixtureEntry f;
    f.problem_id = e.at("problem").get<std::string>();
    f.kind = e.at("kind").get<std::string>();
    if (e.contains("wrong")) f.wrong_id = e["wrong"].get<std::string>();
    if (e.contains("n")) f.n = e["n"].get<std::size_t>();
    f.response = path.parent_path() / e.at("response").get<std::string>();
    out.push_back(std::move(f));
  }
  return out;
}

/// Renders the prompt each fixture answers from the corpus and stores the pair under
/// its request hash. Returns the hashes written, in manifest order.
inline std::vector<std::string> pack_replay(const Corpus& corpus, const std::vector<FixtureEntry>& fixtures,
                                            const fs::path& store_dir, const tcg::LlmSettings& settings,
                                            std::size_t max_correct = tcg::kDefaultMultidimCap) {
  tcg::ReplayStore store(store_dir);
  std::vector<std::string> hashes;
  for (const auto& f : fixtures) {
    const Problem& p = corpus.problem(f.problem_id);
    tcg::BuiltPrompt prompt;
    if (f.kind == "multidim") {
      prompt = tcg::build_multidim_prompt(p, corpus.solutions_of(p.id, SolutionKind::correct_human), max_correct);
    } else if (f.kind == "differential") {
      if (!f.wrong_id) throw ConfigError("differential fixture for " + p.id + " needs a 'wrong' solution id");
      const auto pairs = corpus.pairs_of(p.id);
      const auto it = std::find_if(pairs.begin(), pairs.end(), [&](const auto& pr) { return pr.wrong.id == *f.wrong_id; });
      if (it == pairs.end()) throw ReferenceError("no submission pair with wrong solution " + *f.wrong_id);
      prompt = tcg::build_differential_prompt(p, *it);
    } else if (f.kind == "direct") {
      prompt = tcg::build_direct_prompt(p, f.n.value_or(tcg::kDefaultTargetSize));
    } else if (f.kind == "sampler") {
      prompt = tcg::build_sampler_prompt(p);
    } else {
      throw ConfigError("unknown fixture kind '" + f.kind + "'");
    }
    const auto request = settings.request(prompt.text);
    const std::string text = util::read_file(f.response);
    store.put(request, {text, "stop", {}});
    hashes.push_back(tcg::request_hash(request));
  }
  return hashes;
}

inline std::vector<std::string> cmd_replay_pack(const RunConfig& c, std::ostream& log = std::cout) {
  if (!c.manifest) throw ConfigError("replay-pack needs --manifest");
  const fs::path store = c.replay_store.value_or(replay_dir(c));
  const Corpus corpus = load_corpus_checked(c);
  const auto fixtures = load_manifest(*c.manifest);
  const auto hashes = pack_replay(corpus, fixtures, store, llm_settings(c), c.gen.max_correct);
  for (std::size_t i = 0; i < hashes.size(); ++i)
    log << hashes[i] << "  " << fixtures[i].problem_id << " " << fixtures[i].kind
        << (fixtures[i].wrong_id ? " " + *fixtures[i].wrong_id : std::string()) << "\n";
  return hashes;
}

}  // namespace vfkit::cli

#endif  // VFKIT_CLI_HPP
