#include <gtest/gtest.h>

#include <cstdlib>
#include <set>
#include <sstream>

#include "test_support.hpp"
#include "vfkit/cli.hpp"

namespace vfkit {
namespace {

using nlohmann::json;

cli::RunConfig toy_config(const fs::path& out, std::optional<std::uint64_t> seed = 42) {
  cli::RunConfig c;
  c.corpus = testing::toy_corpus();
  c.out = out;
  c.seed = seed;
  c.parallelism = 4;
  c.workdir = fs::path(VFKIT_TEST_WORKDIR);
  return c;
}

std::map<std::string, std::string> read_tree(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = util::read_file(e.path());
  return files;
}

// ---------------------------------------------------------------------------
// Golden metrics oracle: brute force over every k-subset of the hand-enumerated
// kill matrices of the toy suites (rows = tests, columns = w1..w4).

struct HandMatrix {
  std::string problem;
  std::vector<std::string> rows;
};

const std::vector<HandMatrix>& toy_matrices() {
  static const std::vector<HandMatrix> m = {
      {"sum", {"0000", "0100", "1011", "0001", "1111", "0100"}},
      {"max", {"0001", "1010", "0110", "0000", "0100"}},
      {"avg", {"1000", "1100", "0010", "1000", "0000"}},
  };
  return m;
}

struct OracleReport {
  std::string scope;
  std::size_t n = 0, depc = 0;
  double dr = 0, vacc = 0, diversity = 0, auc = 0;
  std::vector<std::size_t> ks;
  std::vector<double> dr_k, vacc_k;
};

OracleReport oracle_report(const HandMatrix& hm, const Protocol& proto) {
  const std::size_t n = hm.rows.size(), m = hm.rows[0].size();
  const auto covers = [&](unsigned mask, std::size_t j) {
    for (std::size_t i = 0; i < n; ++i)
      if ((mask >> i & 1U) && hm.rows[i][j] == '1') return true;
    return false;
  };
  OracleReport r;
  r.scope = hm.problem;
  r.n = n;
  const unsigned all = (1U << n) - 1;
  std::size_t detected = 0;
  for (std::size_t j = 0; j < m; ++j) detected += covers(all, j) ? 1 : 0;
  r.dr = static_cast<double>(detected) / static_cast<double>(m);
  r.vacc = detected == m ? 1.0 : 0.0;
  std::set<std::string> patterns;
  for (const auto& row : hm.rows)
    if (row.find('1') != std::string::npos) patterns.insert(row);
  r.depc = patterns.size();
  r.diversity = static_cast<double>(r.depc) / static_cast<double>(n);

  for (std::size_t k : proto.k_list) {
    r.ks.push_back(k);
    if (k > n) {
      r.dr_k.push_back(r.dr);
      r.vacc_k.push_back(r.vacc);
      continue;
    }
    std::uint64_t subsets = 0, hits = 0, full = 0;
    for (unsigned mask = 0; mask <= all; ++mask) {
      if (static_cast<std::size_t>(__builtin_popcount(mask)) != k) continue;
      ++subsets;
      std::size_t got = 0;
      for (std::size_t j = 0; j < m; ++j) got += covers(mask, j) ? 1 : 0;
      hits += got;
      full += got == m ? 1 : 0;
    }
    r.dr_k.push_back(static_cast<double>(hits) / static_cast<double>(subsets * m));
    r.vacc_k.push_back(static_cast<double>(full) / static_cast<double>(subsets));
  }
  // Trapezoid over the k grid between k_min and N, all of which lie in k_list here.
  double area = 0;
  std::size_t prev_k = 0;
  double prev_v = 0;
  bool first = true;
  for (std::size_t i = 0; i < r.ks.size(); ++i) {
    if (r.ks[i] < proto.k_min || r.ks[i] > proto.n_max) continue;
    if (!first) area += (prev_v + r.vacc_k[i]) / 2.0 * static_cast<double>(r.ks[i] - prev_k);
    first = false;
    prev_k = r.ks[i];
    prev_v = r.vacc_k[i];
  }
  r.auc = area / static_cast<double>(proto.n_max - proto.k_min);
  return r;
}

std::string oracle_csv(const Protocol& proto) {
  std::vector<OracleReport> reports;
  for (const auto& hm : toy_matrices()) reports.push_back(oracle_report(hm, proto));
  OracleReport agg;
  agg.scope = "aggregate";
  agg.ks = reports[0].ks;
  agg.dr_k.assign(agg.ks.size(), 0.0);
  agg.vacc_k.assign(agg.ks.size(), 0.0);
  const double p = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    agg.n += r.n;
    agg.dr += r.dr / p;
    agg.vacc += r.vacc / p;
    agg.depc += r.depc;
    agg.diversity += r.diversity / p;
    agg.auc += r.auc / p;
  }
  for (std::size_t i = 0; i < agg.ks.size(); ++i)
    for (const auto& r : reports) {
      agg.dr_k[i] += r.dr_k[i] / p;
      agg.vacc_k[i] += r.vacc_k[i] / p;
    }
  reports.push_back(agg);

  std::string out = "scope,metric,k,value\n";
  for (const auto& r : reports) {
    const std::string n = std::to_string(r.n);
    out += r.scope + ",dr," + n + "," + util::format_double(r.dr) + "\n";
    out += r.scope + ",vacc," + n + "," + util::format_double(r.vacc) + "\n";
    out += r.scope + ",depc," + n + "," + std::to_string(r.depc) + "\n";
    out += r.scope + ",diversity_ratio," + n + "," + util::format_double(r.diversity) + "\n";
    for (std::size_t i = 0; i < r.ks.size(); ++i)
      out += r.scope + ",dr_at_k," + std::to_string(r.ks[i]) + "," + util::format_double(r.dr_k[i]) + "\n";
    for (std::size_t i = 0; i < r.ks.size(); ++i)
      out += r.scope + ",vacc_at_k," + std::to_string(r.ks[i]) + "," + util::format_double(r.vacc_k[i]) + "\n";
    out += r.scope + ",auc_at_n," + std::to_string(proto.n_max) + "," + util::format_double(r.auc) + "\n";
  }
  return out;
}

fs::path golden_metrics() { return testing::toy_corpus() / "golden" / "eval_metrics.csv"; }

TEST(CliEval, MatchesHandEnumeratedGolden) {
  const Protocol proto;  // defaults: k_list 1,2,5,...,50, N = 50
  const std::string expected = oracle_csv(proto);
  if (std::getenv("VF_REGEN_GOLDEN") != nullptr) {
    fs::create_directories(golden_metrics().parent_path());
    util::write_file(golden_metrics(), expected);
  }
  ASSERT_EQ(util::read_file(golden_metrics()), expected);

  testing::TempWorkdir out("cli-eval");
  auto c = toy_config(out.path(), 1);
  c.eval.suites = testing::toy_corpus() / "suites";
  std::ostringstream log;
  const auto reports = cli::cmd_eval(c, log);
  ASSERT_EQ(reports.size(), 4U);
  EXPECT_EQ(util::read_file(out.path() / "metrics.csv"), expected);
  EXPECT_EQ(reports[0].depc, 4U);
  EXPECT_EQ(reports[1].diversity_ratio, 0.8);
  EXPECT_EQ(reports[2].dr_full, 0.75);
  EXPECT_EQ(reports[2].vacc_full, 0.0);
  EXPECT_TRUE(fs::exists(out.path() / "killmatrix" / "sum.vfkm"));
  EXPECT_TRUE(fs::exists(out.path() / "curves.csv"));
  EXPECT_TRUE(fs::exists(out.path() / "effective_config.eval.json"));

  // Same config again: identical outputs, served from the verdict cache.
  const auto before = read_tree(out.path());
  cli::cmd_eval(c, log);
  EXPECT_EQ(read_tree(out.path()), before);
}

// ---------------------------------------------------------------------------
// Config

TEST(CliConfig, LayeringAndValidation) {
  testing::TempWorkdir dir("cli-config");
  const auto defaults = cli::resolve_config(std::nullopt, json::object());
  EXPECT_FALSE(defaults.seed.has_value());
  EXPECT_EQ(defaults.gen.target_size, 50U);
  EXPECT_EQ(defaults.llm.mode, "replay");
  EXPECT_EQ(defaults.eval.protocol, Protocol{});
  EXPECT_EQ(cli::to_json(cli::config_from_json(cli::to_json(defaults))), cli::to_json(defaults));

  const fs::path file = dir.path() / "run.json";
  util::write_file(file, R"({"seed": 3, "gen": {"paradigm": "direct", "max_pairs": 2}, "eval": {"k_list": [1, 3]}})");
  const auto from_file = cli::resolve_config(file, json::object());
  EXPECT_EQ(from_file.seed, 3U);
  EXPECT_EQ(from_file.gen.paradigm, "direct");
  EXPECT_EQ(from_file.gen.max_pairs, 2U);
  EXPECT_EQ(from_file.gen.target_size, 50U);
  EXPECT_EQ(from_file.eval.protocol.k_list, (std::vector<std::size_t>{1, 3}));

  const auto flagged = cli::resolve_config(file, {{"seed", 9}, {"gen", {{"max_pairs", 4}}}});
  EXPECT_EQ(flagged.seed, 9U);
  EXPECT_EQ(flagged.gen.max_pairs, 4U);
  EXPECT_EQ(flagged.gen.paradigm, "direct");

  util::write_file(file, R"({"gen": {"paradigms": "direct"}})");
  EXPECT_THROW(cli::resolve_config(file, json::object()), ConfigError);
  util::write_file(file, R"({"seed": )");
  EXPECT_THROW(cli::resolve_config(file, json::object()), ParseError);
  EXPECT_THROW(cli::resolve_config(dir.path() / "missing.json", json::object()), ConfigError);
  EXPECT_THROW(cli::resolve_config(std::nullopt, {{"llm", {{"mode", "psychic"}}}}), ConfigError);
  EXPECT_THROW(cli::resolve_config(std::nullopt, {{"parallelism", "many"}}), ConfigError);
  EXPECT_THROW(cli::parse_paradigm("saga"), ConfigError);

  auto no_seed = toy_config(dir.path() / "out", std::nullopt);
  std::ostringstream log;
  EXPECT_THROW(cli::cmd_gen(no_seed, log), ConfigError);
  EXPECT_THROW(cli::cmd_eval(no_seed, log), ConfigError);
}

TEST(CliConfig, ToolchainLayers) {
  auto c = toy_config("unused");
  EXPECT_EQ(cli::load_toolchain(c).entry("python").run, "python3 -S {src}");
  c.toolchain = {{"python", {{"source_name", "sol.py"}}}};
  const auto t = cli::load_toolchain(c);
  EXPECT_EQ(t.entry("python").run, "python3 -S {src}");
  EXPECT_EQ(t.entry("python").source_name, "sol.py");
}

TEST(CliRunDir, EffectiveConfigLockAndErrors) {
  testing::TempWorkdir out("cli-rundir");
  auto c = toy_config(out.path());
  std::ostringstream log;
  const auto report = cli::cmd_ingest(c, log);
  EXPECT_EQ(report["problems"], 3);
  EXPECT_EQ(report["solutions"], 24);
  EXPECT_NE(log.str().find("saga-multidim: fewer than 10 correct solutions"), std::string::npos);

  const auto eff = json::parse(util::read_file(out.path() / "effective_config.ingest.json"));
  EXPECT_EQ(eff["command"], "ingest");
  EXPECT_EQ(eff["version"], cli::kToolVersion);
  EXPECT_EQ(eff["seed"], 42);
  for (const auto& [key, value] : cli::to_json(cli::RunConfig{}).items()) EXPECT_TRUE(eff.contains(key)) << key;
  EXPECT_FALSE(fs::exists(out.path() / ".lock"));

  {
    cli::RunDir held(out.path(), c, "ingest");
    EXPECT_TRUE(fs::exists(out.path() / ".lock"));
    EXPECT_THROW(cli::cmd_ingest(c, log), ConfigError);
  }
  EXPECT_FALSE(fs::exists(out.path() / ".lock"));

  std::ostringstream err;
  const int user = cli::guarded("eval", out.path(), [] { throw ConfigError("bad flag"); });
  EXPECT_EQ(user, 1);
  const auto rec = json::parse(util::read_file(out.path() / "error.json"));
  EXPECT_EQ(rec["kind"], "config");
  EXPECT_EQ(rec["exit_code"], 1);
  EXPECT_EQ(cli::guarded("eval", out.path(), [] { throw InfraError("disk gone"); }), 2);
  EXPECT_EQ(json::parse(util::read_file(out.path() / "error.json"))["exit_code"], 2);
  EXPECT_EQ(cli::guarded("eval", out.path(), [] {}), 0);
  EXPECT_FALSE(fs::exists(out.path() / "error.json"));

  auto missing = c;
  missing.corpus = out.path() / "nowhere";
  EXPECT_THROW(cli::cmd_ingest(missing, log), ConfigError);
}

// ---------------------------------------------------------------------------
// Generation under replay

TEST(CliGen, SagaReplayIsDeterministicAndSelfConsistent) {
  testing::TempWorkdir a("cli-gen-a");
  testing::TempWorkdir b("cli-gen-b");
  std::ostringstream log;
  cli::cmd_gen(toy_config(a.path()), log);
  cli::cmd_gen(toy_config(b.path()), log);
  for (const char* sub : {"suites", "records"}) EXPECT_EQ(read_tree(a.path() / sub), read_tree(b.path() / sub)) << sub;
  EXPECT_EQ(util::read_file(a.path() / "gen_summary.csv"), util::read_file(b.path() / "gen_summary.csv"));

  const Corpus corpus = load_corpus(testing::toy_corpus());
  Executor exec(testing::executor_options());
  for (const auto& p : corpus.problems) {
    const auto suite = load_suite(a.path() / "suites" / (p.id + ".suite.jsonl"));
    EXPECT_GE(suite.size(), 10U) << p.id;
    EXPECT_EQ(suite.created_with_seed, 42);
    for (auto v : exec.run_suite(*corpus.ground_truth(p), suite, p)) EXPECT_EQ(v, Verdict::AC) << p.id;
    const auto rec = json::parse(util::read_file(a.path() / "records" / (p.id + ".json")));
    EXPECT_EQ(rec["summary"]["paradigm"], "saga_full");
    for (const auto& r : rec["records"]) {
      EXPECT_LE(r["labeled"].get<std::size_t>(), r["validated"].get<std::size_t>());
      EXPECT_LE(r["validated"].get<std::size_t>(), r["produced"].get<std::size_t>());
    }
  }
  EXPECT_EQ(corpus, load_corpus(testing::toy_corpus()));  // the corpus is never written
}

TEST(CliGen, OtherParadigmsUnderReplay) {
  testing::TempWorkdir out("cli-gen-other");
  std::ostringstream log;
  auto c = toy_config(out.path());
  c.gen.paradigm = "direct";
  cli::cmd_gen(c, log);
  const auto sum = json::parse(util::read_file(out.path() / "records" / "sum.json"));
  EXPECT_EQ(sum["summary"]["produced"], 5);
  EXPECT_EQ(sum["summary"]["labeled"], 4);  // 2147483647 + 1 is not 2147483647
  const auto avg = json::parse(util::read_file(out.path() / "records" / "avg.json"));
  EXPECT_EQ(avg["summary"]["labeled"], 2);  // "0.33" misses the 1e-6 tolerance

  c.gen.paradigm = "interpreter";
  cli::cmd_gen(c, log);
  EXPECT_EQ(load_suite(out.path() / "suites" / "max.suite.jsonl").size(), 50U);
  c.gen.sampler = "llm";
  c.gen.n_target = 12;
  cli::cmd_gen(c, log);
  EXPECT_EQ(load_suite(out.path() / "suites" / "max.suite.jsonl").size(), 12U);

  c.gen.paradigm = "saga-multidim";
  c.gen.problems = {"avg"};
  cli::cmd_gen(c, log);
  const auto suite = load_suite(out.path() / "suites" / "avg.suite.jsonl");
  ASSERT_FALSE(suite.cases.empty());
  for (const auto& tc : suite.cases) EXPECT_EQ(tc.provenance, Provenance::saga_multidim);

  c.llm.replay_dir = out.path() / "empty-store";
  EXPECT_THROW(cli::cmd_gen(c, log), ReplayMissError);
}

TEST(CliReplayPack, RebuildsTheShippedStore) {
  testing::TempWorkdir store("cli-pack");
  auto c = toy_config(store.path() / "out");
  c.manifest = testing::toy_corpus() / "llm" / "manifest.json";
  c.replay_store = store.path() / "replay";
  std::ostringstream log;
  const auto hashes = cli::cmd_replay_pack(c, log);
  EXPECT_EQ(hashes.size(), 16U);
  EXPECT_EQ(read_tree(store.path() / "replay"), read_tree(testing::toy_corpus() / "replay"));
}

// ---------------------------------------------------------------------------
// Simulation, fit, mixing, report

TEST(CliSimulate, FullCorrelationGivesConstantBound) {
  testing::TempWorkdir out("cli-sim");
  auto c = toy_config(out.path(), 5);
  c.simulate.p = 0.5;
  c.simulate.rho = 1.0;
  c.simulate.nmax = 100;
  c.simulate.trials = 2000;
  std::ostringstream log;
  cli::cmd_simulate(c, log);
  const auto lines = util::split(util::read_file(out.path() / "sim_curve.csv"), '\n');
  ASSERT_EQ(lines.size(), 102U);
  EXPECT_EQ(lines[0], "n,dr,bound");
  for (std::size_t i = 1; i <= 100; ++i) EXPECT_EQ(util::split(lines[i], ',')[2], "0.5") << i;
  EXPECT_NE(util::read_file(out.path() / "sim_curve.svg").find("<polyline"), std::string::npos);

  const auto first = util::read_file(out.path() / "sim_curve.csv");
  cli::cmd_simulate(c, log);
  EXPECT_EQ(util::read_file(out.path() / "sim_curve.csv"), first);
}

TEST(CliFit, FitsSimulatedCurve) {
  testing::TempWorkdir out("cli-fit");
  auto c = toy_config(out.path(), 5);
  c.simulate.trials = 20000;
  std::ostringstream log;
  cli::cmd_simulate(c, log);
  const auto fit = cli::cmd_fit(c, log);
  const auto j = json::parse(util::read_file(out.path() / "fit.json"));
  EXPECT_EQ(j["p_hat"].get<double>(), fit.p_hat);
  EXPECT_LT(fit.rmse, 0.02);
  c.fit_curve = out.path() / "absent.csv";
  EXPECT_THROW(cli::cmd_fit(c, log), ConfigError);
}

TEST(CliMix, DisjointSourcesComplementEachOther) {
  testing::TempWorkdir out("cli-mix");
  auto c = toy_config(out.path(), 0);
  c.mix_sources = {{"a", testing::toy_corpus() / "mix" / "a"}, {"b", testing::toy_corpus() / "mix" / "b"}};
  std::ostringstream log;
  const auto grid = cli::cmd_mix(c, log);
  ASSERT_EQ(grid.sources, (std::vector<std::string>{"a", "b"}));

  // Each source alone misses some wrong solution on every problem; together they catch all.
  const Corpus corpus = load_corpus(testing::toy_corpus());
  Executor exec(testing::executor_options());
  const auto ma = cli::build_matrices(corpus, testing::toy_corpus() / "mix" / "a", exec, c);
  const auto mb = cli::build_matrices(corpus, testing::toy_corpus() / "mix" / "b", exec, c);
  ASSERT_EQ(ma.size(), 3U);
  for (std::size_t p = 0; p < 3; ++p) {
    EXPECT_EQ(vacc(ma[p]), 0) << p;
    EXPECT_EQ(vacc(mb[p]), 0) << p;
    EXPECT_EQ(vacc(union_matrices(ma[p], mb[p])), 1) << p;
  }
  EXPECT_EQ(grid.auc[0][0], 0.0);
  EXPECT_EQ(grid.auc[1][1], 0.0);
  EXPECT_GT(grid.auc[0][1], 0.0);
  EXPECT_EQ(grid.auc[0][1], grid.auc[1][0]);

  const auto csv = util::read_file(out.path() / "mix_grid.csv");
  EXPECT_EQ(csv, mix_grid_csv(grid));
  const auto metrics = util::read_file(out.path() / "mix_metrics.csv");
  EXPECT_NE(metrics.find("a+b,vacc,9,1\n"), std::string::npos);

  c.mix_sources.erase("b");
  EXPECT_THROW(cli::cmd_mix(c, log), ConfigError);
}

TEST(CliReport, SummarizesRunDirectory) {
  testing::TempWorkdir out("cli-report");
  auto c = toy_config(out.path(), 1);
  c.eval.suites = testing::toy_corpus() / "suites";
  c.simulate.trials = 1000;
  std::ostringstream log;
  cli::cmd_ingest(c, log);
  cli::cmd_eval(c, log);
  cli::cmd_simulate(c, log);
  const auto md = cli::cmd_report(c, log);
  for (const char* part : {"## Corpus", "## Evaluation", "| sum | 6 | 4 | 1 | 1 | 4 |", "## Saturation simulation", "`eval` (seed 1)"})
    EXPECT_NE(md.find(part), std::string::npos) << part;
  EXPECT_EQ(util::read_file(out.path() / "report.md"), md);
}

// ---------------------------------------------------------------------------
// The executable

int run_cli(const std::string& args) {
  const std::string cmd = std::string(VFKIT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

TEST(CliBinary, ExitCodes) {
  testing::TempWorkdir out("cli-bin");
  const std::string o = " --out " + out.path().string();
  EXPECT_EQ(run_cli("--version"), 0);
  EXPECT_EQ(run_cli("eval --no-such-flag"), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("ingest --corpus " + (out.path() / "missing").string() + o), 1);
  const auto rec = json::parse(util::read_file(out.path() / "error.json"));
  EXPECT_EQ(rec["command"], "ingest");
  EXPECT_EQ(rec["exit_code"], 1);
  EXPECT_EQ(run_cli("ingest --corpus " + testing::toy_corpus().string() + o), 0);
  EXPECT_FALSE(fs::exists(out.path() / "error.json"));
  EXPECT_EQ(run_cli("simulate --p 0.5 --rho 1 --nmax 100 --trials 500 --no-svg" + o), 0);
  EXPECT_FALSE(fs::exists(out.path() / "sim_curve.svg"));
  EXPECT_EQ(run_cli("gen --paradigm bogus --seed 1 --corpus " + testing::toy_corpus().string() + o), 1);
}

}  // namespace
}  // namespace vfkit
