#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "vfkit/cli.hpp"

namespace {

using nlohmann::json;
using namespace vfkit;

/// Flags collected before the config file is read; only those given end up in the overrides.
struct Flags {
  std::optional<std::string> config;
  std::optional<std::string> corpus, out, workdir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> parallelism;
  std::optional<std::string> llm_mode, replay_dir, model_tag, endpoint;

  std::optional<std::string> paradigm, parse_mode, sampler;
  std::vector<std::string> problems;
  std::optional<std::size_t> target_size, n_target, max_pairs, max_correct, cases_per_script, curation_threshold;

  std::optional<std::string> suites, k_list;
  std::optional<std::size_t> n_max, k_min, mc_trials;
  bool include_ce = false;

  std::optional<double> p, rho;
  std::optional<std::size_t> nmax, trials;
  bool no_svg = false;

  std::optional<std::string> curve;
  std::vector<std::string> sources;
  std::optional<std::string> manifest, store;
};

template <class T>
void put(json& j, const json::json_pointer& ptr, const std::optional<T>& v) {
  if (v) j[ptr] = *v;
}

std::vector<std::size_t> parse_k_list(const std::string& s) {
  std::vector<std::size_t> out;
  for (const auto& part : util::split(s, ',')) {
    const auto t = util::trim(part);
    if (t.empty()) continue;
    std::size_t v = 0;
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || p != t.data() + t.size()) throw ConfigError("bad --k-list entry '" + std::string(t) + "'");
    out.push_back(v);
  }
  return out;
}

json overrides_from(const Flags& f) {
  using P = json::json_pointer;
  json j = json::object();
  put(j, P("/corpus"), f.corpus);
  put(j, P("/out"), f.out);
  put(j, P("/seed"), f.seed);
  put(j, P("/parallelism"), f.parallelism);
  put(j, P("/exec/workdir"), f.workdir);
  put(j, P("/llm/mode"), f.llm_mode);
  put(j, P("/llm/replay_dir"), f.replay_dir);
  put(j, P("/llm/model_tag"), f.model_tag);
  put(j, P("/llm/endpoint"), f.endpoint);
  put(j, P("/gen/paradigm"), f.paradigm);
  put(j, P("/gen/parse_mode"), f.parse_mode);
  put(j, P("/gen/sampler"), f.sampler);
  if (!f.problems.empty()) j["gen"]["problems"] = f.problems;
  put(j, P("/gen/target_size"), f.target_size);
  put(j, P("/gen/n_target"), f.n_target);
  put(j, P("/gen/max_pairs"), f.max_pairs);
  put(j, P("/gen/max_correct"), f.max_correct);
  put(j, P("/gen/cases_per_script"), f.cases_per_script);
  put(j, P("/gen/curation_threshold"), f.curation_threshold);
  put(j, P("/eval/suites"), f.suites);
  if (f.k_list) j["eval"]["k_list"] = parse_k_list(*f.k_list);
  put(j, P("/eval/N"), f.n_max);
  put(j, P("/eval/k_min"), f.k_min);
  put(j, P("/eval/mc_trials"), f.mc_trials);
  if (f.include_ce) j["eval"]["include_compile_errors"] = true;
  put(j, P("/simulate/p"), f.p);
  put(j, P("/simulate/rho"), f.rho);
  put(j, P("/simulate/nmax"), f.nmax);
  put(j, P("/simulate/trials"), f.trials);
  if (f.no_svg) j["simulate"]["svg"] = false;
  put(j, P("/fit/curve"), f.curve);
  for (const auto& s : f.sources) {
    const auto eq = s.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == s.size())
      throw ConfigError("--source expects name=suite_dir, got '" + s + "'");
    j["mix"]["sources"][s.substr(0, eq)] = s.substr(eq + 1);
  }
  put(j, P("/replay_pack/manifest"), f.manifest);
  put(j, P("/replay_pack/store"), f.store);
  return j;
}

void add_common(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "JSON run config; flags override it");
  cmd->add_option("--corpus", f.corpus, "corpus directory");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "run seed");
  cmd->add_option("--parallelism", f.parallelism, "worker threads");
  cmd->add_option("--workdir", f.workdir, "sandbox and cache root (default $VF_WORKDIR)");
}

void add_llm(CLI::App* cmd, Flags& f) {
  cmd->add_option("--llm-mode", f.llm_mode, "replay or live");
  cmd->add_option("--replay-dir", f.replay_dir, "replay store (default <corpus>/replay)");
  cmd->add_option("--model-tag", f.model_tag, "model name sent to the endpoint");
  cmd->add_option("--endpoint", f.endpoint, "chat-completion URL for live mode");
}

void add_protocol(CLI::App* cmd, Flags& f) {
  cmd->add_option("--k-list", f.k_list, "comma-separated suite sizes");
  cmd->add_option("--n", f.n_max, "AUC upper bound N");
  cmd->add_option("--k-min", f.k_min, "AUC lower bound");
  cmd->add_option("--mc-trials", f.mc_trials, "Monte Carlo trials for VAcc@k");
  cmd->add_flag("--include-ce", f.include_ce, "keep compile-error solutions in the metrics");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Verifier evaluation toolkit: test generation, kill matrices, metrics and saturation analysis"};
  app.set_version_flag("--version", vfkit::cli::kToolVersion);
  app.require_subcommand(1);
  Flags f;

  auto* ingest = app.add_subcommand("ingest", "load and validate a corpus");
  add_common(ingest, f);

  auto* gen = app.add_subcommand("gen", "generate test suites");
  add_common(gen, f);
  add_llm(gen, f);
  gen->add_option("--paradigm", f.paradigm, "direct|interpreter|saga-multidim|saga-differential|saga-full");
  gen->add_option("--problem", f.problems, "restrict to these problem ids");
  gen->add_option("--target-size", f.target_size, "SAGA suite size");
  gen->add_option("--n-target", f.n_target, "cases requested by direct / interpreter");
  gen->add_option("--max-pairs", f.max_pairs, "differential pairs per problem");
  gen->add_option("--max-correct", f.max_correct, "correct solutions in the multidimensional prompt");
  gen->add_option("--cases-per-script", f.cases_per_script, "COUNT passed to case scripts");
  gen->add_option("--parse-mode", f.parse_mode, "strict or lenient");
  gen->add_option("--sampler", f.sampler, "auto, builtin or llm (interpreter paradigm)");
  gen->add_option("--curation-threshold", f.curation_threshold, "top up suites smaller than this");

  auto* eval = app.add_subcommand("eval", "build kill matrices and compute metrics");
  add_common(eval, f);
  add_protocol(eval, f);
  eval->add_option("--suites", f.suites, "suite directory (default <out>/suites)");

  auto* simulate = app.add_subcommand("simulate", "simulate correlated tests and the saturation bound");
  add_common(simulate, f);
  simulate->add_option("--p", f.p, "mean detection probability");
  simulate->add_option("--rho", f.rho, "pairwise correlation");
  simulate->add_option("--nmax", f.nmax, "largest suite size");
  simulate->add_option("--trials", f.trials, "simulated wrong solutions");
  simulate->add_flag("--no-svg", f.no_svg, "skip the SVG chart");

  auto* fit = app.add_subcommand("fit", "fit the saturation bound to a DR curve");
  add_common(fit, f);
  fit->add_option("--curve", f.curve, "CSV with n and dr columns (default <out>/sim_curve.csv)");

  auto* mix = app.add_subcommand("mix", "pairwise AUC grid over suite sources");
  add_common(mix, f);
  add_protocol(mix, f);
  mix->add_option("--source", f.sources, "name=suite_dir, repeatable");

  auto* report = app.add_subcommand("report", "markdown summary of a run directory");
  add_common(report, f);

  auto* pack = app.add_subcommand("replay-pack", "build a replay store from fixture responses");
  add_common(pack, f);
  add_llm(pack, f);
  pack->add_option("--manifest", f.manifest, "fixture manifest JSON")->required();
  pack->add_option("--store", f.store, "replay store directory (default <corpus>/replay)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  const CLI::App* cmd = app.get_subcommands().front();
  const std::string name = cmd->get_name();
  std::optional<fs::path> out_dir;
  if (f.out) out_dir = *f.out;

  cli::RunConfig config;
  const int rc = cli::guarded(name, out_dir, [&] {
    config = cli::resolve_config(f.config ? std::optional<fs::path>(*f.config) : std::nullopt, overrides_from(f));
  });
  if (rc != 0) return rc;
  out_dir = config.out;

  return cli::guarded(name, out_dir, [&] {
    if (name == "ingest") cli::cmd_ingest(config);
    else if (name == "gen") cli::cmd_gen(config);
    else if (name == "eval") cli::cmd_eval(config);
    else if (name == "simulate") cli::cmd_simulate(config);
    else if (name == "fit") cli::cmd_fit(config);
    else if (name == "mix") cli::cmd_mix(config);
    else if (name == "report") cli::cmd_report(config);
    else if (name == "replay-pack") cli::cmd_replay_pack(config);
  });
}
