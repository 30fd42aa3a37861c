#ifndef VFKIT_EXEC_HPP
#define VFKIT_EXEC_HPP

/**
 * \file
 * \brief Compile-and-run sandbox with CPU/wall/memory limits and output checkers.
 *
 * Every run gets a fresh working directory under the executor's workdir. Commands
 * come from a toolchain map (language -> compile/run templates with `{src}`,
 * `{bin}` and `{dir}` placeholders) and are started through `/bin/sh -c exec ...`
 * in their own process group so a limit breach kills the whole tree.
 */

#include <fcntl.h>
#include <sched.h>
#include <signal.h>
#include <sys/resource.h>
#include <sys/syscall.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "vfkit/dataset.hpp"
#include "vfkit/error.hpp"
#include "vfkit/util/fs.hpp"
#include "vfkit/util/hash.hpp"
#include "vfkit/util/parallel.hpp"
#include "vfkit/verdict.hpp"

namespace vfkit {

struct Limits {
  int time_limit_ms = 2000;
  int wall_limit_ms = 4000;
  int memory_limit_mb = 256;

  /// Problem limits with the wall clock at twice the CPU budget.
  static Limits for_problem(const Problem& p) {
    return {p.time_limit_ms, 2 * p.time_limit_ms, p.memory_limit_mb};
  }
  /// Limits for generator and validator scripts.
  static Limits for_scripts() { return {10000, 20000, 512}; }

  void validate() const {
    if (time_limit_ms <= 0 || memory_limit_mb <= 0) throw DomainError("limits must be positive");
    if (wall_limit_ms < time_limit_ms) throw DomainError("wall_limit_ms must be >= time_limit_ms");
  }
};

struct ToolchainEntry {
  std::optional<std::string> compile;  ///< none for interpreted languages
  std::string run;
  std::string source_name;
};

/// Language tag -> command templates.
class Toolchain {
 public:
  static Toolchain defaults() {
    Toolchain t;
    t.entries_["cpp"] = {"g++ -std=gnu++17 -O2 -pipe -o {bin} {src}", "{bin}", "main.cpp"};
    t.entries_["python"] = {std::nullopt, "python3 {src}", "main.py"};
    return t;
  }

  /// Reads `{"cpp": {"compile": "...", "run": "...", "source_name": "main.cpp"}, ...}`
  /// and overlays it field by field on the defaults.
  static Toolchain from_json(const nlohmann::json& j) {
    Toolchain t = defaults();
    if (!j.is_object()) throw ConfigError("toolchain config must be an object");
    for (const auto& [lang, e] : j.items()) {
      const auto base = t.entries_.find(lang);
      const bool known = base != t.entries_.end();
      ToolchainEntry entry = known ? base->second : ToolchainEntry{std::nullopt, "", "main." + lang};
      if (e.contains("compile")) {
        if (e["compile"].is_null()) entry.compile.reset();
        else entry.compile = e["compile"].get<std::string>();
      }
      if (e.contains("run")) entry.run = e["run"].get<std::string>();
      else if (!known) throw ConfigError("toolchain entry '" + lang + "' lacks a run template");
      if (e.contains("source_name")) entry.source_name = e["source_name"].get<std::string>();
      t.entries_[lang] = std::move(entry);
    }
    return t;
  }

  static Toolchain load(const fs::path& path) {
    try {
      return from_json(nlohmann::json::parse(util::read_file(path)));
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("invalid toolchain file " + path.string() + ": " + e.what());
    }
  }

  [[nodiscard]] const ToolchainEntry& entry(std::string_view language) const {
    auto it = entries_.find(std::string(language));
    if (it == entries_.end()) throw ConfigError("no toolchain configured for language '" + std::string(language) + "'");
    return it->second;
  }

  void set(std::string language, ToolchainEntry e) { entries_[std::move(language)] = std::move(e); }

  [[nodiscard]] nlohmann::json to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [lang, e] : entries_) {
      j[lang] = {{"run", e.run}, {"source_name", e.source_name}};
      j[lang]["compile"] = e.compile ? nlohmann::json(*e.compile) : nlohmann::json(nullptr);
    }
    return j;
  }

 private:
  std::map<std::string, ToolchainEntry> entries_;
};

struct RunResult {
  Verdict verdict = Verdict::AC;  ///< AC here means "exited cleanly", not yet checked
  std::string stdout_data;
  std::string stderr_excerpt;
  int cpu_time_ms = 0;
  int wall_time_ms = 0;
  int peak_memory_mb = 0;
  int exit_code = 0;
  int term_signal = 0;
};

struct CompiledProgram {
  std::string hash;
  std::string language;
  fs::path dir;
  fs::path src;
  fs::path bin;
  std::string run_template;
};

struct CompileOutcome {
  std::optional<CompiledProgram> program;
  std::string diagnostics;
  [[nodiscard]] bool ok() const noexcept { return program.has_value(); }
};

namespace detail {

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') out += "'\\''";
    else out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

inline std::string expand_template(std::string templ, const fs::path& src, const fs::path& bin, const fs::path& dir) {
  const std::pair<std::string_view, std::string> subs[] = {
      {"{src}", shell_quote(src.string())}, {"{bin}", shell_quote(bin.string())}, {"{dir}", shell_quote(dir.string())}};
  for (const auto& [key, value] : subs) {
    for (std::size_t pos = templ.find(key); pos != std::string::npos; pos = templ.find(key, pos + value.size()))
      templ.replace(pos, key.size(), value);
  }
  return templ;
}

struct ProcessStats {
  int exit_code = -1;
  int term_signal = 0;
  bool killed_for_limit = false;
  long cpu_ms = 0;
  long wall_ms = 0;
  long max_rss_kb = 0;
};

inline long proc_cpu_ms(pid_t pid) {
  static const long ticks = ::sysconf(_SC_CLK_TCK);
  char path[64];
  std::snprintf(path, sizeof path, "/proc/%d/stat", static_cast<int>(pid));
  const int fd = ::open(path, O_RDONLY | O_CLOEXEC);
  if (fd < 0) return 0;
  char buf[1024];
  const ssize_t n = ::read(fd, buf, sizeof buf - 1);
  ::close(fd);
  if (n <= 0) return 0;
  buf[n] = '\0';
  // Fields after the parenthesised command name; utime and stime are fields 14 and 15.
  const char* p = std::strrchr(buf, ')');
  if (p == nullptr) return 0;
  ++p;
  long utime = 0, stime = 0;
  int field = 2;
  while (*p != '\0' && field < 15) {
    while (*p == ' ') ++p;
    ++field;
    const char* start = p;
    while (*p != ' ' && *p != '\0') ++p;
    if (field == 14) std::from_chars(start, p, utime);
    if (field == 15) std::from_chars(start, p, stime);
  }
  return (utime + stime) * 1000 / ticks;
}

/// Forks `/bin/sh -c "exec <command>"` with stdio redirected to files and waits
/// under the given limits. Throws InfraError when the process cannot be started.
inline ProcessStats run_process(const std::string& command, const fs::path& cwd, const fs::path& stdin_path,
                                const fs::path& stdout_path, const fs::path& stderr_path, const Limits& limits,
                                bool limit_memory, bool isolate_network) {
  const std::string shell_cmd = "exec " + command;
  const std::string cwd_s = cwd.string(), in_s = stdin_path.string(), out_s = stdout_path.string(),
                    err_s = stderr_path.string();
  const rlim_t cpu_s = static_cast<rlim_t>((limits.time_limit_ms + 999) / 1000 + 1);
  const rlim_t mem_bytes = static_cast<rlim_t>(limits.memory_limit_mb) * 1024 * 1024;

  const auto start = std::chrono::steady_clock::now();
  const pid_t pid = ::fork();
  if (pid < 0) throw InfraError("fork failed");
  if (pid == 0) {
    ::setpgid(0, 0);
    if (isolate_network) ::unshare(CLONE_NEWUSER | CLONE_NEWNET);
    if (::chdir(cwd_s.c_str()) != 0) ::_exit(126);
    const int in = ::open(in_s.c_str(), O_RDONLY);
    const int out = ::open(out_s.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    const int err = ::open(err_s.c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (in < 0 || out < 0 || err < 0) ::_exit(126);
    ::dup2(in, 0);
    ::dup2(out, 1);
    ::dup2(err, 2);
    if (::syscall(SYS_close_range, 3U, ~0U, 0U) != 0) {
      for (int fd = 3; fd < 4096; ++fd) ::close(fd);
    }
    rlimit rl{cpu_s, cpu_s + 1};
    ::setrlimit(RLIMIT_CPU, &rl);
    if (limit_memory) {
      rl = {mem_bytes, mem_bytes};
      ::setrlimit(RLIMIT_AS, &rl);
    }
    rl = {rlim_t{256} << 20, rlim_t{256} << 20};
    ::setrlimit(RLIMIT_FSIZE, &rl);
    rl = {0, 0};
    ::setrlimit(RLIMIT_CORE, &rl);
    ::signal(SIGPIPE, SIG_DFL);
    ::execl("/bin/sh", "sh", "-c", shell_cmd.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::setpgid(pid, pid);

  ProcessStats stats;
  int status = 0;
  rusage usage{};
  auto nap = std::chrono::microseconds(500);
  for (;;) {
    const pid_t r = ::wait4(pid, &status, WNOHANG, &usage);
    if (r == pid) break;
    if (r < 0 && errno != EINTR) throw InfraError("wait4 failed");
    const auto elapsed =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count();
    if (elapsed > limits.wall_limit_ms || proc_cpu_ms(pid) > limits.time_limit_ms) {
      stats.killed_for_limit = true;
      ::kill(-pid, SIGKILL);
      ::kill(pid, SIGKILL);
      while (::wait4(pid, &status, 0, &usage) < 0 && errno == EINTR) {
      }
      break;
    }
    std::this_thread::sleep_for(nap);
    nap = std::min(nap * 2, std::chrono::microseconds(10000));
  }
  ::kill(-pid, SIGKILL);  // stray descendants
  stats.wall_ms = static_cast<long>(
      std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start).count());
  stats.cpu_ms = usage.ru_utime.tv_sec * 1000L + usage.ru_utime.tv_usec / 1000 + usage.ru_stime.tv_sec * 1000L +
                 usage.ru_stime.tv_usec / 1000;
  stats.max_rss_kb = usage.ru_maxrss;
  if (WIFEXITED(status)) stats.exit_code = WEXITSTATUS(status);
  if (WIFSIGNALED(status)) stats.term_signal = WTERMSIG(status);
  return stats;
}

inline std::string excerpt(const fs::path& p, std::size_t max_bytes) {
  std::ifstream in(p, std::ios::binary);
  std::string s(max_bytes, '\0');
  in.read(s.data(), static_cast<std::streamsize>(max_bytes));
  s.resize(static_cast<std::size_t>(in.gcount()));
  return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Checkers

inline bool is_ascii_space(char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

inline std::vector<std::string_view> split_tokens(std::string_view s) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_ascii_space(s[i])) ++i;
    const std::size_t start = i;
    while (i < s.size() && !is_ascii_space(s[i])) ++i;
    if (i > start) tokens.push_back(s.substr(start, i - start));
  }
  return tokens;
}

inline bool token_equal(std::string_view actual, std::string_view expected) {
  return split_tokens(actual) == split_tokens(expected);
}

inline std::optional<double> parse_number(std::string_view tok) {
  if (tok.empty()) return std::nullopt;
  const char c = tok.front();
  if (!(c == '-' || c == '+' || c == '.' || (c >= '0' && c <= '9'))) return std::nullopt;
  if (c == '+') tok.remove_prefix(1);
  double v = 0;
  const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || ptr != tok.data() + tok.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

/// Numeric tokens match when |a-b| <= eps * max(1, |b|); other tokens must be identical.
inline bool float_equal(std::string_view actual, std::string_view expected, double eps) {
  const auto a = split_tokens(actual);
  const auto b = split_tokens(expected);
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == b[i]) continue;
    const auto x = parse_number(a[i]);
    const auto y = parse_number(b[i]);
    if (!x || !y) return false;
    if (std::fabs(*x - *y) > eps * std::max(1.0, std::fabs(*y))) return false;
  }
  return true;
}

/// Token and float checking. Custom checkers need an Executor.
inline bool check_output(std::string_view actual, std::string_view expected, const Checker& checker) {
  switch (checker.kind) {
    case Checker::Kind::token: return token_equal(actual, expected);
    case Checker::Kind::floating: return float_equal(actual, expected, checker.epsilon);
    case Checker::Kind::custom: break;
  }
  throw ConfigError("custom checkers run through Executor::check_output");
}

// ---------------------------------------------------------------------------

class Executor {
 public:
  struct Options {
    fs::path workdir = util::default_workdir();
    std::size_t parallelism = util::default_parallelism();
    Toolchain toolchain = Toolchain::defaults();
    Limits compile_limits{60000, 120000, 4096};
    bool isolate_network = false;
  };

  Executor() : Executor(Options{}) {}
  explicit Executor(Options opts) : opts_(std::move(opts)) {
    std::error_code ec;
    fs::create_directories(opts_.workdir / "cache", ec);
    fs::create_directories(opts_.workdir / "runs", ec);
    if (!fs::is_directory(opts_.workdir / "runs")) throw InfraError("cannot create workdir " + opts_.workdir.string());
  }

  [[nodiscard]] const Options& options() const noexcept { return opts_; }
  [[nodiscard]] std::size_t parallelism() const noexcept { return opts_.parallelism; }
  void set_parallelism(std::size_t p) noexcept { opts_.parallelism = std::max<std::size_t>(1, p); }
  /// Number of times a compiler process was actually started.
  [[nodiscard]] std::size_t compiler_invocations() const noexcept { return compiler_invocations_.load(); }

  /// Compiles (or stages, for interpreted languages) a source. Results are cached
  /// in memory and on disk by content hash of language, compile template and source.
  CompileOutcome compile(std::string_view language, std::string_view source) {
    const ToolchainEntry& tc = opts_.toolchain.entry(language);
    std::string key_material = std::string(language) + '\0' + tc.compile.value_or("") + '\0' + tc.source_name + '\0';
    key_material.append(source);
    const std::string hash = util::sha256_hex(key_material);

    std::promise<CompileOutcome> promise;
    std::shared_future<CompileOutcome> fut;
    bool owner = false;
    {
      std::lock_guard lock(cache_mu_);
      auto it = cache_.find(hash);
      if (it == cache_.end()) {
        fut = promise.get_future().share();
        cache_.emplace(hash, fut);
        owner = true;
      } else {
        fut = it->second;
      }
    }
    if (owner) {
      try {
        promise.set_value(compile_uncached(hash, std::string(language), tc, source));
      } catch (...) {
        {
          std::lock_guard lock(cache_mu_);
          cache_.erase(hash);
        }
        promise.set_exception(std::current_exception());
      }
    }
    return fut.get();
  }

  CompileOutcome compile(const Solution& s) { return compile(s.language, s.source); }

  /// Runs a program once on `input` in a fresh directory.
  /// Verdict is TLE, RE or AC (clean exit, output not yet checked).
  RunResult run_one(const CompiledProgram& program, std::string_view input, const Limits& limits,
                    std::span<const std::string> extra_args = {}) {
    limits.validate();
    util::TempDir dir(opts_.workdir / "runs");
    const fs::path in = dir.path() / "input.txt";
    const fs::path out = dir.path() / "stdout.txt";
    const fs::path err = dir.path() / "stderr.txt";
    util::write_file(in, input);
    std::string cmd = detail::expand_template(program.run_template, program.src, program.bin, program.dir);
    for (const auto& a : extra_args) cmd += " " + detail::shell_quote(a);
    const auto st = detail::run_process(cmd, dir.path(), in, out, err, limits, true, opts_.isolate_network);

    RunResult r;
    r.cpu_time_ms = static_cast<int>(st.cpu_ms);
    r.wall_time_ms = static_cast<int>(st.wall_ms);
    r.peak_memory_mb = static_cast<int>((st.max_rss_kb + 1023) / 1024);
    r.exit_code = st.exit_code;
    r.term_signal = st.term_signal;
    r.stdout_data = util::read_file(out);
    r.stderr_excerpt = detail::excerpt(err, 4096);
    if (st.exit_code == 127 && st.cpu_ms < 50 && r.stderr_excerpt.find("not found") != std::string::npos)
      throw InfraError("sandbox could not start command: " + cmd + ": " + r.stderr_excerpt);
    if (st.killed_for_limit || st.term_signal == SIGXCPU || st.cpu_ms > limits.time_limit_ms) {
      r.verdict = Verdict::TLE;
    } else if (st.term_signal != 0 || st.exit_code != 0) {
      r.verdict = Verdict::RE;
    } else {
      r.verdict = Verdict::AC;
    }
    return r;
  }

  /// Full check including custom checker programs. The checker is called as
  /// `<run command> <input file> <expected file> <actual file>`; exit 0 accepts,
  /// 1 rejects, anything else is an infrastructure error.
  bool check_output(std::string_view actual, std::string_view expected, std::string_view input,
                    const Checker& checker) {
    if (checker.kind != Checker::Kind::custom) return vfkit::check_output(actual, expected, checker);
    const auto compiled = compile(checker.language, checker.source);
    if (!compiled.ok()) throw InfraError("custom checker failed to compile: " + compiled.diagnostics);
    util::TempDir files(opts_.workdir / "runs", "chk");
    const fs::path in = files.path() / "input.txt", exp = files.path() / "expected.txt",
                   act = files.path() / "actual.txt";
    util::write_file(in, input);
    util::write_file(exp, expected);
    util::write_file(act, actual);
    const std::string args[] = {in.string(), exp.string(), act.string()};
    const auto r = run_one(*compiled.program, "", Limits::for_scripts(), args);
    if (r.verdict == Verdict::AC) return true;
    if (r.verdict == Verdict::RE && r.term_signal == 0 && r.exit_code == 1) return false;
    throw InfraError("custom checker failed (exit " + std::to_string(r.exit_code) + ", signal " +
                     std::to_string(r.term_signal) + ")");
  }

  /// Judges one already-compiled program on one case.
  Verdict judge(const CompiledProgram& program, const TestCase& c, const Problem& problem) {
    const auto r = run_one(program, c.input, Limits::for_problem(problem));
    if (r.verdict != Verdict::AC) return r.verdict;
    return check_output(r.stdout_data, c.output, c.input, problem.checker) ? Verdict::AC : Verdict::WA;
  }

  /// Per-case verdicts in case order. A compile error yields an all-CE vector.
  VerdictVector run_suite(const Solution& solution, const TestSuite& suite, const Problem& problem) {
    VerdictVector verdicts(suite.size(), Verdict::CE);
    if (suite.cases.empty()) return verdicts;
    const auto compiled = compile(solution);
    if (!compiled.ok()) return verdicts;
    util::parallel_for(suite.size(), opts_.parallelism,
                       [&](std::size_t i) { verdicts[i] = judge(*compiled.program, suite.cases[i], problem); });
    return verdicts;
  }

 private:
  CompileOutcome compile_uncached(const std::string& hash, const std::string& language, const ToolchainEntry& tc,
                                  std::string_view source) {
    const fs::path final_dir = opts_.workdir / "cache" / hash;
    if (auto cached = load_cached(final_dir, hash, language, tc)) return *cached;

    util::TempDir staging(opts_.workdir / "cache", ".stage-" + hash.substr(0, 12));
    const fs::path src = staging.path() / tc.source_name;
    util::write_file(src, source);
    std::string status = "ok";
    std::string diagnostics;
    if (tc.compile) {
      const fs::path bin = staging.path() / "prog";
      const std::string cmd = detail::expand_template(*tc.compile, src, bin, staging.path());
      const fs::path devnull = staging.path() / ".empty";
      util::write_file(devnull, "");
      const fs::path out = staging.path() / ".compile.out";
      ++compiler_invocations_;
      const auto st = detail::run_process(cmd, staging.path(), devnull, out, out, opts_.compile_limits, false, false);
      diagnostics = detail::excerpt(out, 16384);
      if (st.exit_code == 127 && diagnostics.find("not found") != std::string::npos)
        throw ConfigError("toolchain for '" + language + "' is missing: " + diagnostics);
      if (st.killed_for_limit || st.exit_code != 0 || st.term_signal != 0 || !fs::exists(bin)) {
        status = "ce";
        if (diagnostics.empty()) diagnostics = "compiler exited with status " + std::to_string(st.exit_code);
      }
      std::error_code ec;
      fs::remove(devnull, ec);
      fs::remove(out, ec);
    }
    util::write_file(staging.path() / ".diagnostics", diagnostics);
    util::write_file(staging.path() / ".status", status);
    std::error_code ec;
    fs::rename(staging.path(), final_dir, ec);  // loses the race harmlessly if another process won
    if (auto cached = load_cached(final_dir, hash, language, tc)) return *cached;
    throw InfraError("cannot populate compile cache at " + final_dir.string());
  }

  std::optional<CompileOutcome> load_cached(const fs::path& dir, const std::string& hash, const std::string& language,
                                            const ToolchainEntry& tc) const {
    if (!fs::exists(dir / ".status")) return std::nullopt;
    CompileOutcome out;
    out.diagnostics = util::read_file(dir / ".diagnostics");
    if (util::read_file(dir / ".status") == "ok") {
      out.program = CompiledProgram{hash, language, dir, dir / tc.source_name, dir / "prog", tc.run};
    }
    return out;
  }

  Options opts_;
  std::mutex cache_mu_;
  std::map<std::string, std::shared_future<CompileOutcome>> cache_;
  std::atomic<std::size_t> compiler_invocations_{0};
};

}  // namespace vfkit

#endif  // VFKIT_EXEC_HPP
