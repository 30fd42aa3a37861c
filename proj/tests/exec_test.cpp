#include <gtest/gtest.h>

#include "test_support.hpp"
#include "vfkit/exec.hpp"

namespace vfkit {
namespace {

constexpr const char* kCatCpp = R"(#include <iostream>
int main() { std::cout << std::cin.rdbuf(); }
)";

constexpr const char* kSpinCpp = R"(int main() { volatile unsigned long x = 0; for (;;) ++x; }
)";

constexpr const char* kDivZeroCpp = R"(#include <cstdio>
int main() { int a = 0, b = 7; if (std::scanf("%d", &a) != 1) a = 0; std::printf("%d\n", b / a); }
)";

class ExecTest : public ::testing::Test {
 protected:
  Executor exec{testing::executor_options()};

  CompiledProgram must_compile(std::string_view lang, std::string_view src) {
    auto c = exec.compile(lang, src);
    EXPECT_TRUE(c.ok()) << c.diagnostics;
    return *c.program;
  }
};

TEST_F(ExecTest, CompileSuccessAndCacheHit) {
  const auto before = exec.compiler_invocations();
  auto first = exec.compile("cpp", kCatCpp);
  ASSERT_TRUE(first.ok()) << first.diagnostics;
  const auto after_first = exec.compiler_invocations();
  EXPECT_LE(after_first, before + 1);
  auto second = exec.compile("cpp", kCatCpp);
  ASSERT_TRUE(second.ok());
  EXPECT_EQ(exec.compiler_invocations(), after_first);
  EXPECT_EQ(first.program->hash, second.program->hash);

  // A fresh executor over the same workdir finds the disk cache.
  Executor again(testing::executor_options());
  ASSERT_TRUE(again.compile("cpp", kCatCpp).ok());
  EXPECT_EQ(again.compiler_invocations(), 0U);
}

TEST_F(ExecTest, SyntaxErrorIsCompileError) {
  const auto c = exec.compile("cpp", "int main( { return 0; }\n");
  EXPECT_FALSE(c.ok());
  EXPECT_FALSE(c.diagnostics.empty());
  const auto again = exec.compile("cpp", "int main( { return 0; }\n");
  EXPECT_FALSE(again.ok());
  EXPECT_EQ(again.diagnostics, c.diagnostics);
}

TEST_F(ExecTest, CatEchoesInput) {
  const auto prog = must_compile("cpp", kCatCpp);
  const auto r = exec.run_one(prog, "42\n", Limits{});
  EXPECT_EQ(r.verdict, Verdict::AC);
  EXPECT_EQ(r.stdout_data, "42\n");
  EXPECT_EQ(r.exit_code, 0);
  const std::string binary("a\0b\n\xff", 5);
  EXPECT_EQ(exec.run_one(prog, binary, Limits{}).stdout_data, binary);
}

TEST_F(ExecTest, InfiniteLoopIsTimeLimitExceeded) {
  const auto prog = must_compile("cpp", kSpinCpp);
  const Limits lim{500, 1000, 256};
  const auto r = exec.run_one(prog, "", lim);
  EXPECT_EQ(r.verdict, Verdict::TLE);
  EXPECT_GE(r.cpu_time_ms, 500);
}

TEST_F(ExecTest, SleepingProgramHitsWallLimit) {
  const auto prog = must_compile("python", "import time\ntime.sleep(30)\n");
  const auto r = exec.run_one(prog, "", Limits{500, 800, 256});
  EXPECT_EQ(r.verdict, Verdict::TLE);
  EXPECT_LT(r.wall_time_ms, 10000);
}

TEST_F(ExecTest, DivideByZeroIsRuntimeError) {
  const auto prog = must_compile("cpp", kDivZeroCpp);
  const auto r = exec.run_one(prog, "0\n", Limits{});
  EXPECT_EQ(r.verdict, Verdict::RE);
  EXPECT_EQ(r.term_signal, SIGFPE);
  EXPECT_EQ(exec.run_one(prog, "7\n", Limits{}).stdout_data, "1\n");
  const auto py = must_compile("python", "print(1 // int(input()))\n");
  const auto rp = exec.run_one(py, "0\n", Limits{});
  EXPECT_EQ(rp.verdict, Verdict::RE);
  EXPECT_NE(rp.stderr_excerpt.find("ZeroDivisionError"), std::string::npos);
}

TEST_F(ExecTest, MemoryLimitFailsTheRun) {
  const auto prog = must_compile("python", "x = bytearray(600 * 1024 * 1024)\nprint(len(x))\n");
  EXPECT_EQ(exec.run_one(prog, "", Limits{2000, 4000, 128}).verdict, Verdict::RE);
}

TEST_F(ExecTest, MissingToolchainIsConfigError) {
  EXPECT_THROW(exec.compile("brainfuck", "+"), ConfigError);
  auto opts = testing::executor_options();
  opts.toolchain.set("ghost", {std::nullopt, "definitely-not-a-real-binary-xyz {src}", "main.g"});
  Executor e(opts);
  const auto c = e.compile("ghost", "x");
  ASSERT_TRUE(c.ok());
  EXPECT_THROW(e.run_one(*c.program, "", Limits{}), InfraError);
}

TEST_F(ExecTest, LimitsValidation) {
  EXPECT_THROW(exec.run_one(must_compile("cpp", kCatCpp), "", Limits{0, 100, 256}), DomainError);
  Problem p = testing::simple_problem("p", 700);
  EXPECT_EQ(Limits::for_problem(p).wall_limit_ms, 1400);
}

TEST(Checkers, TokenAndFloat) {
  EXPECT_TRUE(check_output("1 2\n", "1  2", Checker::token()));
  EXPECT_FALSE(check_output("1 2 3", "1 2", Checker::token()));
  EXPECT_TRUE(check_output("\r\n1\t2\r\n", "1 2", Checker::token()));
  EXPECT_TRUE(check_output("0.30000001", "0.3", Checker::floating(1e-6)));
  EXPECT_FALSE(check_output("0.3001", "0.3", Checker::floating(1e-6)));
  EXPECT_TRUE(check_output("1000000.5", "1000000", Checker::floating(1e-6)));
  EXPECT_TRUE(check_output("YES 0.5", "YES 0.5000000001", Checker::floating(1e-6)));
  EXPECT_FALSE(check_output("NO 0.5", "YES 0.5", Checker::floating(1e-6)));
  EXPECT_FALSE(check_output("nan", "0.5", Checker::floating(1e-6)));
  EXPECT_THROW(check_output("a", "a", Checker::custom("python", "")), ConfigError);
}

TEST_F(ExecTest, CustomChecker) {
  // Accepts any permutation of the expected tokens.
  const std::string src =
      "import sys\n"
      "exp = open(sys.argv[2]).read().split()\n"
      "act = open(sys.argv[3]).read().split()\n"
      "sys.exit(0 if sorted(exp) == sorted(act) else 1)\n";
  const auto chk = Checker::custom("python", src);
  EXPECT_TRUE(exec.check_output("3 1 2", "1 2 3", "", chk));
  EXPECT_FALSE(exec.check_output("3 1 1", "1 2 3", "", chk));
  EXPECT_THROW(exec.check_output("x", "y", "", Checker::custom("python", "import sys\nsys.exit(3)\n")), InfraError);
}

TestSuite square_suite() {
  TestSuite s;
  s.problem_id = "sq";
  for (int i = 0; i < 6; ++i)
    s.cases.push_back({static_cast<std::size_t>(i), std::to_string(i) + "\n", std::to_string(i * i) + "\n",
                       Provenance::manual, {}});
  return s;
}

TEST_F(ExecTest, RunSuiteVerdicts) {
  const auto problem = testing::simple_problem("sq");
  const auto suite = square_suite();
  const auto gt = testing::python_solution("gt", "sq", "x = int(input())\nprint(x * x)\n", SolutionKind::ground_truth);
  EXPECT_EQ(exec.run_suite(gt, suite, problem), VerdictVector(6, Verdict::AC));

  const auto off = testing::python_solution("w", "sq", "x = int(input())\nprint(x * x + (x == 3))\n");
  EXPECT_EQ(exec.run_suite(off, suite, problem),
            (VerdictVector{Verdict::AC, Verdict::AC, Verdict::AC, Verdict::WA, Verdict::AC, Verdict::AC}));

  TestSuite empty;
  EXPECT_TRUE(exec.run_suite(gt, empty, problem).empty());

  Solution ce = gt;
  ce.language = "cpp";
  ce.source = "not c++";
  EXPECT_EQ(exec.run_suite(ce, suite, problem), VerdictVector(6, Verdict::CE));
}

TEST_F(ExecTest, RaisingTimeLimitNeverCreatesTimeouts) {
  const auto suite = square_suite();
  const auto slow = testing::python_solution(
      "slow", "sq", "x = int(input())\ns = 0\nfor i in range(x * 150000): s += 1\nprint(x * x)\n");
  const auto tight = exec.run_suite(slow, suite, testing::simple_problem("sq", 100));
  const auto loose = exec.run_suite(slow, suite, testing::simple_problem("sq", 3000));
  for (std::size_t i = 0; i < suite.size(); ++i)
    if (tight[i] == Verdict::AC) EXPECT_NE(loose[i], Verdict::TLE) << i;
  EXPECT_EQ(loose, VerdictVector(6, Verdict::AC));
}

TEST(ExecIsolation, SameVerdictsAcrossParallelism) {
  const auto problem = testing::simple_problem("sq", 300);
  const auto suite = square_suite();
  // Writes into its working directory and reads it back; shared directories would collide.
  const auto sol = testing::python_solution(
      "files", "sq",
      "x = int(input())\nopen('scratch', 'w').write(str(x))\nimport time\ntime.sleep(0.01)\n"
      "v = int(open('scratch').read())\nprint(v * v + (v == 4))\nif v == 5: 1 / 0\n");
  Executor serial(testing::executor_options(1));
  Executor wide(testing::executor_options(16));
  const auto expected = serial.run_suite(sol, suite, problem);
  EXPECT_EQ(expected,
            (VerdictVector{Verdict::AC, Verdict::AC, Verdict::AC, Verdict::AC, Verdict::WA, Verdict::RE}));
  for (int rep = 0; rep < 3; ++rep) EXPECT_EQ(wide.run_suite(sol, suite, problem), expected);
}

TEST(Toolchain, JsonOverlay) {
  auto t = Toolchain::from_json(nlohmann::json::parse(R"({"python": {"run": "python3 -S {src}"}})"));
  EXPECT_EQ(t.entry("python").run, "python3 -S {src}");
  EXPECT_EQ(t.entry("python").source_name, "main.py");
  EXPECT_TRUE(t.entry("cpp").compile.has_value());
  EXPECT_EQ(Toolchain::from_json(t.to_json()).to_json(), t.to_json());
  EXPECT_THROW(t.entry("cobol"), ConfigError);
}

TEST(Templates, Expansion) {
  EXPECT_EQ(detail::shell_quote("a b'c"), "'a b'\\''c'");
  EXPECT_EQ(detail::expand_template("{bin} < {src} in {dir}", "/s/main.py", "/s/prog", "/s"),
            "'/s/prog' < '/s/main.py' in '/s'");
}

}  // namespace
}  // namespace vfkit
