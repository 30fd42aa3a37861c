#include <gtest/gtest.h>

#include <fstream>
#include <random>

#include "test_support.hpp"
#include "vfkit/dataset.hpp"
#include "vfkit/util/format.hpp"
#include "vfkit/util/hash.hpp"

namespace vfkit {
namespace {

using testing::TempWorkdir;

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);)
    if (!line.empty()) ++n;
  return n;
}

void write(const fs::path& p, std::string_view text) { util::write_file(p, text); }

TEST(LoadCorpus, EmptyDirectory) {
  TempWorkdir dir("corpus");
  const auto c = load_corpus(dir.path());
  EXPECT_TRUE(c.empty());
  EXPECT_TRUE(c.solutions.empty());
  EXPECT_THROW(load_corpus(dir.path() / "missing"), ConfigError);
}

TEST(LoadCorpus, ToyCorpus) {
  const auto root = testing::toy_corpus();
  const auto c = load_corpus(root);
  EXPECT_EQ(c.problems.size(), count_lines(root / "problems.jsonl"));
  EXPECT_EQ(c.solutions.size(), count_lines(root / "solutions.jsonl"));
  EXPECT_EQ(c.pairs.size(), count_lines(root / "pairs.jsonl"));
  EXPECT_EQ(c.problems.size(), 3U);
  for (const auto& p : c.problems) {
    ASSERT_NE(c.ground_truth(p), nullptr) << p.id;
    EXPECT_GE(c.solutions_of(p.id, SolutionKind::correct_human).size(), 3U);
    EXPECT_GE(c.solutions_of(p.id, SolutionKind::wrong_human).size(), 4U);
  }
  EXPECT_EQ(c.problem("avg").checker, Checker::floating(1e-6));
  EXPECT_EQ(c.problem("sum").time_limit_ms, 500);
  EXPECT_THROW(c.problem("nope"), ReferenceError);
  EXPECT_EQ(load_corpus(root), c);
}

TEST(LoadCorpus, PairsAreMostRecentFirst) {
  const auto c = load_corpus(testing::toy_corpus());
  const auto pairs = c.pairs_of("sum");
  ASSERT_EQ(pairs.size(), 3U);
  EXPECT_EQ(pairs[0].wrong.id, "sum-w4");
  EXPECT_EQ(pairs[2].wrong.id, "sum-w1");
  EXPECT_EQ(pairs[0].corrected.kind, SolutionKind::correct_human);
}

class SmallCorpus : public ::testing::Test {
 protected:
  TempWorkdir dir{"corpus"};
  void SetUp() override {
    write(dir.path() / "problems.jsonl", R"j({"id": "p1", "ground_truth": "g1"})j"
                                         "\n");
    write(dir.path() / "solutions.jsonl",
          R"j({"id": "g1", "problem_id": "p1", "kind": "ground_truth", "language": "python", "source": "print(1)"})j"
          "\n"
          R"j({"id": "w1", "problem_id": "p1", "kind": "wrong_human", "language": "python", "source": "print(2)", "verdict": "WA"})j"
          "\n");
  }
};

TEST_F(SmallCorpus, LoadsWithDefaults) {
  const auto c = load_corpus(dir.path());
  const auto& p = c.problem("p1");
  EXPECT_EQ(p.difficulty, Difficulty::medium);
  EXPECT_EQ(p.time_limit_ms, 2000);
  EXPECT_EQ(p.checker, Checker::token());
  EXPECT_EQ(c.find_solution("w1")->recorded_verdict, Verdict::WA);
}

TEST_F(SmallCorpus, DanglingReferenceNamesTheId) {
  std::ofstream(dir.path() / "solutions.jsonl", std::ios::app)
      << R"j({"id": "x", "problem_id": "ghost", "kind": "correct_human", "language": "python", "source": "pass"})j"
      << "\n";
  try {
    load_corpus(dir.path());
    FAIL();
  } catch (const ReferenceError& e) {
    EXPECT_NE(std::string(e.what()).find("ghost"), std::string::npos);
  }
}

TEST_F(SmallCorpus, DuplicateIds) {
  std::ofstream(dir.path() / "solutions.jsonl", std::ios::app)
      << R"j({"id": "w1", "problem_id": "p1", "kind": "correct_human", "language": "python", "source": "pass"})j"
      << "\n";
  EXPECT_THROW(load_corpus(dir.path()), DuplicateIdError);
}

TEST_F(SmallCorpus, ParseErrorCarriesLineNumber) {
  std::ofstream(dir.path() / "solutions.jsonl", std::ios::app) << "{not json\n";
  try {
    load_corpus(dir.path());
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("solutions.jsonl:3"), std::string::npos) << e.what();
  }
}

TEST_F(SmallCorpus, WrongSolutionNeedsVerdict) {
  std::ofstream(dir.path() / "solutions.jsonl", std::ios::app)
      << R"j({"id": "w2", "problem_id": "p1", "kind": "wrong_human", "language": "python", "source": "pass"})j" << "\n";
  EXPECT_THROW(load_corpus(dir.path()), ParseError);
}

TEST_F(SmallCorpus, CompileErrorSubmissionsAreSkipped) {
  std::ofstream(dir.path() / "solutions.jsonl", std::ios::app)
      << R"j({"id": "w2", "problem_id": "p1", "kind": "wrong_human", "language": "cpp", "source": "x", "verdict": "CE"})j"
      << "\n"
      << R"j({"id": "c1", "problem_id": "p1", "kind": "correct_human", "language": "python", "source": "print(1)"})j"
      << "\n";
  write(dir.path() / "pairs.jsonl", R"j({"problem_id": "p1", "wrong": "w2", "corrected": "c1"})j"
                                    "\n");
  const auto c = load_corpus(dir.path());
  EXPECT_EQ(c.skipped_compile_errors, 1U);
  EXPECT_EQ(c.find_solution("w2"), nullptr);
  EXPECT_TRUE(c.pairs.empty());
}

TEST_F(SmallCorpus, SaveLoadRoundTrip) {
  auto c = load_corpus(dir.path());
  c.problems[0].checker = Checker::custom("python", "import sys\nsys.exit(0)\n");
  c.problems[0].sampler = "int:1:5";
  TempWorkdir out("corpus-out");
  save_corpus(c, out.path());
  EXPECT_EQ(load_corpus(out.path()), c);
}

TEST(ValidateCorpus, Flags) {
  Corpus c;
  Problem bare;
  bare.id = "bare";
  c.problems.push_back(bare);
  Problem rich = bare;
  rich.id = "rich";
  rich.ground_truth = "g";
  c.problems.push_back(rich);
  c.solutions.push_back(testing::python_solution("g", "rich", "pass", SolutionKind::ground_truth));
  for (int i = 0; i < 10; ++i)
    c.solutions.push_back(testing::python_solution("c" + std::to_string(i), "rich", "pass", SolutionKind::correct_human));
  for (int i = 0; i < 5; ++i) {
    c.solutions.push_back(testing::python_solution("w" + std::to_string(i), "rich", "pass"));
    c.pairs.push_back({"rich", c.solutions.back(), c.solutions[static_cast<std::size_t>(1 + i)], true, i});
  }
  const auto r = validate_corpus(c);
  const auto* b = r.find("bare");
  ASSERT_NE(b, nullptr);
  EXPECT_FALSE(b->eligible_all());
  const auto has = [&](const std::string& flag) {
    return std::find(b->flags.begin(), b->flags.end(), flag) != b->flags.end();
  };
  EXPECT_TRUE(has("unusable for labeling: ground truth missing"));
  EXPECT_TRUE(has("metrics undefined: VAcc vacuous"));
  const auto* ok = r.find("rich");
  ASSERT_NE(ok, nullptr);
  EXPECT_TRUE(ok->eligible_all());
  EXPECT_TRUE(ok->flags.empty());
  EXPECT_EQ(to_json(r)["problems"][1]["n_pairs"], 5);
}

TEST(ValidateCorpus, ToyCorpusIsUsable) {
  const auto r = validate_corpus(load_corpus(testing::toy_corpus()));
  for (const auto& p : r.problems) {
    EXPECT_TRUE(p.eligible_all()) << p.problem_id;
    EXPECT_EQ(p.flags, std::vector<std::string>{"saga-multidim: fewer than 10 correct solutions"});
  }
}

TestSuite random_suite(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  TestSuite s;
  s.problem_id = "p";
  s.created_with_seed = static_cast<std::int64_t>(seed);
  for (std::size_t i = 0; i < n; ++i) {
    TestCase c;
    c.index = i;
    c.input.resize(rng() % 40);
    for (auto& ch : c.input) ch = static_cast<char>(rng() % 256);
    c.output = std::to_string(rng());
    c.provenance = static_cast<Provenance>(rng() % 5);
    if (rng() % 2) c.generator_record_id = "rec-" + std::to_string(i);
    s.cases.push_back(std::move(c));
  }
  return s;
}

TEST(Suite, RoundTrip) {
  TempWorkdir dir("suite");
  const auto s = random_suite(50, 4);
  save_suite(s, dir.path() / "s.jsonl");
  EXPECT_EQ(load_suite(dir.path() / "s.jsonl"), s);
  EXPECT_EQ(parse_suite(serialize_suite(TestSuite{})), TestSuite{});
}

TEST(Suite, BinaryBytesPreserved) {
  TestSuite s;
  s.problem_id = "p";
  s.cases.push_back({0, std::string("a\0b\r\n\x01", 6), std::string("\0", 1), Provenance::direct, {}});
  const auto back = parse_suite(serialize_suite(s));
  EXPECT_EQ(back.cases[0].input, std::string("a\0b\r\n\x01", 6));
  EXPECT_EQ(back.cases[0].output.size(), 1U);
}

TEST(Suite, ShuffledIndicesRejected) {
  auto text = serialize_suite(random_suite(3, 1));
  auto lines = util::split(text, '\n');
  std::swap(lines[1], lines[2]);
  std::string shuffled;
  for (const auto& l : lines)
    if (!l.empty()) shuffled += l + "\n";
  try {
    parse_suite(shuffled);
    FAIL();
  } catch (const InvariantError& e) {
    EXPECT_NE(std::string(e.what()).find("index gap/duplicate"), std::string::npos);
  }
  const auto count_off = serialize_suite(random_suite(3, 1));
  EXPECT_THROW(parse_suite(count_off.substr(0, count_off.rfind('{'))), InvariantError);
}

TEST(Suite, ToyFixturesLoad) {
  const auto s = load_suite(testing::toy_corpus() / "suites" / "sum.suite.jsonl");
  EXPECT_EQ(s.problem_id, "sum");
  ASSERT_EQ(s.size(), 6U);
  EXPECT_EQ(s.cases[2].input, "2000000000 2000000000\n");
}

TEST(Suite, UnionDropsRepeatedInputs) {
  TestSuite a, b;
  a.problem_id = b.problem_id = "p";
  a.cases = {{0, "1\n", "1\n", Provenance::direct, {}}, {1, "2\n", "2\n", Provenance::direct, {}}};
  b.cases = {{0, "2\n", "2\n", Provenance::saga_multidim, {}}, {1, "3\n", "3\n", Provenance::saga_multidim, {}}};
  const auto u = union_suites(a, b);
  ASSERT_EQ(u.size(), 3U);
  EXPECT_EQ(u.cases[1].provenance, Provenance::direct);
  EXPECT_EQ(u.cases[2].index, 2U);
  TestSuite other;
  other.problem_id = "q";
  EXPECT_THROW(union_suites(a, other), DomainError);
}

TEST(Hashing, KnownVectors) {
  EXPECT_EQ(util::sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_EQ(util::base64_encode("foob"), "Zm9vYg==");
  EXPECT_EQ(util::base64_decode("Zm9vYg=="), "foob");
  EXPECT_EQ(util::base64_decode(""), "");
  EXPECT_THROW(util::base64_decode("Zm9v!g=="), DomainError);
  std::mt19937_64 rng(1);
  for (int t = 0; t < 100; ++t) {
    std::string s(rng() % 50, '\0');
    for (auto& c : s) c = static_cast<char>(rng());
    EXPECT_EQ(util::base64_decode(util::base64_encode(s)), s);
  }
  EXPECT_NE(util::derive_seed(1, "a", 0), util::derive_seed(1, "a", 1));
  EXPECT_EQ(util::derive_seed(1, "a", 0), util::derive_seed(1, "a", 0));
}

}  // namespace
}  // namespace vfkit
