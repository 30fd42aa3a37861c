#ifndef VFKIT_KILLMATRIX_HPP
#define VFKIT_KILLMATRIX_HPP

/**
 * \file
 * \brief Tests x wrong-solutions detection matrix.
 *
 * Entry (i, j) is true when test i exposes wrong solution j, i.e. the solution's
 * verdict on case i is anything but AC. Rows are stored as packed 64-bit words so
 * row unions and distinct-row counting stay cheap.
 */

#include <algorithm>
#include <bit>
#include <cstdint>
#include <filesystem>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vfkit/dataset.hpp"
#include "vfkit/error.hpp"
#include "vfkit/exec.hpp"
#include "vfkit/util/fs.hpp"
#include "vfkit/util/format.hpp"
#include "vfkit/util/hash.hpp"

namespace vfkit {

/// One kill-matrix row: which wrong solutions a single test exposes.
struct ErrorPatternVector {
  std::vector<bool> bits;

  [[nodiscard]] std::size_t size() const noexcept { return bits.size(); }
  [[nodiscard]] std::size_t l1_norm() const noexcept {
    return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), true));
  }
  bool operator==(const ErrorPatternVector&) const = default;
};

class KillMatrix {
 public:
  using Word = std::uint64_t;

  KillMatrix() = default;
  KillMatrix(std::string problem_id, std::vector<std::string> solution_ids, std::size_t n_tests)
      : problem_id_(std::move(problem_id)),
        solution_ids_(std::move(solution_ids)),
        ce_(solution_ids_.size(), false),
        n_(n_tests),
        words_(word_count(solution_ids_.size())),
        data_(n_ * words_, 0) {
    test_indices_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) test_indices_[i] = i;
  }

  /// Builds from explicit rows (row i = test i); handy for fixtures and tests.
  static KillMatrix from_rows(std::string problem_id, std::vector<std::string> solution_ids,
                              const std::vector<std::vector<bool>>& rows) {
    KillMatrix km(std::move(problem_id), std::move(solution_ids), rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != km.m_solutions()) throw DomainError("row width does not match solution count");
      for (std::size_t j = 0; j < rows[i].size(); ++j) km.set(i, j, rows[i][j]);
    }
    return km;
  }

  /// Builds from strings such as {"10", "01"} with generated solution ids s0, s1, ...
  static KillMatrix from_strings(const std::vector<std::string>& rows, std::size_t m = 0) {
    if (!rows.empty()) m = rows.front().size();
    std::vector<std::string> ids;
    for (std::size_t j = 0; j < m; ++j) ids.push_back("s" + std::to_string(j));
    std::vector<std::vector<bool>> bits;
    for (const auto& r : rows) {
      if (r.size() != m) throw DomainError("ragged kill-matrix rows");
      std::vector<bool> row;
      for (char c : r) row.push_back(c == '1');
      bits.push_back(std::move(row));
    }
    return from_rows("fixture", std::move(ids), bits);
  }

  [[nodiscard]] const std::string& problem_id() const noexcept { return problem_id_; }
  [[nodiscard]] std::size_t n_tests() const noexcept { return n_; }
  [[nodiscard]] std::size_t m_solutions() const noexcept { return solution_ids_.size(); }
  [[nodiscard]] std::size_t words_per_row() const noexcept { return words_; }
  [[nodiscard]] const std::vector<std::string>& solution_ids() const noexcept { return solution_ids_; }
  [[nodiscard]] const std::vector<std::size_t>& test_indices() const noexcept { return test_indices_; }
  [[nodiscard]] const std::vector<bool>& compile_error_flags() const noexcept { return ce_; }
  [[nodiscard]] bool has_compile_errors() const noexcept { return std::find(ce_.begin(), ce_.end(), true) != ce_.end(); }

  [[nodiscard]] bool detects(std::size_t test, std::size_t solution) const {
    return (data_[test * words_ + solution / 64] >> (solution % 64)) & 1U;
  }
  void set(std::size_t test, std::size_t solution, bool value) {
    Word& w = data_[test * words_ + solution / 64];
    const Word bit = Word{1} << (solution % 64);
    w = value ? (w | bit) : (w & ~bit);
  }
  void mark_compile_error(std::size_t solution) {
    ce_.at(solution) = true;
    for (std::size_t i = 0; i < n_; ++i) set(i, solution, true);
  }

  /// Packed words of row `test`; bits past m_solutions are always zero.
  [[nodiscard]] std::span<const Word> row_words(std::size_t test) const {
    return {data_.data() + test * words_, words_};
  }

  /// Number of tests detecting solution j.
  [[nodiscard]] std::size_t column_count(std::size_t solution) const {
    std::size_t d = 0;
    for (std::size_t i = 0; i < n_; ++i) d += detects(i, solution) ? 1 : 0;
    return d;
  }

  /// Copy restricted to the given rows, in the given order.
  [[nodiscard]] KillMatrix select_rows(const std::vector<std::size_t>& rows) const {
    KillMatrix out(problem_id_, solution_ids_, rows.size());
    out.ce_ = ce_;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      if (rows[r] >= n_) throw DomainError("row index out of range");
      std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(rows[r] * words_), words_,
                  out.data_.begin() + static_cast<std::ptrdiff_t>(r * words_));
      out.test_indices_[r] = test_indices_[rows[r]];
    }
    return out;
  }

  /// Copy restricted to the given columns, in the given order.
  [[nodiscard]] KillMatrix select_columns(const std::vector<std::size_t>& cols) const {
    std::vector<std::string> ids;
    for (auto c : cols) ids.push_back(solution_ids_.at(c));
    KillMatrix out(problem_id_, std::move(ids), n_);
    out.test_indices_ = test_indices_;
    for (std::size_t k = 0; k < cols.size(); ++k) {
      out.ce_[k] = ce_[cols[k]];
      for (std::size_t i = 0; i < n_; ++i) out.set(i, k, detects(i, cols[k]));
    }
    return out;
  }

  /// Drops compile-error columns (the default view for metrics).
  [[nodiscard]] KillMatrix without_compile_errors() const {
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < m_solutions(); ++j)
      if (!ce_[j]) keep.push_back(j);
    return select_columns(keep);
  }

  bool operator==(const KillMatrix&) const = default;

 private:
  friend KillMatrix union_matrices(const KillMatrix&, const KillMatrix&);
  friend KillMatrix parse_kill_matrix(std::string_view);

  static std::size_t word_count(std::size_t m) { return (m + 63) / 64; }

  std::string problem_id_;
  std::vector<std::string> solution_ids_;
  std::vector<bool> ce_;
  std::vector<std::size_t> test_indices_;
  std::size_t n_ = 0;
  std::size_t words_ = 0;
  std::vector<Word> data_;
};

inline ErrorPatternVector error_pattern(const KillMatrix& km, std::size_t test_index) {
  if (test_index >= km.n_tests())
    throw DomainError("test index " + std::to_string(test_index) + " out of range (n = " +
                      std::to_string(km.n_tests()) + ")");
  ErrorPatternVector v;
  v.bits.resize(km.m_solutions());
  for (std::size_t j = 0; j < km.m_solutions(); ++j) v.bits[j] = km.detects(test_index, j);
  return v;
}

/// Row concatenation: rows of `a` then rows of `b`, test indices renumbered 0..n-1.
inline KillMatrix union_matrices(const KillMatrix& a, const KillMatrix& b) {
  if (a.problem_id_ != b.problem_id_) throw DomainError("cannot union kill matrices of different problems");
  if (a.solution_ids_ != b.solution_ids_) throw DomainError("kill matrices have different solution orderings");
  KillMatrix out(a.problem_id_, a.solution_ids_, a.n_ + b.n_);
  for (std::size_t j = 0; j < a.ce_.size(); ++j) out.ce_[j] = a.ce_[j] || b.ce_[j];
  std::copy(a.data_.begin(), a.data_.end(), out.data_.begin());
  std::copy(b.data_.begin(), b.data_.end(), out.data_.begin() + static_cast<std::ptrdiff_t>(a.data_.size()));
  return out;
}

// ---------------------------------------------------------------------------
// Building

struct KillMatrixOptions {
  /// Verdict-vector cache directory; empty disables caching.
  fs::path cache_dir;
};

/// Verdict vectors for each solution on the suite, keyed for caching by the suite
/// hash, the solution content, the problem limits and the checker.
inline std::vector<VerdictVector> judge_solutions(const Problem& problem, const TestSuite& suite,
                                                  const std::vector<Solution>& solutions, Executor& exec,
                                                  const KillMatrixOptions& opts = {}) {
  const std::size_t n = suite.size();
  const std::size_t m = solutions.size();
  std::vector<VerdictVector> verdicts(m, VerdictVector(n, Verdict::AC));
  std::vector<std::optional<CompiledProgram>> programs(m);
  std::vector<bool> cached(m, false);

  const std::string shash = suite_hash(suite);
  const std::string limits_tag = std::to_string(problem.time_limit_ms) + "/" + std::to_string(problem.memory_limit_mb) +
                                 "/" + detail::checker_to_json(problem.checker).dump();
  std::vector<fs::path> cache_files(m);
  for (std::size_t j = 0; j < m; ++j) {
    if (solutions[j].problem_id != problem.id)
      throw DomainError("solution " + solutions[j].id + " does not belong to problem " + problem.id);
    if (!opts.cache_dir.empty()) {
      cache_files[j] = opts.cache_dir / (util::sha256_hex(shash + '\0' + solutions[j].language + '\0' +
                                                          solutions[j].source + '\0' + limits_tag) + ".verdicts");
      if (fs::exists(cache_files[j])) {
        const std::string text = util::read_file(cache_files[j]);
        const auto parts = util::split(text, ' ');
        if (parts.size() == n || (n == 0 && text.empty())) {
          bool ok = true;
          for (std::size_t i = 0; i < n && ok; ++i) {
            auto v = parse_verdict(parts[i]);
            ok = v.has_value();
            if (ok) verdicts[j][i] = *v;
          }
          cached[j] = ok;
        }
      }
    }
  }

  util::parallel_for(m, exec.parallelism(), [&](std::size_t j) {
    if (cached[j]) return;
    auto c = exec.compile(solutions[j]);
    if (!c.ok()) std::fill(verdicts[j].begin(), verdicts[j].end(), Verdict::CE);
    else programs[j] = std::move(c.program);
  });

  std::vector<std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t j = 0; j < m; ++j)
    if (!cached[j] && programs[j])
      for (std::size_t i = 0; i < n; ++i) cells.emplace_back(i, j);
  util::parallel_for(cells.size(), exec.parallelism(), [&](std::size_t k) {
    const auto [i, j] = cells[k];
    verdicts[j][i] = exec.judge(*programs[j], suite.cases[i], problem);
  });

  if (!opts.cache_dir.empty()) {
    fs::create_directories(opts.cache_dir);
    for (std::size_t j = 0; j < m; ++j) {
      if (cached[j]) continue;
      std::string text;
      for (std::size_t i = 0; i < n; ++i) {
        if (i) text.push_back(' ');
        text += to_string(verdicts[j][i]);
      }
      util::write_file_atomic(cache_files[j], text);
    }
  }
  return verdicts;
}

/// detects[i][j] = verdict of solution j on case i is not AC. Compile failures
/// become all-true columns flagged as CE.
inline KillMatrix build_kill_matrix(const Problem& problem, const TestSuite& suite,
                                    const std::vector<Solution>& wrong_solutions, Executor& exec,
                                    const KillMatrixOptions& opts = {}) {
  const auto verdicts = judge_solutions(problem, suite, wrong_solutions, exec, opts);
  std::vector<std::string> ids;
  for (const auto& s : wrong_solutions) ids.push_back(s.id);
  KillMatrix km(problem.id, std::move(ids), suite.size());
  for (std::size_t j = 0; j < wrong_solutions.size(); ++j) {
    const bool ce = !verdicts[j].empty() && verdicts[j][0] == Verdict::CE;
    if (ce) {
      km.mark_compile_error(j);
      continue;
    }
    for (std::size_t i = 0; i < suite.size(); ++i) km.set(i, j, detects(verdicts[j][i]));
  }
  return km;
}

// ---------------------------------------------------------------------------
// Persistence: "VFKM1\n" + JSON header line + n rows of ceil(m/8) bytes, LSB first.

inline std::string serialize_kill_matrix(const KillMatrix& km) {
  nlohmann::json header = {{"problem_id", km.problem_id()},
                           {"n", km.n_tests()},
                           {"m", km.m_solutions()},
                           {"solution_ids", km.solution_ids()},
                           {"test_indices", km.test_indices()}};
  std::vector<int> ce;
  for (bool b : km.compile_error_flags()) ce.push_back(b ? 1 : 0);
  header["ce"] = ce;
  std::string out = "VFKM1\n" + header.dump() + "\n";
  const std::size_t row_bytes = (km.m_solutions() + 7) / 8;
  for (std::size_t i = 0; i < km.n_tests(); ++i) {
    std::string row(row_bytes, '\0');
    for (std::size_t j = 0; j < km.m_solutions(); ++j)
      if (km.detects(i, j)) row[j / 8] = static_cast<char>(row[j / 8] | (1 << (j % 8)));
    out += row;
  }
  return out;
}

inline KillMatrix parse_kill_matrix(std::string_view data) {
  if (data.substr(0, 6) != "VFKM1\n") throw ParseError("killmatrix", 1, "bad magic");
  const auto eol = data.find('\n', 6);
  if (eol == std::string_view::npos) throw ParseError("killmatrix", 2, "missing header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(data.substr(6, eol - 6));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("killmatrix", 2, e.what());
  }
  const auto n = h.at("n").get<std::size_t>();
  const auto ids = h.at("solution_ids").get<std::vector<std::string>>();
  if (ids.size() != h.at("m").get<std::size_t>()) throw ParseError("killmatrix", 2, "m does not match ids");
  KillMatrix km(h.at("problem_id").get<std::string>(), ids, n);
  km.test_indices_ = h.at("test_indices").get<std::vector<std::size_t>>();
  const auto ce = h.at("ce").get<std::vector<int>>();
  for (std::size_t j = 0; j < ce.size() && j < km.ce_.size(); ++j) km.ce_[j] = ce[j] != 0;
  const std::size_t row_bytes = (ids.size() + 7) / 8;
  const std::string_view body = data.substr(eol + 1);
  if (body.size() != n * row_bytes) throw ParseError("killmatrix", 3, "bit payload has wrong length");
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < ids.size(); ++j)
      km.set(i, j, (static_cast<unsigned char>(body[i * row_bytes + j / 8]) >> (j % 8)) & 1U);
  return km;
}

inline void save_kill_matrix(const KillMatrix& km, const fs::path& path) {
  util::write_file_atomic(path, serialize_kill_matrix(km));
}
inline KillMatrix load_kill_matrix(const fs::path& path) { return parse_kill_matrix(util::read_file(path)); }

/// CSV with one row per test: `test_index,<solution ids...>` and 0/1 cells.
inline std::string kill_matrix_csv(const KillMatrix& km) {
  std::string out = "test_index";
  for (const auto& id : km.solution_ids()) out += "," + util::csv_escape(id);
  out += "\n";
  for (std::size_t i = 0; i < km.n_tests(); ++i) {
    out += std::to_string(km.test_indices()[i]);
    for (std::size_t j = 0; j < km.m_solutions(); ++j) out += km.detects(i, j) ? ",1" : ",0";
    out += "\n";
  }
  return out;
}

}  // namespace vfkit

#endif  // VFKIT_KILLMATRIX_HPP
