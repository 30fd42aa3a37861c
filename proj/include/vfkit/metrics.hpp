#ifndef VFKIT_METRICS_HPP
#define VFKIT_METRICS_HPP

/**
 * \file
 * \brief Verifier-quality metrics over kill matrices.
 *
 * Detection rate (DR) is the fraction of wrong solutions a suite exposes; verifier
 * accuracy (VAcc) is the indicator that it exposes all of them. Size-k variants
 * average over uniformly drawn k-subsets of the suite: DR@k in closed form, VAcc@k
 * by exact enumeration or seeded Monte Carlo. DEPC counts distinct nonzero rows.
 * AUC@N is the normalised trapezoidal area under the VAcc(k) curve on [k_min, N].
 */

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "vfkit/error.hpp"
#include "vfkit/killmatrix.hpp"
#include "vfkit/util/format.hpp"
#include "vfkit/util/hash.hpp"

namespace vfkit {

using u128 = unsigned __int128;

/// C(n, k) as an exact integer, or nullopt if it overflows 128 bits.
inline std::optional<u128> binomial_exact(std::uint64_t n, std::uint64_t k) {
  if (k > n) return u128{0};
  k = std::min(k, n - k);
  u128 c = 1;
  for (std::uint64_t i = 0; i < k; ++i) {
    const u128 factor = n - i;
    if (c > (~u128{0}) / factor) return std::nullopt;
    c = c * factor / (i + 1);  // exact: c * (n-i) is divisible by (i+1)
  }
  return c;
}

/// log C(n, k) for k <= n.
inline double log_binomial(double n, double k) {
  return std::lgamma(n + 1) - std::lgamma(k + 1) - std::lgamma(n - k + 1);
}

/// C(n-d, k) / C(n, k): probability that a uniform k-subset of n items misses d marked ones.
inline double miss_probability(std::uint64_t n, std::uint64_t d, std::uint64_t k) {
  if (d == 0) return 1.0;
  if (n - d < k) return 0.0;
  // Product over whichever of k, d is shorter; both forms equal C(n-d,k)/C(n,k).
  if (std::min(k, d) <= (std::uint64_t{1} << 20)) {
    const auto [len, other] = k <= d ? std::pair{k, d} : std::pair{d, k};
    double log_p = 0;
    for (std::uint64_t i = 0; i < len; ++i)
      log_p += std::log1p(-static_cast<double>(other) / static_cast<double>(n - i));
    return std::exp(log_p);
  }
  return std::exp(log_binomial(double(n - d), double(k)) - log_binomial(double(n), double(k)));
}

namespace detail {

inline void require_solutions(const KillMatrix& km, const char* metric) {
  if (km.m_solutions() == 0)
    throw UndefinedMetricError(std::string(metric) + " is undefined for problem '" + km.problem_id() +
                               "' with no wrong solutions");
}

inline void require_k(const KillMatrix& km, std::size_t k) {
  if (k < 1 || k > km.n_tests())
    throw DomainError("k = " + std::to_string(k) + " outside [1, " + std::to_string(km.n_tests()) + "]");
}

inline std::vector<KillMatrix::Word> full_mask(const KillMatrix& km) {
  std::vector<KillMatrix::Word> mask(km.words_per_row(), ~KillMatrix::Word{0});
  if (const std::size_t rem = km.m_solutions() % 64; rem != 0 && !mask.empty())
    mask.back() = (KillMatrix::Word{1} << rem) - 1;
  return mask;
}

}  // namespace detail

/// Fraction of wrong solutions with at least one detecting test.
inline double detection_rate(const KillMatrix& km) {
  detail::require_solutions(km, "detection rate");
  std::size_t detected = 0;
  for (std::size_t j = 0; j < km.m_solutions(); ++j) detected += km.column_count(j) > 0 ? 1 : 0;
  return static_cast<double>(detected) / static_cast<double>(km.m_solutions());
}

/// Expected detection rate of a uniformly random k-subset of the suite:
/// mean over solutions of 1 - C(n-d_j, k)/C(n, k).
inline double dr_at_k(const KillMatrix& km, std::size_t k) {
  detail::require_solutions(km, "DR@k");
  detail::require_k(km, k);
  const std::size_t n = km.n_tests(), m = km.m_solutions();
  if (const auto total = binomial_exact(n, k); total && *total <= (~u128{0}) / m) {
    u128 hits = 0;
    for (std::size_t j = 0; j < m; ++j) hits += *total - *binomial_exact(n - km.column_count(j), k);
    return static_cast<double>(hits) / static_cast<double>(*total * m);
  }
  double sum = 0;
  for (std::size_t j = 0; j < m; ++j) sum += 1.0 - miss_probability(n, km.column_count(j), k);
  return sum / static_cast<double>(m);
}

/// 1 when every wrong solution is detected by some test, else 0.
inline int vacc(const KillMatrix& km) {
  detail::require_solutions(km, "VAcc");
  std::vector<KillMatrix::Word> acc(km.words_per_row(), 0);
  for (std::size_t i = 0; i < km.n_tests(); ++i) {
    const auto row = km.row_words(i);
    for (std::size_t w = 0; w < acc.size(); ++w) acc[w] |= row[w];
  }
  return acc == detail::full_mask(km) ? 1 : 0;
}

inline constexpr std::size_t kExactVaccMaxTests = 20;

/// Exact P(a uniform k-subset detects every solution) by enumerating all C(n, k) subsets.
inline double vacc_at_k_exact(const KillMatrix& km, std::size_t k) {
  detail::require_solutions(km, "VAcc@k");
  detail::require_k(km, k);
  const std::size_t n = km.n_tests();
  if (n > kExactVaccMaxTests)
    throw DomainError("exact VAcc@k enumeration is limited to n <= " + std::to_string(kExactVaccMaxTests));
  const auto full = detail::full_mask(km);
  const std::size_t words = km.words_per_row();
  std::vector<std::size_t> idx(k);
  std::iota(idx.begin(), idx.end(), 0);
  // prefix[t] = OR of rows idx[0..t-1]
  std::vector<std::vector<KillMatrix::Word>> prefix(k + 1, std::vector<KillMatrix::Word>(words, 0));
  auto rebuild_from = [&](std::size_t t) {
    for (; t < k; ++t) {
      const auto row = km.row_words(idx[t]);
      for (std::size_t w = 0; w < words; ++w) prefix[t + 1][w] = prefix[t][w] | row[w];
    }
  };
  rebuild_from(0);
  std::uint64_t covering = 0, total = 0;
  for (;;) {
    ++total;
    if (prefix[k] == full) ++covering;
    std::size_t t = k;
    while (t > 0 && idx[t - 1] == n - k + (t - 1)) --t;
    if (t == 0) break;
    ++idx[t - 1];
    for (std::size_t u = t; u < k; ++u) idx[u] = idx[u - 1] + 1;
    rebuild_from(t - 1);
  }
  return static_cast<double>(covering) / static_cast<double>(total);
}

/// Monte Carlo estimate of VAcc@k from `trials` uniform k-subsets; reproducible for a fixed seed.
inline double vacc_at_k(const KillMatrix& km, std::size_t k, std::size_t trials, std::uint64_t seed) {
  detail::require_solutions(km, "VAcc@k");
  detail::require_k(km, k);
  if (trials < 1) throw DomainError("trials must be >= 1");
  const std::size_t n = km.n_tests(), words = km.words_per_row();
  const auto full = detail::full_mask(km);
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<KillMatrix::Word> acc(words);
  std::size_t covering = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    std::fill(acc.begin(), acc.end(), 0);
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(perm[i], perm[pick(rng)]);
      const auto row = km.row_words(perm[i]);
      for (std::size_t w = 0; w < words; ++w) acc[w] |= row[w];
    }
    if (acc == full) ++covering;
  }
  return static_cast<double>(covering) / static_cast<double>(trials);
}

/// Distinct Error Pattern Coverage: number of distinct nonzero rows.
inline std::size_t depc(const KillMatrix& km) {
  std::set<std::vector<KillMatrix::Word>> patterns;
  for (std::size_t i = 0; i < km.n_tests(); ++i) {
    const auto row = km.row_words(i);
    if (std::any_of(row.begin(), row.end(), [](auto w) { return w != 0; })) patterns.emplace(row.begin(), row.end());
  }
  return patterns.size();
}

/// DEPC / n, with 0 for an empty suite.
inline double diversity_ratio(const KillMatrix& km) {
  return km.n_tests() == 0 ? 0.0 : static_cast<double>(depc(km)) / static_cast<double>(km.n_tests());
}

// ---------------------------------------------------------------------------
// Curves and AUC

struct CurvePoint {
  std::size_t k = 0;
  double value = 0;
  bool operator==(const CurvePoint&) const = default;
};

/// Trapezoidal AUC of `curve` on [k_min, N], divided by (N - k_min).
/// Points outside the interval are ignored; both endpoints must be present.
inline double auc_at_n(const std::vector<CurvePoint>& curve, std::size_t k_min, std::size_t n_max) {
  if (n_max <= k_min) throw DomainError("AUC needs N > k_min");
  for (std::size_t i = 1; i < curve.size(); ++i)
    if (curve[i].k <= curve[i - 1].k) throw DomainError("curve k values must be strictly increasing");
  std::vector<CurvePoint> pts;
  for (const auto& p : curve)
    if (p.k >= k_min && p.k <= n_max) pts.push_back(p);
  if (pts.empty() || pts.front().k != k_min || pts.back().k != n_max)
    throw DomainError("curve must contain points at k_min and N");
  double area = 0;
  for (std::size_t i = 0; i + 1 < pts.size(); ++i)
    area += (pts[i].value + pts[i + 1].value) / 2.0 * static_cast<double>(pts[i + 1].k - pts[i].k);
  return area / static_cast<double>(n_max - k_min);
}

struct CurveRow {
  std::size_t k = 0;
  double dr = 0;
  double vacc = 0;
  bool extrapolated = false;  ///< k exceeded the suite size; full-suite values reported
  bool operator==(const CurveRow&) const = default;
};

/// Evaluation protocol; recorded verbatim in every report.
struct Protocol {
  std::vector<std::size_t> k_list{1, 2, 5, 10, 20, 30, 40, 50};
  std::size_t k_min = 1;
  std::size_t n_max = 50;
  std::uint64_t seed = 0;
  std::size_t mc_trials = 2000;
  bool include_compile_errors = false;
  bool operator==(const Protocol&) const = default;
};

/// VAcc@k by enumeration when C(n, k) <= trials, otherwise Monte Carlo.
inline double vacc_at_k_auto(const KillMatrix& km, std::size_t k, std::size_t trials, std::uint64_t seed) {
  if (k == km.n_tests()) return vacc(km);
  const auto subsets = binomial_exact(km.n_tests(), k);
  if (km.n_tests() <= kExactVaccMaxTests && subsets && *subsets <= trials) return vacc_at_k_exact(km, k);
  return vacc_at_k(km, k, trials, seed);
}

/// DR and VAcc curves for k in `k_list` (each in [1, n]). Monte Carlo streams use a seed
/// derived from (seed, problem id, k) so evaluation order never changes results.
inline std::vector<CurveRow> compute_curves(const KillMatrix& km, const std::vector<std::size_t>& k_list,
                                            std::size_t trials, std::uint64_t seed) {
  std::vector<CurveRow> rows;
  for (std::size_t k : k_list) {
    detail::require_k(km, k);
    rows.push_back({k, dr_at_k(km, k), vacc_at_k_auto(km, k, trials, util::derive_seed(seed, km.problem_id(), k)),
                    false});
  }
  std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.k < b.k; });
  return rows;
}

// ---------------------------------------------------------------------------
// Reports

struct MetricReport {
  std::string scope;  ///< problem id or "aggregate"
  std::size_t problems = 1;
  std::size_t n_tests = 0;
  std::size_t m_solutions = 0;
  double dr_full = 0;
  double vacc_full = 0;
  std::size_t depc = 0;
  double diversity_ratio = 0;
  std::vector<CurveRow> curves;
  double auc_at_n = 0;
  Protocol protocol;
  bool operator==(const MetricReport&) const = default;
};

/// All metrics for one problem. Curve points beyond the suite size repeat the
/// full-suite values (a suite cannot offer more than n tests) and are flagged.
inline MetricReport evaluate(const KillMatrix& raw, const Protocol& protocol) {
  const KillMatrix km = protocol.include_compile_errors ? raw : raw.without_compile_errors();
  detail::require_solutions(km, "metrics");
  MetricReport r;
  r.scope = km.problem_id();
  r.protocol = protocol;
  r.n_tests = km.n_tests();
  r.m_solutions = km.m_solutions();
  r.dr_full = detection_rate(km);
  r.vacc_full = vacc(km);
  r.depc = depc(km);
  r.diversity_ratio = diversity_ratio(km);

  std::vector<std::size_t> ks = protocol.k_list;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  auto point = [&](std::size_t k) -> CurveRow {
    if (k == 0) return {0, 0.0, 0.0, false};
    if (k > km.n_tests()) return {k, r.dr_full, r.vacc_full, true};
    const auto c = compute_curves(km, {k}, protocol.mc_trials, protocol.seed);
    return c.front();
  };
  for (std::size_t k : ks) r.curves.push_back(point(k));

  std::vector<CurvePoint> acc;
  std::vector<std::size_t> grid = {protocol.k_min, protocol.n_max};
  for (const auto& row : r.curves) grid.push_back(row.k);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  for (std::size_t k : grid) {
    if (k < protocol.k_min || k > protocol.n_max) continue;
    auto it = std::find_if(r.curves.begin(), r.curves.end(), [k](const auto& c) { return c.k == k; });
    acc.push_back({k, it != r.curves.end() ? it->vacc : point(k).vacc});
  }
  r.auc_at_n = auc_at_n(acc, protocol.k_min, protocol.n_max);
  return r;
}

/// Cross-problem aggregate: DR macro-averaged, VAcc as mean indicator, DEPC summed,
/// diversity ratio, curves and AUC averaged per problem.
inline MetricReport aggregate(const std::vector<MetricReport>& reports, std::string scope = "aggregate") {
  if (reports.empty()) throw UndefinedMetricError("cannot aggregate zero problem reports");
  MetricReport a;
  a.scope = std::move(scope);
  a.protocol = reports.front().protocol;
  a.problems = reports.size();
  const double p = static_cast<double>(reports.size());
  for (const auto& r : reports) {
    a.n_tests += r.n_tests;
    a.m_solutions += r.m_solutions;
    a.dr_full += r.dr_full / p;
    a.vacc_full += r.vacc_full / p;
    a.depc += r.depc;
    a.diversity_ratio += r.diversity_ratio / p;
    a.auc_at_n += r.auc_at_n / p;
  }
  a.curves = reports.front().curves;
  for (auto& c : a.curves) {
    c.dr = c.vacc = 0;
    c.extrapolated = false;
    for (const auto& r : reports) {
      auto it = std::find_if(r.curves.begin(), r.curves.end(), [&](const auto& x) { return x.k == c.k; });
      if (it == r.curves.end()) throw DomainError("reports use different k grids");
      c.dr += it->dr / p;
      c.vacc += it->vacc / p;
      c.extrapolated = c.extrapolated || it->extrapolated;
    }
  }
  return a;
}

inline nlohmann::json to_json(const Protocol& p) {
  return {{"k_list", p.k_list}, {"k_min", p.k_min}, {"N", p.n_max}, {"seed", p.seed},
          {"mc_trials", p.mc_trials}, {"include_compile_errors", p.include_compile_errors}};
}

inline Protocol protocol_from_json(const nlohmann::json& j) {
  Protocol p;
  p.k_list = j.at("k_list").get<std::vector<std::size_t>>();
  p.k_min = j.at("k_min").get<std::size_t>();
  p.n_max = j.at("N").get<std::size_t>();
  p.seed = j.at("seed").get<std::uint64_t>();
  p.mc_trials = j.at("mc_trials").get<std::size_t>();
  p.include_compile_errors = j.value("include_compile_errors", false);
  return p;
}

inline nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json curves = nlohmann::json::array();
  for (const auto& c : r.curves)
    curves.push_back({{"k", c.k}, {"dr", c.dr}, {"vacc", c.vacc}, {"extrapolated", c.extrapolated}});
  return {{"scope", r.scope},       {"problems", r.problems}, {"n_tests", r.n_tests},
          {"m_solutions", r.m_solutions}, {"dr", r.dr_full},     {"vacc", r.vacc_full},
          {"depc", r.depc},         {"diversity_ratio", r.diversity_ratio},
          {"curves", curves},       {"auc_at_n", r.auc_at_n}, {"protocol", to_json(r.protocol)}};
}

inline MetricReport report_from_json(const nlohmann::json& j) {
  MetricReport r;
  r.scope = j.at("scope").get<std::string>();
  r.problems = j.at("problems").get<std::size_t>();
  r.n_tests = j.at("n_tests").get<std::size_t>();
  r.m_solutions = j.at("m_solutions").get<std::size_t>();
  r.dr_full = j.at("dr").get<double>();
  r.vacc_full = j.at("vacc").get<double>();
  r.depc = j.at("depc").get<std::size_t>();
  r.diversity_ratio = j.at("diversity_ratio").get<double>();
  for (const auto& c : j.at("curves"))
    r.curves.push_back({c.at("k").get<std::size_t>(), c.at("dr").get<double>(), c.at("vacc").get<double>(),
                        c.value("extrapolated", false)});
  r.auc_at_n = j.at("auc_at_n").get<double>();
  r.protocol = protocol_from_json(j.at("protocol"));
  return r;
}

inline constexpr const char* kMetricsCsvHeader = "scope,metric,k,value\n";

/// One CSV row per (scope, metric, k); full-suite metrics use k = n.
inline std::string metrics_csv_rows(const MetricReport& r) {
  std::string out;
  const std::string scope = util::csv_escape(r.scope);
  auto row = [&](const char* metric, const std::string& k, const std::string& value) {
    out += scope + "," + metric + "," + k + "," + value + "\n";
  };
  const std::string n = std::to_string(r.n_tests);
  row("dr", n, util::format_double(r.dr_full));
  row("vacc", n, util::format_double(r.vacc_full));
  row("depc", n, std::to_string(r.depc));
  row("diversity_ratio", n, util::format_double(r.diversity_ratio));
  for (const auto& c : r.curves) row("dr_at_k", std::to_string(c.k), util::format_double(c.dr));
  for (const auto& c : r.curves) row("vacc_at_k", std::to_string(c.k), util::format_double(c.vacc));
  row("auc_at_n", std::to_string(r.protocol.n_max), util::format_double(r.auc_at_n));
  return out;
}

// ---------------------------------------------------------------------------
// Mixing

/// Metrics of the row-union of two suites' matrices for the same problem.
inline MetricReport mix_report(const KillMatrix& a, const KillMatrix& b, const Protocol& protocol) {
  return evaluate(union_matrices(a, b), protocol);
}

struct MixGrid {
  std::vector<std::string> sources;
  std::vector<std::vector<double>> auc;  ///< auc[i][j]: mean AUC@N over problems of source i mixed with j
};

/// Pairwise AUC grid. `matrices[s][p]` is source s's matrix for problem p (same problem
/// order for all sources). The diagonal holds the single-source values.
inline MixGrid mix_grid(const std::vector<std::string>& sources, const std::vector<std::vector<KillMatrix>>& matrices,
                        const Protocol& protocol) {
  if (sources.size() != matrices.size()) throw DomainError("one matrix list per source required");
  MixGrid g{sources, std::vector<std::vector<double>>(sources.size(), std::vector<double>(sources.size(), 0.0))};
  for (std::size_t i = 0; i < sources.size(); ++i) {
    for (std::size_t j = i; j < sources.size(); ++j) {
      if (matrices[i].size() != matrices[j].size()) throw DomainError("sources cover different problem sets");
      std::vector<MetricReport> per_problem;
      for (std::size_t p = 0; p < matrices[i].size(); ++p) {
        per_problem.push_back(i == j ? evaluate(matrices[i][p], protocol)
                                     : mix_report(matrices[i][p], matrices[j][p], protocol));
      }
      const double v = per_problem.empty() ? 0.0 : aggregate(per_problem).auc_at_n;
      g.auc[i][j] = g.auc[j][i] = v;
    }
  }
  return g;
}

inline std::string mix_grid_csv(const MixGrid& g) {
  std::string out = "source";
  for (const auto& s : g.sources) out += "," + util::csv_escape(s);
  out += "\n";
  for (std::size_t i = 0; i < g.sources.size(); ++i) {
    out += util::csv_escape(g.sources[i]);
    for (double v : g.auc[i]) out += "," + util::format_double(v);
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------

/// Unbiased pass@k estimator 1 - C(n-c, k)/C(n, k).
inline double pass_at_k(std::size_t n_samples, std::size_t n_correct, std::size_t k) {
  if (n_correct > n_samples) throw DomainError("n_correct exceeds n_samples");
  if (k < 1 || k > n_samples) throw DomainError("k must lie in [1, n_samples]");
  if (n_samples - n_correct < k) return 1.0;
  double miss = 1.0;
  for (std::size_t i = n_samples - n_correct + 1; i <= n_samples; ++i)
    miss *= 1.0 - static_cast<double>(k) / static_cast<double>(i);
  return 1.0 - miss;
}

}  // namespace vfkit

#endif  // VFKIT_METRICS_HPP
