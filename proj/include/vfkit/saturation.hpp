#ifndef VFKIT_SATURATION_HPP
#define VFKIT_SATURATION_HPP

/**
 * \file
 * \brief Detection-rate saturation under correlated tests.
 *
 * n tests with mean detection probability p and average pairwise correlation rho
 * carry the information of n_eff = n / (1 + (n-1) rho) independent ones, giving the
 * approximate bound DR(n) <= 1 - (1-p)^n_eff, which tends to 1 - (1-p)^(1/rho) < 1.
 *
 * The simulation side draws exchangeable detections from a beta mixture: per trial
 * q ~ Beta(alpha, beta) and then i.i.d. Bernoulli(q) outcomes, which has mean p and
 * pairwise correlation 1 / (alpha + beta + 1) = rho.
 */

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vfkit/error.hpp"
#include "vfkit/util/format.hpp"
#include "vfkit/util/hash.hpp"
#include "vfkit/util/parallel.hpp"

namespace vfkit::saturation {

struct Params {
  double p_bar = 0.5;
  double rho_eff = 0.0;
  double n = 1;
};

namespace detail {
inline void check_unit(double v, const char* name) {
  if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(name) + " must lie in [0, 1]");
}
}  // namespace detail

/// n / (1 + (n-1) rho).
inline double n_eff(double n, double rho_eff) {
  if (!(n >= 1.0)) throw DomainError("n must be >= 1");
  detail::check_unit(rho_eff, "rho_eff");
  return n / (1.0 + (n - 1.0) * rho_eff);
}

/// 1 - (1 - p)^n_eff.
inline double dr_upper_bound(const Params& params) {
  detail::check_unit(params.p_bar, "p_bar");
  return 1.0 - std::pow(1.0 - params.p_bar, n_eff(params.n, params.rho_eff));
}

inline double dr_upper_bound(double p_bar, double rho_eff, double n) { return dr_upper_bound({p_bar, rho_eff, n}); }

/// lim_{n->inf} of the bound: 1 - (1-p)^(1/rho). Undefined (the limit is 1) at rho = 0.
inline double asymptotic_limit(double p_bar, double rho_eff) {
  if (!(p_bar > 0.0 && p_bar < 1.0)) throw DomainError("p_bar must lie in (0, 1)");
  if (rho_eff == 0.0) throw DomainError("limit is 1, independence regime");
  if (!(rho_eff > 0.0 && rho_eff <= 1.0)) throw DomainError("rho_eff must lie in (0, 1]");
  return 1.0 - std::pow(1.0 - p_bar, 1.0 / rho_eff);
}

struct BetaParams {
  double alpha = 0;
  double beta = 0;
};

/// Beta(alpha, beta) mixing distribution with mean p and Bernoulli pairwise correlation rho.
inline BetaParams beta_params_from(double p_bar, double rho) {
  if (!(p_bar > 0.0 && p_bar < 1.0)) throw DomainError("p_bar must lie in (0, 1)");
  if (!(rho > 0.0 && rho < 1.0)) throw DomainError("rho must lie in (0, 1)");
  const double s = 1.0 / rho - 1.0;
  return {p_bar * s, (1.0 - p_bar) * s};
}

/// P(no detection among n tests) under the beta mixture: B(alpha, beta+n) / B(alpha, beta).
inline double no_detection_probability(const BetaParams& b, double n) {
  return std::exp(std::lgamma(b.beta + n) + std::lgamma(b.alpha + b.beta) - std::lgamma(b.beta) -
                  std::lgamma(b.alpha + b.beta + n));
}

/// Exchangeable correlated-Bernoulli generator. Handles the boundary cases
/// p in {0, 1} (constant q), rho = 0 (q = p) and rho = 1 (q ~ Bernoulli(p)).
class ExchangeableSampler {
 public:
  ExchangeableSampler(double p_bar, double rho) : p_(p_bar), rho_(rho) {
    detail::check_unit(p_bar, "p_bar");
    detail::check_unit(rho, "rho");
    if (p_ > 0.0 && p_ < 1.0 && rho_ > 0.0 && rho_ < 1.0) beta_ = beta_params_from(p_, rho_);
  }

  [[nodiscard]] BetaParams beta_params() const noexcept { return beta_; }

  template <class Rng>
  double draw_q(Rng& rng) const {
    if (p_ <= 0.0 || p_ >= 1.0 || rho_ == 0.0) return p_;
    if (rho_ >= 1.0) return std::bernoulli_distribution(p_)(rng) ? 1.0 : 0.0;
    const double x = std::gamma_distribution<double>(beta_.alpha, 1.0)(rng);
    const double y = std::gamma_distribution<double>(beta_.beta, 1.0)(rng);
    if (x + y <= 0.0) return std::bernoulli_distribution(p_)(rng) ? 1.0 : 0.0;
    return x / (x + y);
  }

  /// One trial: n conditionally independent detections.
  template <class Rng>
  std::vector<bool> draw_trial(Rng& rng, std::size_t n) const {
    const double q = draw_q(rng);
    std::bernoulli_distribution hit(q);
    std::vector<bool> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = hit(rng);
    return out;
  }

  /// 1-based index of the first detection, or 0 if none within n_max.
  template <class Rng>
  std::size_t first_detection(Rng& rng, std::size_t n_max) const {
    const double q = draw_q(rng);
    if (q <= 0.0) return 0;
    if (q >= 1.0) return 1;
    const auto failures = std::geometric_distribution<std::uint64_t>(q)(rng);
    return failures < n_max ? static_cast<std::size_t>(failures) + 1 : 0;
  }

 private:
  double p_;
  double rho_;
  BetaParams beta_{};
};

struct SimCurve {
  std::vector<std::pair<std::size_t, double>> points;  ///< (n, empirical DR), n = 1..n_max
  std::size_t trials = 0;
  std::uint64_t seed = 0;
  BetaParams generator{};
};

inline constexpr std::size_t kTrialsPerChunk = 4096;

/// Empirical DR(n) = fraction of trials with a detection among the first n tests.
/// Trials are split into fixed chunks with seeds derived from (seed, chunk), so the
/// result does not depend on how many threads run them.
inline SimCurve simulate_exchangeable(std::size_t n_max, double p_bar, double rho, std::size_t trials,
                                      std::uint64_t seed, std::size_t workers = util::default_parallelism()) {
  if (n_max < 1) throw DomainError("n_max must be >= 1");
  if (trials < 1) throw DomainError("trials must be >= 1");
  const ExchangeableSampler sampler(p_bar, rho);
  const std::size_t chunks = (trials + kTrialsPerChunk - 1) / kTrialsPerChunk;
  std::vector<std::vector<std::size_t>> hist(chunks, std::vector<std::size_t>(n_max + 1, 0));
  util::parallel_for(chunks, workers, [&](std::size_t c) {
    std::mt19937_64 rng(util::derive_seed(seed, "simulate_exchangeable", c));
    const std::size_t count = std::min(kTrialsPerChunk, trials - c * kTrialsPerChunk);
    for (std::size_t t = 0; t < count; ++t) ++hist[c][sampler.first_detection(rng, n_max)];
  });
  std::vector<std::size_t> first(n_max + 1, 0);
  for (const auto& h : hist)
    for (std::size_t i = 0; i <= n_max; ++i) first[i] += h[i];

  SimCurve curve;
  curve.trials = trials;
  curve.seed = seed;
  curve.generator = sampler.beta_params();
  std::size_t detected = 0;
  for (std::size_t n = 1; n <= n_max; ++n) {
    detected += first[n];
    curve.points.emplace_back(n, static_cast<double>(detected) / static_cast<double>(trials));
  }
  return curve;
}

// ---------------------------------------------------------------------------
// Fitting

struct FitResult {
  double p_hat = 0;
  double rho_hat = 0;
  double rmse = 0;
  std::size_t points_used = 0;
};

inline constexpr std::size_t kFitGrid = 64;
inline constexpr std::size_t kFitMaxPoints = 48;

/// Indices of at most `max_points` entries of increasing `ns`, evenly spaced in log n.
inline std::vector<std::size_t> log_spaced_subset(const std::vector<double>& ns, std::size_t max_points) {
  std::vector<std::size_t> idx;
  if (ns.size() <= max_points) {
    for (std::size_t i = 0; i < ns.size(); ++i) idx.push_back(i);
    return idx;
  }
  const double lo = std::log(ns.front()), hi = std::log(ns.back());
  std::size_t cursor = 0;
  for (std::size_t t = 0; t < max_points; ++t) {
    const double target = lo + (hi - lo) * static_cast<double>(t) / static_cast<double>(max_points - 1);
    while (cursor + 1 < ns.size() && std::log(ns[cursor + 1]) <= target) ++cursor;
    std::size_t pick = cursor;
    if (cursor + 1 < ns.size() && std::fabs(std::log(ns[cursor + 1]) - target) < std::fabs(std::log(ns[cursor]) - target))
      pick = cursor + 1;
    if (idx.empty() || idx.back() != pick) idx.push_back(pick);
  }
  if (idx.back() != ns.size() - 1) idx.push_back(ns.size() - 1);
  return idx;
}

namespace detail {

inline constexpr double kPMin = 1e-9, kPMax = 1.0 - 1e-9, kRhoMin = 1e-9, kRhoMax = 1.0;

inline double sse(const std::vector<double>& ns, const std::vector<double>& dr, double p, double rho) {
  double s = 0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double r = dr_upper_bound(p, rho, ns[i]) - dr[i];
    s += r * r;
  }
  return s;
}

}  // namespace detail

/// Least-squares fit of DR(n) ~ 1 - (1-p)^(n / (1 + (n-1) rho)) over (p, rho) in (0,1) x (0,1]:
/// 64 x 64 grid search followed by Levenberg-Marquardt refinement. Dense curves are
/// thinned to a log-spaced subset first.
inline FitResult fit_saturation(const std::vector<std::pair<double, double>>& curve) {
  if (curve.size() < 3) throw DomainError("fit needs at least 3 points");
  std::vector<double> all_n, all_dr;
  for (std::size_t i = 0; i < curve.size(); ++i) {
    const auto [n, dr] = curve[i];
    if (!(n >= 1.0)) throw DomainError("curve n must be >= 1");
    if (i > 0 && !(n > curve[i - 1].first)) throw DomainError("curve n must be strictly increasing");
    if (!(dr >= 0.0 && dr < 1.0)) throw DomainError("curve DR values must lie in [0, 1)");
    all_n.push_back(n);
    all_dr.push_back(dr);
  }
  if (std::all_of(all_dr.begin(), all_dr.end(), [](double v) { return v == 0.0; }))
    throw NoFitError("degenerate curve: detection rate is identically zero");

  std::vector<double> ns, dr;
  for (auto i : log_spaced_subset(all_n, kFitMaxPoints)) {
    ns.push_back(all_n[i]);
    dr.push_back(all_dr[i]);
  }

  double best_p = 0.5, best_rho = 1.0, best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kFitGrid; ++i) {
    for (std::size_t j = 0; j < kFitGrid; ++j) {
      const double p = (static_cast<double>(i) + 0.5) / kFitGrid;
      const double rho = static_cast<double>(j + 1) / kFitGrid;
      const double s = detail::sse(ns, dr, p, rho);
      if (s < best) {
        best = s;
        best_p = p;
        best_rho = rho;
      }
    }
  }

  // Levenberg-Marquardt on (p, rho) with box clamping.
  double p = best_p, rho = best_rho, lambda = 1e-3;
  for (int iter = 0; iter < 500; ++iter) {
    double jtj[2][2] = {{0, 0}, {0, 0}}, jtr[2] = {0, 0};
    for (std::size_t i = 0; i < ns.size(); ++i) {
      const double n = ns[i];
      const double denom = 1.0 + (n - 1.0) * rho;
      const double e = n / denom;
      const double log_q = std::log1p(-p);
      const double miss = std::exp(e * log_q);
      const double resid = (1.0 - miss) - dr[i];
      const double d_p = e * miss / (1.0 - p);
      const double d_rho = miss * log_q * n * (n - 1.0) / (denom * denom);
      const double g[2] = {d_p, d_rho};
      for (int a = 0; a < 2; ++a) {
        jtr[a] += g[a] * resid;
        for (int b = 0; b < 2; ++b) jtj[a][b] += g[a] * g[b];
      }
    }
    const double a00 = jtj[0][0] * (1 + lambda), a11 = jtj[1][1] * (1 + lambda), a01 = jtj[0][1];
    const double det = a00 * a11 - a01 * a01;
    if (!(std::fabs(det) > 0)) break;
    const double step_p = -(a11 * jtr[0] - a01 * jtr[1]) / det;
    const double step_rho = -(a00 * jtr[1] - a01 * jtr[0]) / det;
    const double np = std::clamp(p + step_p, detail::kPMin, detail::kPMax);
    const double nrho = std::clamp(rho + step_rho, detail::kRhoMin, detail::kRhoMax);
    const double s = detail::sse(ns, dr, np, nrho);
    if (s < best) {
      const double moved = std::max(std::fabs(np - p), std::fabs(nrho - rho));
      p = np;
      rho = nrho;
      best = s;
      lambda = std::max(lambda / 10, 1e-12);
      if (moved < 1e-13) break;
    } else {
      lambda *= 10;
      if (lambda > 1e12) break;
    }
  }
  return {p, rho, std::sqrt(best / static_cast<double>(ns.size())), ns.size()};
}

// ---------------------------------------------------------------------------
// CSV

/// `n,dr,bound` rows; bound evaluated at the generating parameters.
inline std::string sim_curve_csv(const SimCurve& curve, double p_bar, double rho) {
  std::string out = "n,dr,bound\n";
  for (const auto& [n, dr] : curve.points)
    out += std::to_string(n) + "," + util::format_double(dr) + "," +
           util::format_double(dr_upper_bound(p_bar, rho, static_cast<double>(n))) + "\n";
  return out;
}

/// Reads the `n` and `dr` columns of a curve CSV (header required, extra columns ignored).
inline std::vector<std::pair<double, double>> read_curve_csv(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string line;
  if (!std::getline(in, line)) throw ParseError("curve.csv", 1, "empty file");
  const auto header = util::split(util::trim(line), ',');
  std::size_t n_col = header.size(), dr_col = header.size();
  for (std::size_t i = 0; i < header.size(); ++i) {
    const auto h = util::trim(header[i]);
    if (h == "n") n_col = i;
    if (h == "dr") dr_col = i;
  }
  if (n_col == header.size() || dr_col == header.size()) throw ParseError("curve.csv", 1, "need 'n' and 'dr' columns");
  std::vector<std::pair<double, double>> out;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (util::trim(line).empty()) continue;
    const auto cells = util::split(util::trim(line), ',');
    if (cells.size() <= std::max(n_col, dr_col)) throw ParseError("curve.csv", line_no, "too few columns");
    try {
      out.emplace_back(std::stod(cells[n_col]), std::stod(cells[dr_col]));
    } catch (const std::exception&) {
      throw ParseError("curve.csv", line_no, "non-numeric cell");
    }
  }
  return out;
}

}  // namespace vfkit::saturation

#endif  // VFKIT_SATURATION_HPP
