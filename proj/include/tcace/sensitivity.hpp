#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcace/data.hpp"
#include "tcace/error.hpp"
#include "tcace/estimators.hpp"
#include "tcace/inference.hpp"
#include "tcace/math.hpp"
#include "tcace/models.hpp"
#include "tcace/rng.hpp"

namespace tcace {

// ---------------------------------------------------------------------------
// Extrema of a Hajek mean under bounded weight perturbations
// ---------------------------------------------------------------------------

enum class Direction { minimum, maximum };

// Precomputed sorted prefix sums for one arm.  The extremum of
//   sum_i r_i w_i v_i / sum_i r_i w_i  over  r_i in [1/gamma, gamma]
// is attained at a vertex that splits the value-sorted order: r = gamma on one
// side of a threshold and 1/gamma on the other.  Scanning all n+1 splits over
// prefix sums gives the exact optimum in O(n) after the sort.
struct ArmScan {
  std::vector<double> pre_wv;  // prefix sums of w*v in ascending value order
  std::vector<double> pre_w;   // prefix sums of w
  double tot_wv = 0.0;
  double tot_w = 0.0;

  static ArmScan from(const std::vector<double>& values,
                      const std::vector<double>& weights) {
    const std::size_t n = values.size();
    if (n == 0) throw Error(errc::empty_arm, "no units in the arm");
    if (weights.size() != n) {
      throw Error(errc::dimension_mismatch, "values and weights disagree");
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(weights[i] > 0.0) || !std::isfinite(weights[i])) {
        throw Error(errc::invalid_argument, "weights must be finite and > 0",
                    static_cast<long>(i) + 1);
      }
      order[i] = i;
    }
    // ties in value fall back to the original index; equal values give equal
    // objectives, so the result does not depend on their relative order
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (values[a] != values[b]) return values[a] < values[b];
      return a < b;
    });
    ArmScan scan;
    scan.pre_wv.resize(n + 1, 0.0);
    scan.pre_w.resize(n + 1, 0.0);
    for (std::size_t k = 0; k < n; ++k) {
      const std::size_t i = order[k];
      scan.pre_wv[k + 1] = scan.pre_wv[k] + weights[i] * values[i];
      scan.pre_w[k + 1] = scan.pre_w[k] + weights[i];
    }
    scan.tot_wv = scan.pre_wv[n];
    scan.tot_w = scan.pre_w[n];
    return scan;
  }

  double extremum(double gamma, Direction dir) const {
    if (!(gamma >= 1.0)) {
      throw Error(errc::invalid_argument, "gamma must be >= 1");
    }
    if (gamma == 1.0) return tot_wv / tot_w;
    const double inv = 1.0 / gamma;
    const std::size_t n = pre_w.size() - 1;
    // maximizing puts gamma on the high-value suffix; minimizing on the prefix
    const double lo_r = dir == Direction::maximum ? inv : gamma;
    const double hi_r = dir == Direction::maximum ? gamma : inv;
    double best = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k <= n; ++k) {
      const double num = lo_r * pre_wv[k] + hi_r * (tot_wv - pre_wv[k]);
      const double den = lo_r * pre_w[k] + hi_r * (tot_w - pre_w[k]);
      const double val = num / den;
      if (std::isnan(best) || (dir == Direction::maximum ? val > best
                                                         : val < best)) {
        best = val;
      }
    }
    return best;
  }
};

inline double arm_extremum(const std::vector<double>& values,
                           const std::vector<double>& weights, double gamma,
                           Direction dir) {
  return ArmScan::from(values, weights).extremum(gamma, dir);
}

// ---------------------------------------------------------------------------
// Quadruple of estimator extrema
// ---------------------------------------------------------------------------

struct Quadruple {
  double min_y = 0.0, max_y = 0.0;
  double min_d = 0.0, max_d = 0.0;
};

// Arm scans for the four Hajek means entering tau_y and tau_d.  The scans are
// gamma-independent, so a single build serves a whole gamma grid.
struct QuadScans {
  ArmScan y_treated, y_control, d_treated, d_control;

  static QuadScans from(const Dataset& ds, const WeightSet& w) {
    std::vector<double> yt, dt, wt, yc, dc, wc;
    for (std::size_t k = 0; k < w.unit_index.size(); ++k) {
      const Eigen::Index r = w.unit_index[k];
      const auto ki = static_cast<Eigen::Index>(k);
      if (ds.z[r] == 1.0) {
        yt.push_back(ds.y[r]);
        dt.push_back(ds.d[r]);
        wt.push_back(w.w1[ki]);
      } else {
        yc.push_back(ds.y[r]);
        dc.push_back(ds.d[r]);
        wc.push_back(w.w0[ki]);
      }
    }
    QuadScans scans;
    scans.y_treated = ArmScan::from(yt, wt);
    scans.y_control = ArmScan::from(yc, wc);
    scans.d_treated = ArmScan::from(dt, wt);
    scans.d_control = ArmScan::from(dc, wc);
    return scans;
  }

  // Each bound optimizes the treated-arm and control-arm means independently.
  Quadruple quad(double gamma) const {
    Quadruple q;
    q.max_y = y_treated.extremum(gamma, Direction::maximum) -
              y_control.extremum(gamma, Direction::minimum);
    q.min_y = y_treated.extremum(gamma, Direction::minimum) -
              y_control.extremum(gamma, Direction::maximum);
    q.max_d = d_treated.extremum(gamma, Direction::maximum) -
              d_control.extremum(gamma, Direction::minimum);
    q.min_d = d_treated.extremum(gamma, Direction::minimum) -
              d_control.extremum(gamma, Direction::maximum);
    return q;
  }
};

inline Quadruple sensitivity_quadruple(const Dataset& ds, const WeightSet& w,
                                       double gamma) {
  return QuadScans::from(ds, w).quad(gamma);
}

// ---------------------------------------------------------------------------
// Ratio interval from a quadruple
// ---------------------------------------------------------------------------

// Conservative bound for the ratio: the numerator range is divided by the
// denominator value that pushes each end outward.  A nonpositive denominator
// minimum leaves the bound undefined.
inline Interval sensitivity_interval(const Quadruple& q,
                                     double div_tol = 1e-10) {
  if (!(q.min_d > div_tol)) {
    throw Error(errc::first_stage_sign_violation,
                "minimum first stage " + std::to_string(q.min_d) +
                    " is not positive; the ratio bound is undefined");
  }
  Interval iv;
  iv.lo = q.min_y >= 0.0 ? q.min_y / q.max_d : q.min_y / q.min_d;
  iv.hi = q.max_y >= 0.0 ? q.max_y / q.min_d : q.max_y / q.max_d;
  return iv;
}

// ---------------------------------------------------------------------------
// Sensitivity configuration and report
// ---------------------------------------------------------------------------

inline std::vector<double> default_gamma_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(1.0 + 0.05 * i);
  return grid;
}

struct SensitivityOptions {
  std::vector<double> grid;        // empty -> default_gamma_grid()
  int bootstrap_b = 0;             // 0 disables bootstrap bands
  std::uint64_t seed = 0;
  double level = 0.95;
  double gamma_max = 20.0;         // search limit for the zero-crossing
  double bisect_tol = 1e-4;
  double div_tol = 1e-10;
  int max_redraw = 100;
  std::optional<double> known_treatment_prob;  // fit a logistic model if unset
  LogisticConfig logit;
};

struct GammaRow {
  double gamma = 1.0;
  Quadruple quad;
  bool interval_defined = false;
  Interval interval;
  bool boot_defined = false;
  Interval boot;
};

struct SensitivityReport {
  std::vector<GammaRow> rows;
  std::optional<double> gamma_star;
  std::string gamma_star_mode;  // "point" | "bootstrap"
  std::vector<std::pair<std::string, double>> benchmarks;
  double point = missing;  // estimate at gamma = 1

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["point"] = point;
    j["rows"] = nlohmann::ordered_json::array();
    for (const GammaRow& r : rows) {
      nlohmann::ordered_json row;
      row["gamma"] = r.gamma;
      row["quad"] = {{"min_y", r.quad.min_y},
                     {"max_y", r.quad.max_y},
                     {"min_d", r.quad.min_d},
                     {"max_d", r.quad.max_d}};
      if (r.interval_defined) {
        row["interval"] = {r.interval.lo, r.interval.hi};
      } else {
        row["interval"] = nullptr;
      }
      if (r.boot_defined) {
        row["bootstrap_ci"] = {r.boot.lo, r.boot.hi};
      }
      j["rows"].push_back(std::move(row));
    }
    if (gamma_star) {
      j["gamma_star"] = *gamma_star;
    } else {
      j["gamma_star"] = nullptr;
    }
    j["gamma_star_mode"] = gamma_star_mode;
    if (!benchmarks.empty()) {
      j["benchmarks"] = nlohmann::ordered_json::array();
      for (const auto& [label, g] : benchmarks) {
        j["benchmarks"].push_back({{"omitted", label}, {"gamma_hat", g}});
      }
    }
    return j;
  }

  std::string to_csv() const {
    std::string out = "gamma,lo,hi,boot_lo,boot_hi\n";
    const auto num = [](double v) {
      char buf[32];
      const auto res = std::to_chars(buf, buf + sizeof buf, v);
      return std::string(buf, res.ptr);
    };
    for (const GammaRow& r : rows) {
      out += num(r.gamma);
      out += ',';
      if (r.interval_defined) {
        out += num(r.interval.lo) + "," + num(r.interval.hi);
      } else {
        out += ",";
      }
      out += ',';
      if (r.boot_defined) {
        out += num(r.boot.lo) + "," + num(r.boot.hi);
      } else {
        out += ",";
      }
      out += '\n';
    }
    return out;
  }
};

namespace detail {

// Percentile over replicate endpoints where some replicates may be unbounded
// (their first-stage bound crossed zero).  Unbounded entries sort to the
// relevant end; if the requested quantile touches one, the result stays
// unbounded and the caller marks the band undefined.
inline double endpoint_quantile(std::vector<double> v, double pct) {
  std::sort(v.begin(), v.end());
  const double h = (pct / 100.0) * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const auto hi = static_cast<std::size_t>(std::ceil(h));
  const double f = h - std::floor(h);
  if (!std::isfinite(v[lo]) || !std::isfinite(v[hi])) {
    if (f == 0.0) return v[lo];
    if (f == 1.0) return v[hi];
    return std::isfinite(v[hi]) ? v[lo] : v[hi];
  }
  return v[lo] + f * (v[hi] - v[lo]);
}

struct CurveBootstrap {
  std::vector<QuadScans> scans;  // one per replicate
  int redraws = 0;
};

// Refit the full weighting pipeline on stratified resamples and keep the
// gamma-independent arm scans; every gamma evaluation afterwards is a cheap
// prefix-sum pass.
inline CurveBootstrap curve_bootstrap_scans(const Dataset& ds,
                                            const SensitivityOptions& opts) {
  CurveBootstrap out;
  out.scans.resize(static_cast<std::size_t>(opts.bootstrap_b));
  std::vector<int> redraws(static_cast<std::size_t>(opts.bootstrap_b), 0);
  const rng::Stream root = rng::root(opts.seed).fork(rng::p_bootstrap);
  parallel_for(static_cast<std::size_t>(opts.bootstrap_b), [&](std::size_t ri) {
    for (int attempt = 0; attempt < opts.max_redraw; ++attempt) {
      rng::Stream stream = root.fork(static_cast<std::uint64_t>(ri),
                                     static_cast<std::uint64_t>(attempt));
      try {
        const Dataset res = ds.gather(stratified_resample(ds, stream));
        const LogisticFit sel = fit_selection_model(res, opts.logit);
        const TreatmentModel tm =
            opts.known_treatment_prob
                ? TreatmentModel::known(*opts.known_treatment_prob)
                : fit_treatment_model(res, opts.logit);
        const WeightSet w = compute_weights(res, sel, tm);
        out.scans[ri] = QuadScans::from(res, w);
        redraws[ri] = attempt;
        return;
      } catch (const Error& e) {
        if (!is_resample_failure(e)) throw;
      }
    }
    throw Error(errc::degenerate_resample,
                "sensitivity replicate " + std::to_string(ri) + " failed " +
                    std::to_string(opts.max_redraw) + " redraw attempts");
  });
  for (int v : redraws) out.redraws += v;
  return out;
}

// Replicate interval endpoints at one gamma; unbounded when the replicate's
// first-stage minimum is nonpositive.
inline void replicate_endpoints(const std::vector<QuadScans>& scans,
                                double gamma, double div_tol,
                                std::vector<double>* lo,
                                std::vector<double>* hi) {
  lo->clear();
  hi->clear();
  for (const QuadScans& s : scans) {
    const Quadruple q = s.quad(gamma);
    if (!(q.min_d > div_tol)) {
      lo->push_back(-std::numeric_limits<double>::infinity());
      hi->push_back(std::numeric_limits<double>::infinity());
    } else {
      const Interval iv = sensitivity_interval(q, div_tol);
      lo->push_back(iv.lo);
      hi->push_back(iv.hi);
    }
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Zero-crossing threshold
// ---------------------------------------------------------------------------

// Smallest gamma in [1, gamma_max] whose interval contains zero (inclusive).
// The interval endpoints are monotone in gamma, so bisection applies; a
// first-stage sign violation bounds nothing and counts as containing zero.
// Returns nothing when even gamma_max keeps zero excluded.
inline std::optional<double> gamma_star_from_scans(
    const QuadScans& scans, const SensitivityOptions& opts) {
  const auto contains_zero = [&](double gamma) {
    const Quadruple q = scans.quad(gamma);
    if (!(q.min_d > opts.div_tol)) return true;
    const Interval iv = sensitivity_interval(q, opts.div_tol);
    return iv.lo <= 0.0 && 0.0 <= iv.hi;
  };
  if (contains_zero(1.0)) return 1.0;
  if (!contains_zero(opts.gamma_max)) return std::nullopt;
  double lo = 1.0, hi = opts.gamma_max;
  while (hi - lo > opts.bisect_tol) {
    const double mid = 0.5 * (lo + hi);
    (contains_zero(mid) ? hi : lo) = mid;
  }
  return hi;
}

inline std::optional<double> gamma_star(const Dataset& ds, const WeightSet& w,
                                        const SensitivityOptions& opts = {}) {
  return gamma_star_from_scans(QuadScans::from(ds, w), opts);
}

// ---------------------------------------------------------------------------
// Omission benchmarking
// ---------------------------------------------------------------------------

// Refits the selection model without covariate k and reports the largest
// multiplicative change in the selection odds over the study rows.  The
// treatment factor is shared by both fits, so it cancels.
inline double benchmark_gamma_omission(const Dataset& ds,
                                       const LogisticFit& selection_full,
                                       Eigen::Index covariate_index,
                                       const LogisticConfig& cfg = {}) {
  const Eigen::Index p = ds.p();
  if (covariate_index <= 0 || covariate_index >= p) {
    throw Error(errc::invalid_argument,
                "covariate index must name a non-intercept column");
  }
  if (selection_full.beta.size() != p) {
    throw Error(errc::dimension_mismatch,
                "selection model does not match dataset");
  }
  Mat reduced(ds.units(), p - 1);
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < p; ++j) {
    if (j == covariate_index) continue;
    reduced.col(c++) = ds.x.col(j);
  }
  const LogisticFit refit = fit_logistic(reduced, ds.s, cfg);
  double max_ratio = -std::numeric_limits<double>::infinity();
  double min_ratio = std::numeric_limits<double>::infinity();
  for (Eigen::Index r : ds.study_rows) {
    const double p_full = predict_prob(selection_full, ds.x.row(r).transpose());
    Vec xr(p - 1);
    c = 0;
    for (Eigen::Index j = 0; j < p; ++j) {
      if (j == covariate_index) continue;
      xr[c++] = ds.x(r, j);
    }
    const double p_red = predict_prob(refit, xr);
    const double odds_full = (1.0 - p_full) / p_full;
    const double odds_red = (1.0 - p_red) / p_red;
    const double ratio = odds_full / odds_red;
    max_ratio = std::max(max_ratio, ratio);
    min_ratio = std::min(min_ratio, ratio);
  }
  return std::max(max_ratio, 1.0 / min_ratio);
}

// ---------------------------------------------------------------------------
// Full curve over a gamma grid
// ---------------------------------------------------------------------------

inline SensitivityReport sensitivity_curve(const Dataset& ds,
                                           SensitivityOptions opts = {}) {
  if (opts.grid.empty()) opts.grid = default_gamma_grid();
  for (std::size_t i = 0; i < opts.grid.size(); ++i) {
    if (!(opts.grid[i] >= 1.0) ||
        (i > 0 && !(opts.grid[i] > opts.grid[i - 1]))) {
      throw Error(errc::invalid_argument,
                  "gamma grid must be ascending with every value >= 1");
    }
  }
  const LogisticFit sel = fit_selection_model(ds, opts.logit);
  const TreatmentModel tm =
      opts.known_treatment_prob
          ? TreatmentModel::known(*opts.known_treatment_prob)
          : fit_treatment_model(ds, opts.logit);
  const WeightSet w = compute_weights(ds, sel, tm);
  const QuadScans scans = QuadScans::from(ds, w);

  SensitivityReport report;
  report.point = weighted_tcace(ds, w).point;
  for (double gamma : opts.grid) {
    GammaRow row;
    row.gamma = gamma;
    row.quad = scans.quad(gamma);
    if (row.quad.min_d > opts.div_tol) {
      row.interval = sensitivity_interval(row.quad, opts.div_tol);
      row.interval_defined = true;
    }
    report.rows.push_back(row);
  }

  if (opts.bootstrap_b > 0) {
    const detail::CurveBootstrap boot = detail::curve_bootstrap_scans(ds, opts);
    const double alpha = 1.0 - opts.level;
    std::vector<double> lo, hi;
    for (GammaRow& row : report.rows) {
      detail::replicate_endpoints(boot.scans, row.gamma, opts.div_tol, &lo,
                                  &hi);
      const double b_lo = detail::endpoint_quantile(lo, 100.0 * alpha / 2.0);
      const double b_hi =
          detail::endpoint_quantile(hi, 100.0 * (1.0 - alpha / 2.0));
      if (std::isfinite(b_lo) && std::isfinite(b_hi)) {
        row.boot = Interval{b_lo, b_hi};
        row.boot_defined = true;
      }
    }
    // threshold search against the bootstrap band
    const auto band_contains_zero = [&](double gamma) {
      detail::replicate_endpoints(boot.scans, gamma, opts.div_tol, &lo, &hi);
      const double b_lo = detail::endpoint_quantile(lo, 100.0 * alpha / 2.0);
      const double b_hi =
          detail::endpoint_quantile(hi, 100.0 * (1.0 - alpha / 2.0));
      return b_lo <= 0.0 && 0.0 <= b_hi;
    };
    report.gamma_star_mode = "bootstrap";
    if (band_contains_zero(1.0)) {
      report.gamma_star = 1.0;
    } else if (band_contains_zero(opts.gamma_max)) {
      double blo = 1.0, bhi = opts.gamma_max;
      while (bhi - blo > opts.bisect_tol) {
        const double mid = 0.5 * (blo + bhi);
        (band_contains_zero(mid) ? bhi : blo) = mid;
      }
      report.gamma_star = bhi;
    }
  } else {
    report.gamma_star_mode = "point";
    report.gamma_star = gamma_star_from_scans(scans, opts);
  }
  return report;
}

}  // namespace tcace
