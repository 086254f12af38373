#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcace/data.hpp"
#include "tcace/error.hpp"
#include "tcace/math.hpp"
#include "tcace/models.hpp"

namespace tcace {

// ---------------------------------------------------------------------------
// Generalization weights
// ---------------------------------------------------------------------------

// Per study row i:  w_z(x_i) = [P(S=0|x_i)/P(S=1|x_i)] / P(Z=z|S=1,x_i).
// Entries align with Dataset::study_rows.
struct WeightSet {
  std::vector<Eigen::Index> unit_index;  // study-row indices into the dataset
  Vec w1, w0;
  Vec sel_prob;                // clamped P(S=1|x) per study row (diagnostic)
  int clamped_selection = 0;   // study rows whose selection prob hit a clamp
  int clamped_treatment = 0;   // study rows whose assignment prob hit a clamp

  bool overlap_violation() const {
    return clamped_selection > 0 || clamped_treatment > 0;
  }
};

inline WeightSet compute_weights(const Dataset& ds, const LogisticFit& selection,
                                 const TreatmentModel& treatment) {
  if (selection.beta.size() != ds.p()) {
    throw Error(errc::dimension_mismatch,
                "selection model dimension does not match dataset");
  }
  if (treatment.kind == TreatmentModel::Kind::FittedLogistic &&
      treatment.fit.beta.size() != ds.p()) {
    throw Error(errc::dimension_mismatch,
                "treatment model dimension does not match dataset");
  }
  const Eigen::Index n = ds.n();
  WeightSet w;
  w.unit_index = ds.study_rows;
  w.w1.resize(n);
  w.w0.resize(n);
  w.sel_prob.resize(n);
  constexpr double lo = prob_clamp_eps;
  constexpr double hi = 1.0 - prob_clamp_eps;
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = ds.study_rows[static_cast<std::size_t>(i)];
    const double ps = predict_prob(selection, ds.x.row(r).transpose());
    if (ps <= lo || ps >= hi) ++w.clamped_selection;
    const double odds = (1.0 - ps) / ps;
    double pz = treatment.prob_z1(ds.x.row(r).transpose());
    if (treatment.kind == TreatmentModel::Kind::FittedLogistic &&
        (pz <= lo || pz >= hi)) {
      ++w.clamped_treatment;
    }
    w.sel_prob[i] = ps;
    w.w1[i] = odds / pz;
    w.w0[i] = odds / (1.0 - pz);
  }
  return w;
}

// ---------------------------------------------------------------------------
// Theta decomposition of the weighted estimator
// ---------------------------------------------------------------------------

// Order: (theta1..theta6) =
//   (sum w1*Z*Y, sum w0*(1-Z)*Y, sum w1*Z, sum w0*(1-Z),
//    sum w1*Z*D, sum w0*(1-Z)*D), each divided by the total unit count n+N.
using Theta = Eigen::Matrix<double, 6, 1>;

// Per-unit contributions: an (n+N) x 6 matrix whose column means give Theta.
// Target rows contribute zero to every component.
inline Mat per_unit_moments(const Dataset& ds, const WeightSet& w) {
  Mat h = Mat::Zero(ds.units(), 6);
  for (std::size_t k = 0; k < w.unit_index.size(); ++k) {
    const Eigen::Index r = w.unit_index[k];
    const auto ki = static_cast<Eigen::Index>(k);
    if (ds.z[r] == 1.0) {
      h(r, 0) = w.w1[ki] * ds.y[r];
      h(r, 2) = w.w1[ki];
      h(r, 4) = w.w1[ki] * ds.d[r];
    } else {
      h(r, 1) = w.w0[ki] * ds.y[r];
      h(r, 3) = w.w0[ki];
      h(r, 5) = w.w0[ki] * ds.d[r];
    }
  }
  return h;
}

inline Theta weighted_components(const Dataset& ds, const WeightSet& w) {
  if (static_cast<Eigen::Index>(w.unit_index.size()) != ds.n() ||
      w.w1.size() != ds.n() || w.w0.size() != ds.n()) {
    throw Error(errc::dimension_mismatch, "weights not aligned to study rows");
  }
  Theta theta = Theta::Zero();
  for (std::size_t k = 0; k < w.unit_index.size(); ++k) {
    const Eigen::Index r = w.unit_index[k];
    const auto ki = static_cast<Eigen::Index>(k);
    if (ds.z[r] == 1.0) {
      theta[0] += w.w1[ki] * ds.y[r];
      theta[2] += w.w1[ki];
      theta[4] += w.w1[ki] * ds.d[r];
    } else {
      theta[1] += w.w0[ki] * ds.y[r];
      theta[3] += w.w0[ki];
      theta[5] += w.w0[ki] * ds.d[r];
    }
  }
  theta /= static_cast<double>(ds.units());
  return theta;
}

// Hajek contrasts derived from Theta.
inline double theta_tau_y(const Theta& t) {
  return t[0] / t[2] - t[1] / t[3];
}
inline double theta_tau_d(const Theta& t) {
  return t[4] / t[2] - t[5] / t[3];
}

// ---------------------------------------------------------------------------
// Point estimates
// ---------------------------------------------------------------------------

struct EstimatorOptions {
  double weak_hard_tol = 1e-8;   // |first stage| at or below this is an error
  double weak_soft_tol = 0.05;   // below this only flags the estimate
  double proxy_threshold = 0.15; // "large discrepancy" cutoff for the proxy
};

struct CausalEstimate {
  std::string estimand;  // "t-cace" | "t-itt"
  std::string method;    // "weighted" | "wls" | "mr" | "weighted-pc"
  double point = missing;
  double se = missing;
  double ci_lo = missing, ci_hi = missing;
  double level = missing;
  double first_stage = missing;
  bool weak_first_stage = false;
  std::string variance_mode = "none";
  std::map<std::string, double> diagnostics;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["estimand"] = estimand;
    j["method"] = method;
    j["point"] = point;
    if (!is_missing(se)) j["se"] = se;
    if (!is_missing(ci_lo)) {
      j["ci"] = {ci_lo, ci_hi};
      j["level"] = level;
    }
    if (!is_missing(first_stage)) j["first_stage"] = first_stage;
    j["weak_first_stage"] = weak_first_stage;
    j["variance_mode"] = variance_mode;
    if (!diagnostics.empty()) j["diagnostics"] = diagnostics;
    return j;
  }
};

namespace detail {

inline void guard_first_stage(double tau_d, const EstimatorOptions& opts,
                              CausalEstimate* est) {
  if (std::abs(tau_d) <= opts.weak_hard_tol) {
    throw Error(errc::weak_first_stage,
                "estimated first stage " + std::to_string(tau_d) +
                    " is numerically zero");
  }
  est->first_stage = tau_d;
  est->weak_first_stage = tau_d < opts.weak_soft_tol;
}

}  // namespace detail

inline CausalEstimate weighted_tcace(const Dataset& ds, const WeightSet& w,
                                     const EstimatorOptions& opts = {}) {
  const Theta t = weighted_components(ds, w);
  const double tau_y = theta_tau_y(t);
  const double tau_d = theta_tau_d(t);
  CausalEstimate est;
  est.estimand = "t-cace";
  est.method = "weighted";
  detail::guard_first_stage(tau_d, opts, &est);
  est.point = tau_y / tau_d;
  est.diagnostics["tau_y"] = tau_y;
  est.diagnostics["tau_d"] = tau_d;
  if (w.overlap_violation()) {
    est.diagnostics["overlap_clamped"] =
        static_cast<double>(w.clamped_selection + w.clamped_treatment);
  }
  return est;
}

// Target-population intention-to-treat effect: the tau_y contrast alone.
inline CausalEstimate weighted_itt(const Dataset& ds, const WeightSet& w) {
  const Theta t = weighted_components(ds, w);
  CausalEstimate est;
  est.estimand = "t-itt";
  est.method = "weighted";
  est.point = theta_tau_y(t);
  est.first_stage = theta_tau_d(t);
  return est;
}

// ---------------------------------------------------------------------------
// Weighted least squares estimator
// ---------------------------------------------------------------------------

// Z-coefficients of weighted regressions of Y and D on [Z | X_wls] over the
// study rows, using each unit's own-arm weight.
struct WlsFit {
  double tau_y = 0.0, tau_d = 0.0;
  Vec gamma_y, gamma_d;
  std::vector<Eigen::Index> wls_cols;  // columns of dataset.x in the design
};

inline WlsFit fit_wls(const Dataset& ds, const WeightSet& w,
                      std::vector<Eigen::Index> wls_cols = {}) {
  if (wls_cols.empty()) {
    wls_cols.resize(static_cast<std::size_t>(ds.p()));
    for (Eigen::Index j = 0; j < ds.p(); ++j) {
      wls_cols[static_cast<std::size_t>(j)] = j;
    }
  }
  const Eigen::Index n = ds.n();
  const Eigen::Index q = static_cast<Eigen::Index>(wls_cols.size());
  Mat design(n, q + 1);
  Vec wy(n), wd(n), wt(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = ds.study_rows[static_cast<std::size_t>(i)];
    design(i, 0) = ds.z[r];
    for (Eigen::Index j = 0; j < q; ++j) {
      design(i, j + 1) = ds.x(r, wls_cols[static_cast<std::size_t>(j)]);
    }
    wt[i] = ds.z[r] == 1.0 ? w.w1[i] : w.w0[i];
    wy[i] = ds.y[r];
    wd[i] = ds.d[r];
  }
  const Vec coef_y = solve_weighted_least_squares(design, wy, wt);
  const Vec coef_d = solve_weighted_least_squares(design, wd, wt);
  WlsFit fit;
  fit.tau_y = coef_y[0];
  fit.tau_d = coef_d[0];
  fit.gamma_y = coef_y.tail(q);
  fit.gamma_d = coef_d.tail(q);
  fit.wls_cols = std::move(wls_cols);
  return fit;
}

inline CausalEstimate wls_tcace(const Dataset& ds, const WeightSet& w,
                                const EstimatorOptions& opts = {},
                                std::vector<Eigen::Index> wls_cols = {}) {
  const WlsFit fit = fit_wls(ds, w, std::move(wls_cols));
  CausalEstimate est;
  est.estimand = "t-cace";
  est.method = "wls";
  detail::guard_first_stage(fit.tau_d, opts, &est);
  est.point = fit.tau_y / fit.tau_d;
  est.diagnostics["tau_y"] = fit.tau_y;
  est.diagnostics["tau_d"] = fit.tau_d;
  return est;
}

// ---------------------------------------------------------------------------
// Multiply robust estimator
// ---------------------------------------------------------------------------

inline CausalEstimate mr_tcace(const Dataset& ds, const WeightSet& w,
                               const OutcomeModels& models,
                               const EstimatorOptions& opts = {}) {
  double sw1 = 0.0, sw0 = 0.0;
  double ry1 = 0.0, ry0 = 0.0, rd1 = 0.0, rd0 = 0.0;
  for (std::size_t k = 0; k < w.unit_index.size(); ++k) {
    const Eigen::Index r = w.unit_index[k];
    const auto ki = static_cast<Eigen::Index>(k);
    const Vec xr = ds.x.row(r).transpose();
    if (ds.z[r] == 1.0) {
      sw1 += w.w1[ki];
      ry1 += w.w1[ki] * (ds.y[r] - models.predict_y1(xr));
      rd1 += w.w1[ki] * (ds.d[r] - models.predict_d1(xr));
    } else {
      sw0 += w.w0[ki];
      ry0 += w.w0[ki] * (ds.y[r] - models.predict_y0(xr));
      rd0 += w.w0[ki] * (ds.d[r] - models.predict_d0(xr));
    }
  }
  if (sw1 <= 0.0 || sw0 <= 0.0) {
    throw Error(errc::empty_arm, "a study arm carries no weight");
  }
  double tgt_y = 0.0, tgt_d = 0.0;
  for (Eigen::Index r : ds.target_rows) {
    const Vec xr = ds.x.row(r).transpose();
    tgt_y += models.predict_y1(xr) - models.predict_y0(xr);
    tgt_d += models.predict_d1(xr) - models.predict_d0(xr);
  }
  const double big_n = static_cast<double>(ds.big_n());
  const double tau_y = ry1 / sw1 - ry0 / sw0 + tgt_y / big_n;
  const double tau_d = rd1 / sw1 - rd0 / sw0 + tgt_d / big_n;
  CausalEstimate est;
  est.estimand = "t-cace";
  est.method = "mr";
  detail::guard_first_stage(tau_d, opts, &est);
  est.point = tau_y / tau_d;
  est.diagnostics["tau_y"] = tau_y;
  est.diagnostics["tau_d"] = tau_d;
  return est;
}

// ---------------------------------------------------------------------------
// Partial compliance (auxiliary target-side treatment receipt)
// ---------------------------------------------------------------------------

inline CausalEstimate partial_compliance_tcace(const Dataset& ds,
                                               const WeightSet& w,
                                               const EstimatorOptions& opts = {}) {
  double sum_z = 0.0, sum_d = 0.0;
  for (Eigen::Index r : ds.target_rows) {
    if (is_missing(ds.z[r])) {
      throw Error(errc::missing_target_assignment,
                  "target row lacks assignment z", r + 1, "z");
    }
    if (is_missing(ds.d_target[r])) {
      throw Error(errc::missing_target_assignment,
                  "target row lacks treatment receipt", r + 1, "d_target");
    }
    sum_z += ds.z[r];
    sum_d += ds.d_target[r];
  }
  if (sum_d <= 0.0) {
    throw Error(errc::no_target_compliance,
                "no target unit received treatment");
  }
  const Theta t = weighted_components(ds, w);
  CausalEstimate est;
  est.estimand = "t-cace";
  est.method = "weighted-pc";
  est.point = theta_tau_y(t) * (sum_z / sum_d);
  est.first_stage = theta_tau_d(t);
  est.weak_first_stage = est.first_stage < opts.weak_soft_tol;
  est.diagnostics["target_assigned"] = sum_z;
  est.diagnostics["target_received"] = sum_d;
  return est;
}

// ---------------------------------------------------------------------------
// Proxy compliance diagnostic
// ---------------------------------------------------------------------------

struct ProxyDiagnostic {
  double proxy_mean = missing;
  double tau_d = missing;
  double difference = missing;
  double threshold = 0.15;
  bool large_discrepancy = false;
  Eigen::Index rows_with_proxy = 0;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["proxy_mean"] = proxy_mean;
    j["tau_d"] = tau_d;
    j["difference"] = difference;
    j["threshold"] = threshold;
    j["large_discrepancy"] = large_discrepancy;
    j["rows_with_proxy"] = rows_with_proxy;
    return j;
  }
};

inline ProxyDiagnostic proxy_compliance_diagnostic(
    const Dataset& ds, const WeightSet& w, const EstimatorOptions& opts = {}) {
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index r : ds.target_rows) {
    if (!is_missing(ds.c_proxy[r])) {
      sum += ds.c_proxy[r];
      ++count;
    }
  }
  if (count == 0) {
    throw Error(errc::no_proxy_data, "no target row has a compliance proxy");
  }
  const Theta t = weighted_components(ds, w);
  ProxyDiagnostic diag;
  diag.rows_with_proxy = count;
  diag.proxy_mean = sum / static_cast<double>(count);
  diag.tau_d = theta_tau_d(t);
  diag.difference = diag.proxy_mean - diag.tau_d;
  diag.threshold = opts.proxy_threshold;
  diag.large_discrepancy = std::abs(diag.difference) > opts.proxy_threshold;
  return diag;
}

}  // namespace tcace
