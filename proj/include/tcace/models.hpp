#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "tcace/data.hpp"
#include "tcace/error.hpp"
#include "tcace/math.hpp"

namespace tcace {

// ---------------------------------------------------------------------------
// Logistic regression (Newton-Raphson with step-halving)
// ---------------------------------------------------------------------------

struct LogisticConfig {
  int max_iter = 100;
  double tol = 1e-10;      // on the euclidean norm of the score
  double beta_cap = 30.0;  // any |beta_j| beyond this flags separation
};

struct LogisticFit {
  Vec beta;
  bool converged = false;
  int iterations = 0;
  double log_likelihood = 0.0;
  std::vector<double> ll_history;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["beta"] = std::vector<double>(beta.data(), beta.data() + beta.size());
    j["converged"] = converged;
    j["iterations"] = iterations;
    j["log_likelihood"] = log_likelihood;
    return j;
  }
};

namespace detail {

inline double bernoulli_loglik(const Vec& eta, const Vec& labels) {
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    // y*eta - log(1 + e^eta), computed without overflow
    const double e = eta[i];
    const double log1pe = e > 0.0 ? e + std::log1p(std::exp(-e))
                                  : std::log1p(std::exp(e));
    ll += labels[i] * e - log1pe;
  }
  return ll;
}

}  // namespace detail

inline LogisticFit fit_logistic(const Mat& x, const Vec& labels,
                                const LogisticConfig& cfg = {}) {
  const Eigen::Index m = x.rows();
  const Eigen::Index p = x.cols();
  if (labels.size() != m) {
    throw Error(errc::dimension_mismatch,
                "labels length " + std::to_string(labels.size()) +
                    " vs " + std::to_string(m) + " rows");
  }
  if (m == 0 || p == 0) throw Error(errc::empty_input, "empty design matrix");
  bool any0 = false, any1 = false;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (labels[i] == 0.0) {
      any0 = true;
    } else if (labels[i] == 1.0) {
      any1 = true;
    } else {
      throw Error(errc::non_binary_indicator, "labels must be 0/1", i + 1);
    }
  }
  if (!any0 || !any1) {
    throw Error(errc::separation, "labels are all-0 or all-1");
  }

  LogisticFit fit;
  fit.beta = Vec::Zero(p);
  Vec eta = Vec::Zero(m);
  double ll = detail::bernoulli_loglik(eta, labels);
  fit.ll_history.push_back(ll);

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    const Vec sig = eta.unaryExpr([](double e) { return sigmoid(e); });
    const Vec score = x.transpose() * (labels - sig);
    if (score.norm() <= cfg.tol) {
      fit.converged = true;
      break;
    }
    const Vec wdiag = sig.array() * (1.0 - sig.array());
    const Mat hess = x.transpose() * wdiag.asDiagonal() * x;
    Eigen::LDLT<Mat> ldlt(hess);
    const Vec dvec = ldlt.vectorD();
    const double dmax = dvec.maxCoeff();
    if (ldlt.info() != Eigen::Success || dvec.minCoeff() <= dmax * 1e-14 ||
        dmax <= 0.0) {
      throw Error(errc::singular_hessian,
                  "Hessian is singular at iteration " + std::to_string(iter));
    }
    const Vec step = ldlt.solve(score);
    // halve the step until the log-likelihood stops decreasing
    double t = 1.0;
    Vec beta_new;
    Vec eta_new;
    double ll_new = ll;
    for (int half = 0; half < 50; ++half) {
      beta_new = fit.beta + t * step;
      eta_new = x * beta_new;
      ll_new = detail::bernoulli_loglik(eta_new, labels);
      if (ll_new >= ll - 1e-12 * (std::abs(ll) + 1.0)) break;
      t *= 0.5;
    }
    fit.beta = beta_new;
    eta = eta_new;
    ll = ll_new;
    fit.iterations = iter;
    fit.ll_history.push_back(ll);
    if (fit.beta.cwiseAbs().maxCoeff() > cfg.beta_cap) {
      throw Error(errc::separation,
                  "coefficient magnitude exceeded " +
                      std::to_string(cfg.beta_cap) +
                      " (separated or near-separated labels)");
    }
  }
  if (!fit.converged) {
    // the loop may exit by break only on convergence; re-check the score in
    // case max_iter landed exactly on the solution
    const Vec sig = eta.unaryExpr([](double e) { return sigmoid(e); });
    if ((x.transpose() * (labels - sig)).norm() <= cfg.tol) {
      fit.converged = true;
    } else {
      throw Error(errc::not_converged,
                  "logistic fit did not reach tol within " +
                      std::to_string(cfg.max_iter) + " iterations");
    }
  }
  // Separated data has no finite MLE, but the score still decays below any
  // tolerance once the slope is large enough.  A stationary point where every
  // row is correctly classified with a pinned probability is that divergence
  // tail, not an interior optimum.
  constexpr double pin = 1e-6;
  bool all_pinned = true;
  for (Eigen::Index i = 0; i < m; ++i) {
    const double s = sigmoid(eta[i]);
    if (!((labels[i] == 1.0 && s >= 1.0 - pin) ||
          (labels[i] == 0.0 && s <= pin))) {
      all_pinned = false;
      break;
    }
  }
  if (all_pinned) {
    throw Error(errc::separation,
                "all fitted probabilities pinned to their labels");
  }
  fit.log_likelihood = ll;
  return fit;
}

// sigma(beta'x), clamped into [eps, 1-eps] so downstream weight denominators
// stay finite.  Callers that care count clamp hits by comparing against the
// interval bounds.
inline double predict_prob(const LogisticFit& fit,
                           const Eigen::Ref<const Vec>& x) {
  if (x.size() != fit.beta.size()) {
    throw Error(errc::dimension_mismatch,
                "x length " + std::to_string(x.size()) + " vs beta length " +
                    std::to_string(fit.beta.size()));
  }
  return clamp_prob(sigmoid(fit.beta.dot(x)));
}

// ---------------------------------------------------------------------------
// Weighted least squares via normal equations
// ---------------------------------------------------------------------------

inline Vec solve_weighted_least_squares(const Mat& x, const Vec& response,
                                        const Vec& weights) {
  const Eigen::Index m = x.rows();
  const Eigen::Index p = x.cols();
  if (response.size() != m || weights.size() != m) {
    throw Error(errc::dimension_mismatch, "rows, response, weights disagree");
  }
  if (m == 0 || p == 0) throw Error(errc::empty_input, "empty design matrix");
  Eigen::Index positive = 0;
  for (Eigen::Index i = 0; i < m; ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) {
      throw Error(errc::invalid_argument, "weights must be finite and >= 0",
                  i + 1);
    }
    if (weights[i] > 0.0) ++positive;
  }
  if (positive < p) {
    throw Error(errc::rank_deficient,
                "fewer strictly positive weights than columns");
  }
  const Mat xtw = x.transpose() * weights.asDiagonal();
  const Mat a = xtw * x;
  const Vec b = xtw * response;
  Eigen::LDLT<Mat> ldlt(a);
  const Vec dvec = ldlt.vectorD();
  const double dmax = dvec.cwiseAbs().maxCoeff();
  if (ldlt.info() != Eigen::Success || dmax <= 0.0 ||
      dvec.minCoeff() <= dmax * 1e-12) {
    throw Error(errc::rank_deficient,
                "normal equations are rank deficient or ill conditioned");
  }
  return ldlt.solve(b);
}

// ---------------------------------------------------------------------------
// Treatment assignment model
// ---------------------------------------------------------------------------

struct TreatmentModel {
  enum class Kind { KnownConstant, FittedLogistic };
  Kind kind = Kind::KnownConstant;
  double prob = 0.5;
  LogisticFit fit;

  static TreatmentModel known(double p) {
    if (!(p > 0.0 && p < 1.0)) {
      throw Error(errc::invalid_argument,
                  "known assignment probability must lie in (0,1)");
    }
    TreatmentModel t;
    t.kind = Kind::KnownConstant;
    t.prob = p;
    return t;
  }

  static TreatmentModel fitted(LogisticFit f) {
    TreatmentModel t;
    t.kind = Kind::FittedLogistic;
    t.fit = std::move(f);
    return t;
  }

  double prob_z1(const Eigen::Ref<const Vec>& x) const {
    return kind == Kind::KnownConstant ? prob : predict_prob(fit, x);
  }
};

// Fits P(Z=1 | S=1, X) on the study rows.
inline TreatmentModel fit_treatment_model(const Dataset& ds,
                                          const LogisticConfig& cfg = {}) {
  const Eigen::Index n = ds.n();
  Mat x(n, ds.p());
  Vec lab(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r = ds.study_rows[static_cast<std::size_t>(i)];
    x.row(i) = ds.x.row(r);
    lab[i] = ds.z[r];
  }
  return TreatmentModel::fitted(fit_logistic(x, lab, cfg));
}

// Fits P(S=1 | X) on all rows (study + target).
inline LogisticFit fit_selection_model(const Dataset& ds,
                                       const LogisticConfig& cfg = {}) {
  return fit_logistic(ds.x, ds.s, cfg);
}

// ---------------------------------------------------------------------------
// Arm-specific outcome / receipt regressions
// ---------------------------------------------------------------------------

struct OutcomeModels {
  Vec mu_y1, mu_y0, mu_d1, mu_d0;

  double predict_y1(const Eigen::Ref<const Vec>& x) const { return mu_y1.dot(x); }
  double predict_y0(const Eigen::Ref<const Vec>& x) const { return mu_y0.dot(x); }
  double predict_d1(const Eigen::Ref<const Vec>& x) const { return mu_d1.dot(x); }
  double predict_d0(const Eigen::Ref<const Vec>& x) const { return mu_d0.dot(x); }
};

inline OutcomeModels fit_outcome_models(const Dataset& ds) {
  const Eigen::Index p = ds.p();
  auto fit_arm = [&](const std::vector<Eigen::Index>& rows, const Vec& resp,
                     const char* what) {
    const Eigen::Index m = static_cast<Eigen::Index>(rows.size());
    if (m < p) {
      throw Error(errc::insufficient_stratum,
                  std::string(what) + " stratum has " + std::to_string(m) +
                      " rows for " + std::to_string(p) + " columns");
    }
    Mat x(m, p);
    Vec r(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const Eigen::Index row = rows[static_cast<std::size_t>(i)];
      x.row(i) = ds.x.row(row);
      r[i] = resp[row];
    }
    return solve_weighted_least_squares(x, r, Vec::Ones(m));
  };
  OutcomeModels out;
  out.mu_y1 = fit_arm(ds.treated_rows, ds.y, "treated");
  out.mu_y0 = fit_arm(ds.control_rows, ds.y, "control");
  out.mu_d1 = fit_arm(ds.treated_rows, ds.d, "treated");
  out.mu_d0 = fit_arm(ds.control_rows, ds.d, "control");
  return out;
}

}  // namespace tcace
