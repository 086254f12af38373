#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "tcace/data.hpp"
#include "tcace/error.hpp"
#include "tcace/estimators.hpp"
#include "tcace/math.hpp"
#include "tcace/models.hpp"
#include "tcace/rng.hpp"

namespace tcace {

// ---------------------------------------------------------------------------
// Gradient of the ratio g(theta)
// ---------------------------------------------------------------------------

inline void check_theta_denominators(const Theta& t) {
  if (t[2] == 0.0 || t[3] == 0.0) {
    throw Error(errc::degenerate_denominator, "theta3 or theta4 is zero");
  }
}

// g(theta) = (t1/t3 - t2/t4) / (t5/t3 - t6/t4)
inline double g_tcace(const Theta& t) {
  check_theta_denominators(t);
  const double d2 = theta_tau_d(t);
  if (d2 == 0.0) {
    throw Error(errc::degenerate_denominator, "first-stage contrast is zero");
  }
  return theta_tau_y(t) / d2;
}

inline double g_itt(const Theta& t) {
  check_theta_denominators(t);
  return theta_tau_y(t);
}

// Closed-form gradient of g.
inline Theta grad_g_tcace(const Theta& t) {
  check_theta_denominators(t);
  const double d1 = theta_tau_y(t);
  const double d2 = theta_tau_d(t);
  if (d2 == 0.0) {
    throw Error(errc::degenerate_denominator, "first-stage contrast is zero");
  }
  const double t3sq = t[2] * t[2];
  const double t4sq = t[3] * t[3];
  Theta g;
  g[0] = 1.0 / (t[2] * d2);
  g[1] = -1.0 / (t[3] * d2);
  g[2] = (d1 * t[4] - d2 * t[0]) / (t3sq * d2 * d2);
  g[3] = (d2 * t[1] - d1 * t[5]) / (t4sq * d2 * d2);
  g[4] = -d1 / (t[2] * d2 * d2);
  g[5] = d1 / (t[3] * d2 * d2);
  return g;
}

// Gradient of the intention-to-treat contrast t1/t3 - t2/t4.
inline Theta grad_g_itt(const Theta& t) {
  check_theta_denominators(t);
  Theta g;
  g[0] = 1.0 / t[2];
  g[1] = -1.0 / t[3];
  g[2] = -t[0] / (t[2] * t[2]);
  g[3] = t[1] / (t[3] * t[3]);
  g[4] = 0.0;
  g[5] = 0.0;
  return g;
}

// ---------------------------------------------------------------------------
// Sandwich variance estimators
// ---------------------------------------------------------------------------

struct SandwichParts {
  Mat bread;      // mean Jacobian of the stacked estimating function
  Mat meat;       // mean outer product of per-unit scores
  Vec grad_g;     // gradient of the target functional, padded with zeros
  Mat sigma;      // bread^{-1} * meat * bread^{-T}
  double condition = 0.0;
  Eigen::Index units = 0;
};

struct VarianceResult {
  double se = 0.0;
  double variance = 0.0;
  std::string mode;  // known-weights | logistic-weights | wls | bootstrap
  std::string dof_note;
};

inline constexpr double bread_condition_limit = 1e12;

namespace detail {

inline void finish_parts(SandwichParts* parts) {
  Eigen::JacobiSVD<Mat> svd(parts->bread);
  const auto& sv = svd.singularValues();
  parts->condition = sv[sv.size() - 1] <= 0.0
                         ? std::numeric_limits<double>::infinity()
                         : sv[0] / sv[sv.size() - 1];
  if (!(parts->condition < bread_condition_limit)) {
    throw Error(errc::singular_bread,
                "bread matrix condition " + std::to_string(parts->condition));
  }
  Eigen::PartialPivLU<Mat> lu(parts->bread);
  const Mat inv = lu.inverse();
  parts->sigma = inv * parts->meat * inv.transpose();
}

inline double parts_variance(const SandwichParts& parts) {
  const double q = parts.grad_g.dot(parts.sigma * parts.grad_g);
  return q / static_cast<double>(parts.units);
}

inline VarianceResult variance_from_parts(const SandwichParts& parts,
                                          const std::string& mode,
                                          const std::string& note) {
  VarianceResult v;
  v.variance = parts_variance(parts);
  if (v.variance < 0.0 && v.variance > -1e-12) v.variance = 0.0;
  v.se = std::sqrt(v.variance);
  v.mode = mode;
  v.dof_note = note;
  return v;
}

// Per-unit scores of the theta moment conditions: rows h^(i) - theta.
inline Mat psi_matrix(const Dataset& ds, const WeightSet& w, const Theta& theta) {
  Mat psi = per_unit_moments(ds, w);
  psi.rowwise() -= theta.transpose();
  return psi;
}

}  // namespace detail

// Variance treating the weights as known constants.  The stacked moment means
// have Jacobian -I, so sigma is just the empirical covariance of the
// per-unit contributions.
inline SandwichParts sandwich_known_parts(const Dataset& ds, const WeightSet& w,
                                          const Theta& theta,
                                          std::optional<Theta> grad = {}) {
  const Mat psi = detail::psi_matrix(ds, w, theta);
  SandwichParts parts;
  parts.units = ds.units();
  parts.bread = -Mat::Identity(6, 6);
  parts.meat = psi.transpose() * psi / static_cast<double>(ds.units());
  parts.grad_g = grad ? *grad : grad_g_tcace(theta);
  detail::finish_parts(&parts);
  return parts;
}

inline VarianceResult sandwich_known(const Dataset& ds, const WeightSet& w,
                                     const Theta& theta,
                                     std::optional<Theta> grad = {}) {
  return detail::variance_from_parts(
      sandwich_known_parts(ds, w, theta, grad), "known-weights",
      "weights treated as fixed; no selection-model uncertainty");
}

// Variance accounting for the estimated selection model.  Stacks the six
// moment conditions with the logistic score x(s - sigma) and propagates the
// coupling d h_j / d beta_k = -h_j * x_k.
inline SandwichParts sandwich_logistic_parts(const Dataset& ds,
                                             const LogisticFit& selection,
                                             const TreatmentModel& treatment,
                                             const Theta& theta,
                                             std::optional<Theta> grad = {}) {
  if (treatment.kind != TreatmentModel::Kind::KnownConstant) {
    throw Error(errc::invalid_argument,
                "sandwich variance requires a known assignment probability; "
                "use the bootstrap for fitted treatment models");
  }
  const WeightSet w = compute_weights(ds, selection, treatment);
  const Eigen::Index m = ds.units();
  const Eigen::Index p = ds.p();
  const Mat h = per_unit_moments(ds, w);
  Mat psi = h;
  psi.rowwise() -= theta.transpose();

  // logistic score pieces on all rows
  Vec sig(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    sig[i] = sigmoid(selection.beta.dot(ds.x.row(i)));
  }
  const Vec resid = ds.s - sig;                    // s - sigma
  const Vec fisher = sig.array() * (1.0 - sig.array());

  SandwichParts parts;
  parts.units = m;
  parts.bread = Mat::Zero(6 + p, 6 + p);
  parts.bread.topLeftCorner(6, 6) = -Mat::Identity(6, 6);
  parts.bread.topRightCorner(6, p) =
      -(h.transpose() * ds.x) / static_cast<double>(m);
  parts.bread.bottomRightCorner(p, p) =
      -(ds.x.transpose() * fisher.asDiagonal() * ds.x) /
      static_cast<double>(m);

  Mat phi(m, 6 + p);
  phi.leftCols(6) = psi;
  phi.rightCols(p) = ds.x.array().colwise() * resid.array();
  parts.meat = phi.transpose() * phi / static_cast<double>(m);

  parts.grad_g = Vec::Zero(6 + p);
  parts.grad_g.head(6) = grad ? *grad : grad_g_tcace(theta);
  detail::finish_parts(&parts);
  return parts;
}

inline VarianceResult sandwich_logistic(const Dataset& ds,
                                        const LogisticFit& selection,
                                        const TreatmentModel& treatment,
                                        const Theta& theta,
                                        std::optional<Theta> grad = {}) {
  return detail::variance_from_parts(
      sandwich_logistic_parts(ds, selection, treatment, theta, grad),
      "logistic-weights", "selection-model uncertainty propagated");
}

// Variance for the WLS ratio tau_y/tau_d.  Stacks the weighted normal
// equation scores of both regressions with the logistic selection score.
// Parameter order: (tau_y, tau_d, gamma_y, gamma_d, beta).
inline SandwichParts sandwich_wls_parts(const Dataset& ds, const WeightSet& w,
                                        const LogisticFit& selection,
                                        const WlsFit& fit) {
  const Eigen::Index m = ds.units();
  const Eigen::Index p = ds.p();
  const Eigen::Index pw = static_cast<Eigen::Index>(fit.wls_cols.size());
  const Eigen::Index nwls = 2 + 2 * pw;
  const Eigen::Index q = nwls + p;

  Vec sig(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    sig[i] = sigmoid(selection.beta.dot(ds.x.row(i)));
  }

  Mat sc = Mat::Zero(m, q);                    // per-unit stacked scores
  Mat gram = Mat::Zero(1 + pw, 1 + pw);        // sum of 2*w*(z,xw)(z,xw)^T
  for (std::size_t k = 0; k < w.unit_index.size(); ++k) {
    const Eigen::Index r = w.unit_index[k];
    const auto ki = static_cast<Eigen::Index>(k);
    const double wi = ds.z[r] == 1.0 ? w.w1[ki] : w.w0[ki];
    Vec qv(1 + pw);
    qv[0] = ds.z[r];
    double fit_y = fit.tau_y * ds.z[r];
    double fit_d = fit.tau_d * ds.z[r];
    for (Eigen::Index j = 0; j < pw; ++j) {
      const double xv = ds.x(r, fit.wls_cols[static_cast<std::size_t>(j)]);
      qv[j + 1] = xv;
      fit_y += fit.gamma_y[j] * xv;
      fit_d += fit.gamma_d[j] * xv;
    }
    const double ry = ds.y[r] - fit_y;
    const double rd = ds.d[r] - fit_d;
    const double a = 2.0 * wi;
    sc(r, 0) = -a * ry * qv[0];
    sc(r, 1) = -a * rd * qv[0];
    for (Eigen::Index j = 0; j < pw; ++j) {
      sc(r, 2 + j) = -a * ry * qv[j + 1];
      sc(r, 2 + pw + j) = -a * rd * qv[j + 1];
    }
    gram += a * qv * qv.transpose();
  }
  sc.rightCols(p) = ds.x.array().colwise() * (ds.s - sig).array();

  SandwichParts parts;
  parts.units = m;
  parts.bread = Mat::Zero(q, q);
  // scatter the shared Gram matrix into the Y and D parameter blocks
  std::vector<Eigen::Index> iy(static_cast<std::size_t>(1 + pw));
  std::vector<Eigen::Index> id(static_cast<std::size_t>(1 + pw));
  iy[0] = 0;
  id[0] = 1;
  for (Eigen::Index j = 0; j < pw; ++j) {
    iy[static_cast<std::size_t>(j) + 1] = 2 + j;
    id[static_cast<std::size_t>(j) + 1] = 2 + pw + j;
  }
  for (Eigen::Index a = 0; a < 1 + pw; ++a) {
    for (Eigen::Index b = 0; b < 1 + pw; ++b) {
      const double v = gram(a, b) / static_cast<double>(m);
      parts.bread(iy[static_cast<std::size_t>(a)],
                  iy[static_cast<std::size_t>(b)]) = v;
      parts.bread(id[static_cast<std::size_t>(a)],
                  id[static_cast<std::size_t>(b)]) = v;
    }
  }
  // coupling of the WLS scores to beta: d score / d beta_k = -score * x_k
  parts.bread.topRightCorner(nwls, p) =
      -(sc.leftCols(nwls).transpose() * ds.x) / static_cast<double>(m);
  const Vec fisher = sig.array() * (1.0 - sig.array());
  parts.bread.bottomRightCorner(p, p) =
      -(ds.x.transpose() * fisher.asDiagonal() * ds.x) /
      static_cast<double>(m);

  parts.meat = sc.transpose() * sc / static_cast<double>(m);

  if (fit.tau_d == 0.0) {
    throw Error(errc::degenerate_denominator, "wls first stage is zero");
  }
  parts.grad_g = Vec::Zero(q);
  parts.grad_g[0] = 1.0 / fit.tau_d;
  parts.grad_g[1] = -fit.tau_y / (fit.tau_d * fit.tau_d);
  detail::finish_parts(&parts);
  return parts;
}

inline VarianceResult sandwich_wls(const Dataset& ds, const WeightSet& w,
                                   const LogisticFit& selection,
                                   const WlsFit& fit) {
  return detail::variance_from_parts(
      sandwich_wls_parts(ds, w, selection, fit), "wls",
      "selection-model uncertainty propagated; known assignment probability");
}

// ---------------------------------------------------------------------------
// Stratified bootstrap
// ---------------------------------------------------------------------------

struct BootstrapOptions {
  int b = 500;
  std::uint64_t seed = 0;
  int max_redraw = 100;  // attempts per replicate before giving up
};

struct BootstrapResult {
  Mat replicates;  // b x k replicate points
  Vec se;          // per-column sample SD
  int redraws = 0;
};

// Resample study rows and target rows independently, with replacement.
inline std::vector<Eigen::Index> stratified_resample(const Dataset& ds,
                                                     rng::Stream& stream) {
  std::vector<Eigen::Index> rows;
  rows.reserve(static_cast<std::size_t>(ds.units()));
  const auto& st = ds.study_rows;
  const auto& tg = ds.target_rows;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    rows.push_back(st[stream.below(st.size())]);
  }
  for (Eigen::Index i = 0; i < ds.big_n(); ++i) {
    rows.push_back(tg[stream.below(tg.size())]);
  }
  return rows;
}

namespace detail {

inline bool is_resample_failure(const Error& e) {
  switch (e.code()) {
    case errc::empty_arm:
    case errc::separation:
    case errc::singular_hessian:
    case errc::not_converged:
    case errc::rank_deficient:
    case errc::insufficient_stratum:
    case errc::weak_first_stage:
    case errc::degenerate_denominator:
    case errc::first_stage_sign_violation:
    case errc::no_target_compliance:
      return true;
    default:
      return false;
  }
}

}  // namespace detail

// Runs `fn` on b stratified resamples.  fn must refit every nuisance model on
// the replicate it receives and return k point estimates.  Replicate r always
// draws from the stream (seed, r, attempt), so results do not depend on
// evaluation order.
inline BootstrapResult bootstrap_multi(
    const Dataset& ds, const std::function<Vec(const Dataset&)>& fn,
    Eigen::Index k, const BootstrapOptions& opts) {
  if (opts.b < 2) {
    throw Error(errc::invalid_argument, "bootstrap needs b >= 2");
  }
  BootstrapResult out;
  out.replicates.resize(opts.b, k);
  std::vector<int> redraws(static_cast<std::size_t>(opts.b), 0);
  const rng::Stream root = rng::root(opts.seed).fork(rng::p_bootstrap);
  // Each replicate draws only from its own (seed, r, attempt) stream and
  // writes only its own row, so the result is identical for any thread count.
  parallel_for(static_cast<std::size_t>(opts.b), [&](std::size_t ri) {
    const int r = static_cast<int>(ri);
    for (int attempt = 0; attempt < opts.max_redraw; ++attempt) {
      rng::Stream stream = root.fork(static_cast<std::uint64_t>(r),
                                     static_cast<std::uint64_t>(attempt));
      try {
        const Dataset resampled = ds.gather(stratified_resample(ds, stream));
        const Vec point = fn(resampled);
        if (point.size() != k) {
          throw Error(errc::dimension_mismatch, "replicate point size");
        }
        out.replicates.row(r) = point.transpose();
        redraws[ri] = attempt;
        return;
      } catch (const Error& e) {
        if (!detail::is_resample_failure(e)) throw;
      }
    }
    throw Error(errc::degenerate_resample,
                "replicate " + std::to_string(r) + " failed " +
                    std::to_string(opts.max_redraw) + " redraw attempts");
  });
  for (int v : redraws) out.redraws += v;
  out.se.resize(k);
  for (Eigen::Index j = 0; j < k; ++j) {
    std::vector<double> col(out.replicates.col(j).data(),
                            out.replicates.col(j).data() + opts.b);
    out.se[j] = sample_sd(col);
  }
  return out;
}

inline VarianceResult bootstrap_se(const Dataset& ds,
                                   const std::function<double(const Dataset&)>& fn,
                                   const BootstrapOptions& opts,
                                   BootstrapResult* detail_out = nullptr) {
  const BootstrapResult res = bootstrap_multi(
      ds,
      [&](const Dataset& replicate) {
        Vec v(1);
        v[0] = fn(replicate);
        return v;
      },
      1, opts);
  VarianceResult var;
  var.se = res.se[0];
  var.variance = var.se * var.se;
  var.mode = "bootstrap";
  var.dof_note = "sd over " + std::to_string(opts.b) +
                 " stratified resamples; redraws=" + std::to_string(res.redraws);
  if (detail_out) *detail_out = res;
  return var;
}

// ---------------------------------------------------------------------------
// Wald intervals
// ---------------------------------------------------------------------------

struct Interval {
  double lo = 0.0, hi = 0.0;
};

inline Interval wald_ci(double point, double se, double level) {
  if (!std::isfinite(point) || !std::isfinite(se) || se < 0.0) {
    throw Error(errc::invalid_argument, "wald_ci needs finite point and se >= 0");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw Error(errc::invalid_argument, "confidence level must be in (0,1)");
  }
  const double zq = normal_quantile(1.0 - (1.0 - level) / 2.0);
  return Interval{point - zq * se, point + zq * se};
}

}  // namespace tcace
