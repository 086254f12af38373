#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>

#include "oracles.hpp"
#include "tcace/estimators.hpp"
#include "tcace/inference.hpp"
#include "tcace/rng.hpp"

using namespace tcace;
using Catch::Matchers::WithinAbs;

namespace {

UnitRecord study_unit(Vec x, int z, int d, double y) {
  UnitRecord r;
  r.x = std::move(x);
  r.s = 1;
  r.z = z;
  r.d = d;
  r.y = y;
  return r;
}

UnitRecord target_unit(Vec x) {
  UnitRecord r;
  r.x = std::move(x);
  r.s = 0;
  return r;
}

Vec one() {
  Vec v(1);
  v << 1.0;
  return v;
}

Vec xvec(double v1) {
  Vec v(2);
  v << 1.0, v1;
  return v;
}

Dataset medium_dataset(unsigned seed, int per_arm = 40, int targets = 25) {
  rng::Stream s = rng::root(seed);
  std::vector<UnitRecord> rec;
  for (int arm = 1; arm >= 0; --arm) {
    for (int i = 0; i < per_arm; ++i) {
      Vec x = xvec(s.uniform(-1.0, 1.0));
      const int d = arm == 1 ? (s.bernoulli(0.7) ? 1 : 0) : 0;
      const double y = 2.0 * d + x[1] + s.normal(0.0, 0.7);
      rec.push_back(study_unit(std::move(x), arm, d, y));
    }
  }
  for (int i = 0; i < targets; ++i) {
    rec.push_back(target_unit(xvec(s.uniform(-0.5, 1.5))));
  }
  return Dataset::from_records(rec);
}

Theta random_theta(rng::Stream& s) {
  Theta t;
  for (;;) {
    t[0] = s.uniform(-1.0, 1.0);
    t[1] = s.uniform(-1.0, 1.0);
    t[2] = s.uniform(0.3, 1.5);
    t[3] = s.uniform(0.3, 1.5);
    t[4] = s.uniform(-1.0, 1.0);
    t[5] = s.uniform(-1.0, 1.0);
    if (std::abs(theta_tau_d(t)) >= 0.2) return t;
  }
}

}  // namespace

TEST_CASE("gradient of the ratio at a symbolic point", "[inference]") {
  Theta t;
  t << 1, 0, 1, 1, 1, 0;
  const Theta g = grad_g_tcace(t);
  CHECK(g[0] == 1.0);
  CHECK(g[1] == -1.0);
  CHECK(g[2] == 0.0);
  CHECK(g[3] == 0.0);
  CHECK(g[4] == -1.0);
  CHECK(g[5] == 1.0);
  CHECK(g_tcace(t) == 1.0);
}

TEST_CASE("gradient matches central finite differences", "[inference]") {
  rng::Stream s = rng::root(314);
  for (int rep = 0; rep < 100; ++rep) {
    const Theta t = random_theta(s);
    const Theta closed = grad_g_tcace(t);
    const Eigen::VectorXd fd = oracle::fd_grad(
        [](const Eigen::VectorXd& v) {
          Theta tt = v;
          return g_tcace(tt);
        },
        t);
    const double scale = std::max(1.0, closed.norm());
    CHECK((fd - closed).norm() <= 1e-5 * scale);
  }
}

TEST_CASE("intent-to-treat gradient matches finite differences",
          "[inference]") {
  rng::Stream s = rng::root(315);
  for (int rep = 0; rep < 20; ++rep) {
    const Theta t = random_theta(s);
    const Theta closed = grad_g_itt(t);
    const Eigen::VectorXd fd = oracle::fd_grad(
        [](const Eigen::VectorXd& v) {
          Theta tt = v;
          return g_itt(tt);
        },
        t);
    CHECK((fd - closed).norm() <= 1e-5 * std::max(1.0, closed.norm()));
  }
}

TEST_CASE("degenerate denominators are rejected", "[inference]") {
  Theta flat;
  flat << 1, 0, 1, 1, 0.5, 0.5;  // first-stage contrast is exactly zero
  CHECK_THROWS_AS(grad_g_tcace(flat), Error);
  try {
    g_tcace(flat);
    FAIL("expected DegenerateDenominator");
  } catch (const Error& e) {
    CHECK(e.code() == errc::degenerate_denominator);
  }

  Theta zero3;
  zero3 << 1, 0, 0, 1, 1, 0;
  CHECK_THROWS_AS(g_itt(zero3), Error);
}

TEST_CASE("known-weights variance equals the influence oracle", "[inference]") {
  const Dataset ds = medium_dataset(88);
  WeightSet w;
  w.unit_index = ds.study_rows;
  w.w1 = Vec::Ones(ds.n()) * 1.7;
  w.w0 = Vec::Ones(ds.n()) * 2.3;
  rng::Stream s = rng::root(17);
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    w.w1[i] = s.uniform(0.5, 3.0);
    w.w0[i] = s.uniform(0.5, 3.0);
  }
  w.sel_prob = Vec::Constant(ds.n(), 0.5);
  const Theta theta = weighted_components(ds, w);
  const VarianceResult got = sandwich_known(ds, w, theta);
  CHECK(got.mode == "known-weights");

  // independent per-unit influence computation
  const Theta grad = grad_g_tcace(theta);
  const double m = static_cast<double>(ds.units());
  double acc = 0.0;
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    const Eigen::Index r = ds.study_rows[static_cast<std::size_t>(i)];
    double h[6] = {0, 0, 0, 0, 0, 0};
    if (ds.z[r] == 1.0) {
      h[0] = w.w1[i] * ds.y[r];
      h[2] = w.w1[i];
      h[4] = w.w1[i] * ds.d[r];
    } else {
      h[1] = w.w0[i] * ds.y[r];
      h[3] = w.w0[i];
      h[5] = w.w0[i] * ds.d[r];
    }
    double phi = 0.0;
    for (int j = 0; j < 6; ++j) phi += grad[j] * (h[j] - theta[j]);
    acc += phi * phi;
  }
  // target rows contribute grad . (0 - theta), which the scale invariance of
  // the ratio makes exactly zero, but accumulate them anyway
  for (Eigen::Index r : ds.target_rows) {
    double phi = 0.0;
    for (int j = 0; j < 6; ++j) phi += grad[j] * (0.0 - theta[j]);
    acc += phi * phi;
  }
  const double var_oracle = acc / (m * m);
  CHECK_THAT(got.variance, WithinAbs(var_oracle, 1e-12 * std::max(1.0, var_oracle)));
  CHECK_THAT(got.se, WithinAbs(std::sqrt(var_oracle), 1e-10));
}

TEST_CASE("target rows have exactly zero influence", "[inference]") {
  rng::Stream s = rng::root(99);
  for (int rep = 0; rep < 25; ++rep) {
    const Theta t = random_theta(s);
    const Theta g = grad_g_tcace(t);
    // scale invariance of the ratio forces grad . theta = 0
    CHECK_THAT(g.dot(t), WithinAbs(0.0, 1e-12));
  }
}

TEST_CASE("degenerate contrast directions give zero variance", "[inference]") {
  // perfect compliance and arm-constant outcomes put every unit exactly on
  // the fitted ratio, so the influence of each unit vanishes
  std::vector<UnitRecord> rec;
  for (int i = 0; i < 6; ++i) rec.push_back(study_unit(one(), 1, 1, 3.0));
  for (int i = 0; i < 6; ++i) rec.push_back(study_unit(one(), 0, 0, 1.0));
  for (int i = 0; i < 4; ++i) rec.push_back(target_unit(one()));
  const Dataset ds = Dataset::from_records(rec);
  WeightSet w;
  w.unit_index = ds.study_rows;
  w.w1 = Vec::Ones(ds.n()) * 2.0;
  w.w0 = Vec::Ones(ds.n()) * 2.0;
  rng::Stream s = rng::root(5);
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    w.w1[i] = s.uniform(1.0, 2.0);
    w.w0[i] = s.uniform(1.0, 2.0);
  }
  w.sel_prob = Vec::Constant(ds.n(), 0.5);
  const Theta theta = weighted_components(ds, w);
  const VarianceResult v = sandwich_known(ds, w, theta);
  // the cancellation is algebraic; the matrix contraction leaves only
  // rounding residue, many orders below any realistic variance
  CHECK_THAT(v.variance, WithinAbs(0.0, 1e-12));
  CHECK_THAT(v.se, WithinAbs(0.0, 1e-6));

  // contracting per unit before squaring removes even that residue
  const Theta grad = grad_g_tcace(theta);
  const Mat psi = detail::psi_matrix(ds, w, theta);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < psi.rows(); ++i) {
    const double phi = grad.dot(psi.row(i));
    acc += phi * phi;
  }
  CHECK(acc / std::pow(static_cast<double>(ds.units()), 2) <= 1e-28);
}

TEST_CASE("duplicating the dataset halves the variance", "[inference]") {
  const Dataset ds = medium_dataset(202);
  const LogisticFit sel = fit_selection_model(ds);
  const TreatmentModel tm = TreatmentModel::known(0.5);
  const WeightSet w = compute_weights(ds, sel, tm);
  const Theta theta = weighted_components(ds, w);
  const double base = sandwich_known(ds, w, theta).variance;

  std::vector<Eigen::Index> twice;
  for (Eigen::Index r = 0; r < ds.units(); ++r) {
    twice.push_back(r);
    twice.push_back(r);
  }
  const Dataset ds2 = ds.gather(twice);
  const WeightSet w2 = compute_weights(ds2, sel, tm);
  const Theta theta2 = weighted_components(ds2, w2);
  const double doubled = sandwich_known(ds2, w2, theta2).variance;
  CHECK_THAT(doubled / base, WithinAbs(0.5, 1e-10));
}

TEST_CASE("sandwich blocks match a per-unit loop oracle", "[inference]") {
  // 5 study rows + 3 target rows, two covariate columns
  std::vector<UnitRecord> rec;
  rec.push_back(study_unit(xvec(-0.5), 1, 1, 2.1));
  rec.push_back(study_unit(xvec(0.3), 1, 0, 1.4));
  rec.push_back(study_unit(xvec(0.8), 1, 1, 3.3));
  rec.push_back(study_unit(xvec(-0.2), 0, 0, 0.7));
  rec.push_back(study_unit(xvec(0.6), 0, 1, 2.0));
  rec.push_back(target_unit(xvec(0.1)));
  rec.push_back(target_unit(xvec(-0.4)));
  rec.push_back(target_unit(xvec(0.7)));
  const Dataset ds = Dataset::from_records(rec);
  const LogisticFit sel = fit_selection_model(ds);
  const TreatmentModel tm = TreatmentModel::known(0.5);
  const WeightSet w = compute_weights(ds, sel, tm);
  const Theta theta = weighted_components(ds, w);
  const SandwichParts parts = sandwich_logistic_parts(ds, sel, tm, theta);

  const int m = static_cast<int>(ds.units());
  const int p = static_cast<int>(ds.p());
  REQUIRE(parts.bread.rows() == 6 + p);

  // per-unit pieces, all plain loops
  std::vector<std::array<double, 6>> h(static_cast<std::size_t>(m),
                                       {0, 0, 0, 0, 0, 0});
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    const Eigen::Index r = ds.study_rows[static_cast<std::size_t>(i)];
    auto& row = h[static_cast<std::size_t>(r)];
    if (ds.z[r] == 1.0) {
      row[0] = w.w1[i] * ds.y[r];
      row[2] = w.w1[i];
      row[4] = w.w1[i] * ds.d[r];
    } else {
      row[1] = w.w0[i] * ds.y[r];
      row[3] = w.w0[i];
      row[5] = w.w0[i] * ds.d[r];
    }
  }
  std::vector<double> sig(static_cast<std::size_t>(m));
  for (int i = 0; i < m; ++i) {
    double eta = 0.0;
    for (int k = 0; k < p; ++k) eta += sel.beta[k] * ds.x(i, k);
    sig[static_cast<std::size_t>(i)] = sigmoid(eta);
  }

  const auto close = [](double got, double want) {
    return std::abs(got - want) <= 1e-12 * std::max(1.0, std::abs(want));
  };

  // top-left: minus identity
  for (int a = 0; a < 6; ++a) {
    for (int b = 0; b < 6; ++b) {
      CHECK(parts.bread(a, b) == (a == b ? -1.0 : 0.0));
    }
  }
  // top-right: -(1/m) sum_i h_j x_k;  bottom-right: -(1/m) sum fisher x x'
  for (int j = 0; j < 6; ++j) {
    for (int k = 0; k < p; ++k) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i) {
        acc += h[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] *
               ds.x(i, k);
      }
      CHECK(close(parts.bread(j, 6 + k), -acc / m));
    }
  }
  for (int a = 0; a < p; ++a) {
    for (int b = 0; b < p; ++b) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i) {
        const double f = sig[static_cast<std::size_t>(i)] *
                         (1.0 - sig[static_cast<std::size_t>(i)]);
        acc += f * ds.x(i, a) * ds.x(i, b);
      }
      CHECK(close(parts.bread(6 + a, 6 + b), -acc / m));
      CHECK(parts.bread(6 + a, b) == 0.0);  // bottom-left block is zero
    }
  }
  // meat: mean outer product of (h - theta, x (s - sigma))
  for (int a = 0; a < 6 + p; ++a) {
    for (int b = 0; b < 6 + p; ++b) {
      double acc = 0.0;
      for (int i = 0; i < m; ++i) {
        const auto comp = [&](int j) {
          if (j < 6) {
            return h[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] -
                   theta[j];
          }
          return ds.x(i, j - 6) * (ds.s[i] - sig[static_cast<std::size_t>(i)]);
        };
        acc += comp(a) * comp(b);
      }
      CHECK(close(parts.meat(a, b), acc / m));
    }
  }
}

TEST_CASE("zeroing the coupling block recovers the known-weights variance",
          "[inference]") {
  const Dataset ds = medium_dataset(313);
  const LogisticFit sel = fit_selection_model(ds);
  const TreatmentModel tm = TreatmentModel::known(0.5);
  const WeightSet w = compute_weights(ds, sel, tm);
  const Theta theta = weighted_components(ds, w);

  SandwichParts parts = sandwich_logistic_parts(ds, sel, tm, theta);
  parts.bread.topRightCorner(6, ds.p()).setZero();
  Eigen::PartialPivLU<Mat> lu(parts.bread);
  const Mat inv = lu.inverse();
  parts.sigma = inv * parts.meat * inv.transpose();
  const double collapsed = detail::parts_variance(parts);

  const double known = sandwich_known(ds, w, theta).variance;
  CHECK_THAT(collapsed, WithinAbs(known, 1e-12 * std::max(1.0, known)));

  // with the coupling in place the two differ
  const double full = sandwich_logistic(ds, sel, tm, theta).variance;
  CHECK(std::abs(full - known) > 1e-8);
}

TEST_CASE("sandwich meat matrices are positive semidefinite", "[inference]") {
  const Dataset ds = medium_dataset(777);
  const LogisticFit sel = fit_selection_model(ds);
  const TreatmentModel tm = TreatmentModel::known(0.5);
  const WeightSet w = compute_weights(ds, sel, tm);
  const Theta theta = weighted_components(ds, w);

  const auto check_psd = [](const Mat& meat) {
    Eigen::SelfAdjointEigenSolver<Mat> es(meat);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    CHECK((meat - meat.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  };
  check_psd(sandwich_known_parts(ds, w, theta).meat);
  check_psd(sandwich_logistic_parts(ds, sel, tm, theta).meat);
  check_psd(sandwich_wls_parts(ds, w, sel, fit_wls(ds, w)).meat);
}

TEST_CASE("collinear covariates give a singular bread", "[inference]") {
  std::vector<UnitRecord> rec;
  rng::Stream s = rng::root(41);
  for (int arm = 1; arm >= 0; --arm) {
    for (int i = 0; i < 8; ++i) {
      const double v = s.uniform(-1.0, 1.0);
      Vec x(3);
      x << 1.0, v, v;  // duplicated covariate column
      rec.push_back(study_unit(std::move(x), arm, arm, s.normal()));
    }
  }
  for (int i = 0; i < 4; ++i) {
    const double v = s.uniform(-1.0, 1.0);
    Vec x(3);
    x << 1.0, v, v;
    rec.push_back(target_unit(std::move(x)));
  }
  const Dataset ds = Dataset::from_records(rec);
  LogisticFit sel;  // hand-set coefficients, the fit itself would be singular
  sel.beta = Vec::Zero(3);
  const TreatmentModel tm = TreatmentModel::known(0.5);
  const WeightSet w = compute_weights(ds, sel, tm);
  const Theta theta = weighted_components(ds, w);
  try {
    sandwich_logistic(ds, sel, tm, theta);
    FAIL("expected SingularBread");
  } catch (const Error& e) {
    CHECK(e.code() == errc::singular_bread);
  }
}

TEST_CASE("mismatched selection model is rejected by the sandwich",
          "[inference]") {
  const Dataset ds = medium_dataset(10);
  LogisticFit sel;
  sel.beta = Vec::Zero(5);
  const Theta theta = Theta::Ones();
  try {
    sandwich_logistic(ds, sel, TreatmentModel::known(0.5), theta);
    FAIL("expected DimensionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == errc::dimension_mismatch);
  }
}

TEST_CASE("fitted treatment models route to the bootstrap", "[inference]") {
  const Dataset ds = medium_dataset(11);
  const LogisticFit sel = fit_selection_model(ds);
  const TreatmentModel tm = fit_treatment_model(ds);
  const Theta theta = Theta::Ones();
  CHECK_THROWS_AS(sandwich_logistic(ds, sel, tm, theta), Error);
}

TEST_CASE("intercept-only regression variance matches the weighted variance",
          "[inference]") {
  const Dataset ds = medium_dataset(4242, 60, 50);
  const LogisticFit sel = fit_selection_model(ds);
  const TreatmentModel tm = TreatmentModel::known(0.5);
  const WeightSet w = compute_weights(ds, sel, tm);
  const Theta theta = weighted_components(ds, w);
  const VarianceResult weighted = sandwich_logistic(ds, sel, tm, theta);
  const WlsFit fit = fit_wls(ds, w, {0});
  const VarianceResult wls = sandwich_wls(ds, w, sel, fit);
  CHECK(wls.mode == "wls");
  CHECK_THAT(wls.se, WithinAbs(weighted.se, 1e-8 * weighted.se));
  CHECK_THAT(fit.tau_y / fit.tau_d, WithinAbs(g_tcace(theta), 1e-10));
}

TEST_CASE("stacked scores vanish at the fitted parameters", "[inference]") {
  const Dataset ds = medium_dataset(515);
  const LogisticFit sel = fit_selection_model(ds);
  const TreatmentModel tm = TreatmentModel::known(0.5);
  const WeightSet w = compute_weights(ds, sel, tm);
  const WlsFit fit = fit_wls(ds, w);
  const Eigen::Index pw = static_cast<Eigen::Index>(fit.wls_cols.size());

  // recompute the stacked estimating equations with plain loops
  Vec score = Vec::Zero(2 + 2 * pw + ds.p());
  for (Eigen::Index i = 0; i < ds.n(); ++i) {
    const Eigen::Index r = ds.study_rows[static_cast<std::size_t>(i)];
    const double wi = ds.z[r] == 1.0 ? w.w1[i] : w.w0[i];
    double fy = fit.tau_y * ds.z[r];
    double fd = fit.tau_d * ds.z[r];
    for (Eigen::Index j = 0; j < pw; ++j) {
      const double xv = ds.x(r, fit.wls_cols[static_cast<std::size_t>(j)]);
      fy += fit.gamma_y[j] * xv;
      fd += fit.gamma_d[j] * xv;
    }
    const double ry = ds.y[r] - fy;
    const double rd = ds.d[r] - fd;
    score[0] += -2.0 * wi * ry * ds.z[r];
    score[1] += -2.0 * wi * rd * ds.z[r];
    for (Eigen::Index j = 0; j < pw; ++j) {
      const double xv = ds.x(r, fit.wls_cols[static_cast<std::size_t>(j)]);
      score[2 + j] += -2.0 * wi * ry * xv;
      score[2 + pw + j] += -2.0 * wi * rd * xv;
    }
  }
  for (Eigen::Index i = 0; i < ds.units(); ++i) {
    const double sg = sigmoid(sel.beta.dot(ds.x.row(i)));
    for (Eigen::Index k = 0; k < ds.p(); ++k) {
      score[2 + 2 * pw + k] += ds.x(i, k) * (ds.s[i] - sg);
    }
  }
  CHECK(score.norm() <= 1e-8);
}

TEST_CASE("zero regression first stage is degenerate", "[inference]") {
  const Dataset ds = medium_dataset(616);
  const LogisticFit sel = fit_selection_model(ds);
  const WeightSet w = compute_weights(ds, sel, TreatmentModel::known(0.5));
  WlsFit flat = fit_wls(ds, w);
  flat.tau_d = 0.0;
  try {
    sandwich_wls(ds, w, sel, flat);
    FAIL("expected DegenerateDenominator");
  } catch (const Error& e) {
    CHECK(e.code() == errc::degenerate_denominator);
  }
}

TEST_CASE("wald interval reference values", "[inference]") {
  const Interval ci = wald_ci(1.0, 1.0, 0.95);
  CHECK_THAT(ci.lo, WithinAbs(-0.959964, 1e-6));
  CHECK_THAT(ci.hi, WithinAbs(2.959964, 1e-6));

  const Interval tight = wald_ci(3.5, 0.0, 0.95);
  CHECK(tight.lo == 3.5);
  CHECK(tight.hi == 3.5);

  const Interval half = wald_ci(0.0, 2.0, 0.5);
  CHECK_THAT(half.hi, WithinAbs(0.674489750196082 * 2.0, 1e-9));

  CHECK_THROWS_AS(wald_ci(1.0, -1.0, 0.95), Error);
  CHECK_THROWS_AS(wald_ci(1.0, 1.0, 1.0), Error);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(wald_ci(nan, 1.0, 0.95), Error);
}

TEST_CASE("wald coverage on a synthetic complier design", "[inference]") {
  // Constant selection and assignment probabilities make the exact weights
  // available; the sandwich interval should then cover the true effect at
  // close to the nominal rate.
  rng::Stream root = rng::root(20260824);
  const int trials = 400;
  const int n = 180, big_n = 70;
  const double truth = 2.0;
  int covered = 0, usable = 0;
  for (int t = 0; t < trials; ++t) {
    rng::Stream s = root.fork(static_cast<std::uint64_t>(t));
    std::vector<UnitRecord> rec;
    for (int i = 0; i < n; ++i) {
      const int z = s.bernoulli(0.5) ? 1 : 0;
      const int c = s.bernoulli(0.7) ? 1 : 0;
      const int d = z * c;
      rec.push_back(study_unit(one(), z, d, truth * d + s.normal()));
    }
    for (int i = 0; i < big_n; ++i) rec.push_back(target_unit(one()));
    Dataset ds;
    try {
      ds = Dataset::from_records(rec);
    } catch (const Error&) {
      continue;
    }
    WeightSet w;
    w.unit_index = ds.study_rows;
    const double odds = static_cast<double>(big_n) / n;
    w.w1 = Vec::Constant(ds.n(), odds / 0.5);
    w.w0 = Vec::Constant(ds.n(), odds / 0.5);
    w.sel_prob = Vec::Constant(ds.n(), n / static_cast<double>(n + big_n));
    try {
      const Theta theta = weighted_components(ds, w);
      const double point = g_tcace(theta);
      const VarianceResult v = sandwich_known(ds, w, theta);
      const Interval ci = wald_ci(point, v.se, 0.95);
      ++usable;
      if (ci.lo <= truth && truth <= ci.hi) ++covered;
    } catch (const Error&) {
    }
  }
  REQUIRE(usable >= trials - 5);
  const double coverage = 100.0 * covered / usable;
  CHECK(coverage >= 89.0);
  CHECK(coverage <= 99.0);
}

TEST_CASE("bootstrap of a constant statistic is zero", "[inference]") {
  const Dataset ds = medium_dataset(5150);
  BootstrapOptions opts;
  opts.b = 50;
  opts.seed = 9;
  const VarianceResult v =
      bootstrap_se(ds, [](const Dataset&) { return 3.25; }, opts);
  CHECK(v.se == 0.0);
  CHECK(v.mode == "bootstrap");
}

TEST_CASE("bootstrap preserves the stratum sizes", "[inference]") {
  const Dataset ds = medium_dataset(5151);
  BootstrapOptions opts;
  opts.b = 40;
  opts.seed = 10;
  const VarianceResult counts = bootstrap_se(
      ds,
      [](const Dataset& r) {
        return static_cast<double>(r.n() * 1000 + r.big_n());
      },
      opts);
  CHECK(counts.se == 0.0);  // every replicate has identical n and big_n
}

TEST_CASE("bootstrap is deterministic in the seed", "[inference]") {
  const Dataset ds = medium_dataset(5152);
  const auto stat = [](const Dataset& r) {
    WeightSet w;
    w.unit_index = r.study_rows;
    w.w1 = Vec::Ones(r.n());
    w.w0 = Vec::Ones(r.n());
    w.sel_prob = Vec::Constant(r.n(), 0.5);
    return weighted_tcace(r, w).point;
  };
  BootstrapOptions opts;
  opts.b = 60;
  opts.seed = 77;
  BootstrapResult first, second;
  const VarianceResult a = bootstrap_se(ds, stat, opts, &first);
  const VarianceResult b = bootstrap_se(ds, stat, opts, &second);
  CHECK(a.se == b.se);
  CHECK(first.replicates == second.replicates);

  opts.seed = 78;
  const VarianceResult c = bootstrap_se(ds, stat, opts);
  CHECK(a.se != c.se);
}

TEST_CASE("bootstrap result is invariant to the thread count", "[inference]") {
  const Dataset ds = medium_dataset(5153);
  const auto stat = [](const Dataset& r) {
    double acc = 0.0;
    for (Eigen::Index row : r.study_rows) acc += r.y[row];
    return acc / static_cast<double>(r.n());
  };
  BootstrapOptions opts;
  opts.b = 80;
  opts.seed = 3;
  setenv("TCACE_THREADS", "1", 1);
  BootstrapResult serial;
  bootstrap_se(ds, stat, opts, &serial);
  setenv("TCACE_THREADS", "3", 1);
  BootstrapResult threaded;
  bootstrap_se(ds, stat, opts, &threaded);
  unsetenv("TCACE_THREADS");
  CHECK(serial.replicates == threaded.replicates);
}

TEST_CASE("lost arms are redrawn and reported", "[inference]") {
  // only two treated units: many resamples drop the treated arm entirely
  std::vector<UnitRecord> rec;
  for (int i = 0; i < 2; ++i) rec.push_back(study_unit(one(), 1, 1, 2.5));
  for (int i = 0; i < 18; ++i) {
    rec.push_back(study_unit(one(), 0, 0, 1.0 + 0.1 * i));
  }
  for (int i = 0; i < 5; ++i) rec.push_back(target_unit(one()));
  const Dataset ds = Dataset::from_records(rec);
  const auto stat = [](const Dataset& r) {
    WeightSet w;
    w.unit_index = r.study_rows;
    w.w1 = Vec::Ones(r.n());
    w.w0 = Vec::Ones(r.n());
    w.sel_prob = Vec::Constant(r.n(), 0.5);
    return weighted_tcace(r, w).point;
  };
  BootstrapOptions opts;
  opts.b = 100;
  opts.seed = 12;
  BootstrapResult detail;
  const VarianceResult v = bootstrap_se(ds, stat, opts, &detail);
  CHECK(detail.redraws > 0);
  CHECK(std::isfinite(v.se));
  CHECK(v.dof_note.find("redraws=") != std::string::npos);
}

TEST_CASE("a statistic that always fails exhausts the redraw budget",
          "[inference]") {
  const Dataset ds = medium_dataset(5154);
  BootstrapOptions opts;
  opts.b = 2;
  opts.seed = 1;
  opts.max_redraw = 3;
  try {
    bootstrap_se(
        ds,
        [](const Dataset&) -> double {
          throw Error(errc::weak_first_stage, "synthetic failure");
        },
        opts);
    FAIL("expected DegenerateResample");
  } catch (const Error& e) {
    CHECK(e.code() == errc::degenerate_resample);
  }

  // non-resample errors pass through untouched
  try {
    bootstrap_se(
        ds,
        [](const Dataset&) -> double {
          throw Error(errc::io_error, "unrelated failure");
        },
        opts);
    FAIL("expected the io error to propagate");
  } catch (const Error& e) {
    CHECK(e.code() == errc::io_error);
  }

  opts.b = 1;
  CHECK_THROWS_AS(bootstrap_se(ds, [](const Dataset&) { return 0.0; }, opts),
                  Error);
}

TEST_CASE("shared resamples align multi-statistic columns", "[inference]") {
  const Dataset ds = medium_dataset(5155);
  const auto mean_y = [](const Dataset& r) {
    double acc = 0.0;
    for (Eigen::Index row : r.study_rows) acc += r.y[row];
    return acc / static_cast<double>(r.n());
  };
  BootstrapOptions opts;
  opts.b = 30;
  opts.seed = 21;
  BootstrapResult scalar;
  bootstrap_se(ds, mean_y, opts, &scalar);

  const BootstrapResult multi = bootstrap_multi(
      ds,
      [&](const Dataset& r) {
        Vec v(2);
        v[0] = mean_y(r);
        v[1] = 2.0 * mean_y(r);
        return v;
      },
      2, opts);
  CHECK(multi.replicates.rows() == 30);
  CHECK(multi.replicates.cols() == 2);
  CHECK(multi.replicates.col(0) == scalar.replicates.col(0));
  CHECK_THAT(multi.se[1], WithinAbs(2.0 * multi.se[0], 1e-12));
}

TEST_CASE("bootstrap spread tracks the sampling distribution", "[inference]") {
  // mean of 100 standard normal draws has standard error 0.1
  rng::Stream s = rng::root(808);
  std::vector<UnitRecord> rec;
  for (int arm = 1; arm >= 0; --arm) {
    for (int i = 0; i < 50; ++i) {
      rec.push_back(study_unit(one(), arm, arm, s.normal()));
    }
  }
  for (int i = 0; i < 30; ++i) rec.push_back(target_unit(one()));
  const Dataset ds = Dataset::from_records(rec);
  BootstrapOptions opts;
  opts.b = 400;
  opts.seed = 55;
  const VarianceResult v = bootstrap_se(
      ds,
      [](const Dataset& r) {
        double acc = 0.0;
        for (Eigen::Index row : r.study_rows) acc += r.y[row];
        return acc / static_cast<double>(r.n());
      },
      opts);
  CHECK(v.se >= 0.075);
  CHECK(v.se <= 0.13);
}
