#include "rfdn/error.hpp"
#include "rfdn/ricci.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace rfdn;
using namespace rfdn::ricci;

namespace {

LayerFactors random_factors(std::mt19937_64& rng, int n, double sd) {
  std::normal_distribution<double> d(0.0, sd);
  LayerFactors f;
  for (auto& u : f.u) {
    u.resize(static_cast<std::size_t>(n));
    for (double& v : u) v = std::tanh(d(rng));
  }
  return f;
}

MetricSnapshot single(const LayerFactors& f, std::int64_t t = 0) {
  MetricSnapshot s;
  s.layers.push_back(f);
  s.time_index = t;
  return s;
}

// ||(G_k1 - G_k2)/(k1-k2) - (G_j1 - G_j2)/(j1-j2)||_F^2 with G = -u u^T,
// assembled entry by entry.
double dense_regularizer(const LayerFactors& f, const TranslationSpec& spec) {
  const std::size_t n = f.dim();
  const double dk = spec.k1 - spec.k2;
  const double dj = spec.j1 - spec.j2;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      auto gamma = [&](int m) { return -f.u[m][i] * f.u[m][j]; };
      const double c = (gamma(kK1) - gamma(kK2)) / dk - (gamma(kJ1) - gamma(kJ2)) / dj;
      s += c * c;
    }
  }
  return s;
}

}  // namespace

TEST(TranslationSpec, ValidatesOffsets) {
  EXPECT_NO_THROW(TranslationSpec{}.validate());
  EXPECT_THROW((TranslationSpec{1, 1, 1, 2}.validate()), ArgumentError);
  EXPECT_THROW((TranslationSpec{1, 2, 3, 3}.validate()), ArgumentError);
  EXPECT_THROW((TranslationSpec{1, 5, 1, 2}.validate()), ArgumentError);
  EXPECT_NO_THROW((TranslationSpec{-4, 4, 0, 3}.validate()));
}

TEST(TranslationSpec, Coefficients) {
  const auto c = TranslationSpec{1, 2, 1, 3}.coefficients();
  // C = (gamma_k1 - gamma_k2)/(-1) - (gamma_j1 - gamma_j2)/(-2), gamma = -u u^T
  EXPECT_DOUBLE_EQ(c[0], 1.0);
  EXPECT_DOUBLE_EQ(c[1], -1.0);
  EXPECT_DOUBLE_EQ(c[2], -0.5);
  EXPECT_DOUBLE_EQ(c[3], 0.5);
}

TEST(DiscreteRicci, EqualBranchesGiveZero) {
  LayerFactors f;
  f.u.fill({0.3, -0.2, 0.1});
  const auto c = discrete_ricci(single(f), TranslationSpec{});
  ASSERT_EQ(c.size(), 1u);
  EXPECT_NEAR(c[0].frobenius_norm(), 0.0, 1e-15);
  EXPECT_LT(c[0].dense().norm(), 1e-16);
}

TEST(DiscreteRicci, SingleSurvivingTerm) {
  LayerFactors f;
  f.u[kK1] = {0.5, 0.0};
  f.u[kK2] = {0.0, 0.0};
  f.u[kJ1] = {0.2, 0.1};
  f.u[kJ2] = {0.2, 0.1};
  const TranslationSpec spec{2, 1, 1, 2};  // k1 - k2 = 1
  const auto c = discrete_ricci(single(f), spec);
  Eigen::Matrix2d expected;
  expected << -0.25, 0.0, 0.0, 0.0;
  EXPECT_LT((c[0].dense() - expected).norm(), 1e-16);
  EXPECT_DOUBLE_EQ(c[0].frobenius_norm(), 0.25);
  EXPECT_DOUBLE_EQ(regularization_N(single(f), spec), 0.0625);
}

TEST(DiscreteRicci, IncompleteSnapshotIsRejected) {
  LayerFactors f;
  f.u[kK1] = {0.1, 0.2};
  f.u[kK2] = {0.1, 0.2};
  f.u[kJ1] = {0.1, 0.2};
  EXPECT_THROW(discrete_ricci(single(f), {}), IncompleteSnapshotError);
  f.u[kJ2] = {0.1};
  EXPECT_THROW(regularization_N(single(f), {}), IncompleteSnapshotError);
  f.u[kJ2] = {0.1, 1.0};
  EXPECT_THROW(regularization_N(single(f), {}), DomainError);
}

TEST(RegularizationN, GramFormMatchesDenseOracle) {
  std::mt19937_64 rng(41);
  const TranslationSpec spec{1, 3, -2, 2};
  for (int t = 0; t < 100; ++t) {
    const int n = 1 + t % 32;
    const auto f = random_factors(rng, n, 0.5);
    const double ref = dense_regularizer(f, spec);
    const double fast = regularization_N(single(f), spec);
    EXPECT_NEAR(fast, ref, 1e-10 * std::max(ref, 1e-30)) << "n=" << n;
    const auto c = discrete_ricci(single(f), spec);
    EXPECT_NEAR(c[0].dense().squaredNorm(), ref, 1e-10 * std::max(ref, 1e-30));
  }
}

TEST(RegularizationN, SumsOverLayersAndIsNonnegative) {
  std::mt19937_64 rng(43);
  MetricSnapshot s;
  double expect = 0.0;
  for (int l = 0; l < 3; ++l) {
    s.layers.push_back(random_factors(rng, 5 + l, 0.3));
    expect += dense_regularizer(s.layers.back(), {});
  }
  EXPECT_NEAR(regularization_N(s, {}), expect, 1e-12 * expect);
  EXPECT_GE(regularization_N(s, {}), 0.0);
}

TEST(RegularizationN, SingleTermEqualsSquaredNormSquared) {
  LayerFactors f;
  f.u[kK1] = {0.3, 0.4};  // ||u||^2 = 0.25
  f.u[kK2] = {0.0, 0.0};
  f.u[kJ1] = {0.0, 0.0};
  f.u[kJ2] = {0.0, 0.0};
  EXPECT_NEAR(regularization_N(single(f), {}), 0.0625, 1e-16);
}

TEST(RegularizationBounds, CollapseAtZeroEps) {
  std::mt19937_64 rng(47);
  const auto snap = single(random_factors(rng, 9, 0.4));
  const auto b = regularization_bounds(snap, {}, 0.0);
  const double n = regularization_N(snap, {});
  EXPECT_NEAR(b.lower, n, 1e-12 * n);
  EXPECT_NEAR(b.upper, n, 1e-12 * n);
  EXPECT_DOUBLE_EQ(b.nominal, n);
}

TEST(RegularizationBounds, IdenticalTranslationsReduceToIdentityTerms) {
  // All branches equal: sum_m w_m g = d g with d = (s - 1/s)(1/a + 1/b),
  // s = 1 + eps, and s - 1/s = (eps^2 + 2 eps) / (1 + eps).
  const double eps = 0.1;
  const TranslationSpec spec{1, 2, 1, 3};
  const double a = -1.0, b = -2.0;
  const double d = (eps * eps + 2 * eps) / (1 + eps) * (1 / a + 1 / b);
  LayerFactors zero;
  zero.u.fill(std::vector<double>(6, 0.0));
  const auto z = regularization_bounds(single(zero), spec, eps);
  EXPECT_NEAR(z.upper, 6 * d * d, 1e-14);
  EXPECT_NEAR(z.lower, 6 * d * d, 1e-14);
  EXPECT_EQ(z.nominal, 0.0);

  LayerFactors same;
  same.u.fill({0.3, -0.1, 0.2, 0.0, 0.1, -0.4});
  double u2 = 0.0;
  for (double v : same.u[0]) u2 += v * v;
  const double g2 = 6 - 2 * u2 + u2 * u2;  // ||I - u u^T||_F^2
  const auto s = regularization_bounds(single(same), spec, eps);
  EXPECT_NEAR(s.upper, d * d * g2, 1e-13);
}

TEST(RegularizationBounds, UpperHoldsOnSmallFactorEpsBall) {
  // Perturbed metrics g^(1/2) P g^(1/2) with spec(P) in [1/(1+eps), 1+eps].
  std::mt19937_64 rng(53);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const TranslationSpec spec{};
  const auto c = spec.coefficients();
  for (int t = 0; t < 40; ++t) {
    const int n = 2 + t % 8;
    const double eps = t % 2 ? 0.1 : 0.01;
    const auto f = random_factors(rng, n, 0.05 / std::sqrt(n));
    const double upper = regularization_bounds(single(f), spec, eps).upper;
    for (int k = 0; k < 20; ++k) {
      Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, n);
      for (int m = 0; m < 4; ++m) {
        const Eigen::Map<const Eigen::VectorXd> u(f.u[m].data(), n);
        const Eigen::MatrixXd g = Eigen::MatrixXd::Identity(n, n) - u * u.transpose();
        Eigen::MatrixXd r(n, n);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j) r(i, j) = normal(rng);
        const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(r).householderQ();
        Eigen::VectorXd lam(n);
        for (int i = 0; i < n; ++i) lam(i) = unit(rng) < 0.5 ? 1 + eps : 1 / (1 + eps);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(g);
        const Eigen::MatrixXd root = es.operatorSqrt();
        // N uses gamma = g - I, so the -c weights act on g directly.
        sum += -c[m] * root * q * lam.asDiagonal() * q.transpose() * root;
      }
      EXPECT_LE(sum.squaredNorm(), upper * (1 + 1e-12));
    }
  }
}

TEST(RfMask, LargeBetaAndStationaryMetricsGiveAllOnes) {
  std::mt19937_64 rng(59);
  const auto f = random_factors(rng, 7, 0.5);
  const auto cur = single(f, 3);
  auto nxt = single(random_factors(rng, 7, 0.5), 4);
  const auto loose = rf_mask(cur, nxt, {}, 1e300);
  for (auto v : loose[0]) EXPECT_EQ(v, 1);

  LayerFactors flat;
  flat.u.fill({0.1, -0.2, 0.3});
  const auto still = rf_mask(single(flat, 0), single(flat, 1), {}, 1e-300);
  for (auto v : still[0]) EXPECT_EQ(v, 1);
}

TEST(RfMask, HandBuiltViolation) {
  LayerFactors cur;
  cur.u.fill({0.1, 0.1});
  LayerFactors nxt = cur;
  nxt.u[kK1] = {0.1, 0.3};  // diagonal moves by 0.09 - 0.01 on the second weight
  const auto r = rf_residual(cur, nxt, {});
  EXPECT_DOUBLE_EQ(r[0], 0.0);
  EXPECT_NEAR(r[1], 0.08, 1e-16);
  const auto m = rf_mask(single(cur, 0), single(nxt, 1), {}, 0.01);
  EXPECT_EQ(m[0], (std::vector<std::uint8_t>{1, 0}));
}

TEST(RfMask, MonotoneInBeta) {
  std::mt19937_64 rng(61);
  const auto cur = single(random_factors(rng, 50, 0.3), 0);
  const auto nxt = single(random_factors(rng, 50, 0.3), 1);
  std::vector<std::uint8_t> prev(50, 0);
  for (double beta : {1e-4, 1e-3, 1e-2, 0.05, 0.1, 0.5, 1.0}) {
    const auto m = rf_mask(cur, nxt, {}, beta)[0];
    for (std::size_t i = 0; i < m.size(); ++i) EXPECT_GE(m[i], prev[i]);
    prev = m;
  }
}

TEST(RfMask, Errors) {
  LayerFactors f;
  f.u.fill({0.1, 0.2});
  LayerFactors g;
  g.u.fill({0.1, 0.2, 0.3});
  EXPECT_THROW(rf_mask(single(f, 0), single(f, 2), {}, 1.0), ArgumentError);
  EXPECT_THROW(rf_mask(single(f, 0), single(f, 1), {}, 0.0), ArgumentError);
  EXPECT_THROW(rf_mask(single(f, 0), single(g, 1), {}, 1.0), ShapeError);
}

TEST(FlowStep, FixedPointAndLinearity) {
  std::mt19937_64 rng(67);
  std::normal_distribution<double> d(0.0, 0.01);
  auto sym = [&] {
    Eigen::MatrixXd m(4, 4);
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = d(rng);
    return m;
  };
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(4, 4);
  const Eigen::MatrixXd g = I + sym();
  EXPECT_EQ(flow_step({g, g, g, g}, {}), g);

  const std::array<Eigen::MatrixXd, 4> gammas{sym(), sym(), sym(), sym()};
  std::array<Eigen::MatrixXd, 4> once, twice;
  for (int m = 0; m < 4; ++m) {
    once[m] = I + gammas[m];
    twice[m] = I + 2.0 * gammas[m];
  }
  const Eigen::MatrixXd inc1 = flow_step(once, {}) - once[0];
  const Eigen::MatrixXd inc2 = flow_step(twice, {}) - twice[0];
  EXPECT_LT((inc2 - 2.0 * inc1).norm(), 1e-15);
}

TEST(FlowSandbox, ZeroAmplitudeStaysZero) {
  FlowSandboxOptions o;
  o.amplitude = 0.0;
  o.steps = 10;
  const auto trace = flow_sandbox(o, {});
  ASSERT_EQ(trace.size(), 11u);
  for (double v : trace) EXPECT_EQ(v, 0.0);
}

TEST(FlowSandbox, DecaysAndIsDeterministic) {
  FlowSandboxOptions o;
  o.seed = 9;
  const auto a = flow_sandbox(o, {});
  const auto b = flow_sandbox(o, {});
  ASSERT_EQ(a.size(), 101u);
  EXPECT_EQ(a, b);
  EXPECT_NEAR(a.front(), 0.01, 1e-15);
  EXPECT_LT(a.back(), 0.5 * a.front());
  for (std::size_t t = 6; t < a.size(); ++t) EXPECT_LE(a[t], a[t - 1]);
}

TEST(FlowSandbox, RejectsBadSizes) {
  FlowSandboxOptions o;
  o.modes = 16;
  EXPECT_THROW(flow_sandbox(o, {}), ArgumentError);
}

namespace {

MetricField sphere(double r, double h, int size, double theta0, double phi0) {
  MetricField f;
  f.nx = f.ny = size;
  f.spacing = h;
  f.origin_x = theta0 - (size / 2) * h;
  f.origin_y = phi0 - (size / 2) * h;
  f.samples.resize(static_cast<std::size_t>(size) * size);
  for (int i = 0; i < size; ++i) {
    const double th = f.origin_x + i * h;
    for (int j = 0; j < size; ++j) {
      Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
      g(0, 0) = r * r;
      g(1, 1) = r * r * std::sin(th) * std::sin(th);
      f.at(i, j) = g;
    }
  }
  return f;
}

// Relative error of R against g / r^2 at the grid centre.
double sphere_error(double r, double h) {
  const auto f = sphere(r, h, 9, 1.0, 0.3);
  const auto ric = ricci_oracle(f);
  const Eigen::Matrix2d exact = f.at(4, 4) / (r * r);
  return (ric.at(4 - ric.offset, 4 - ric.offset) - exact).norm() / exact.norm();
}

}  // namespace

TEST(RicciOracle, FlatMetricHasZeroCurvature) {
  MetricField f;
  f.nx = 7;
  f.ny = 6;
  f.spacing = 0.3;
  Eigen::Matrix2d g;
  g << 2.0, 0.5, 0.5, 1.0;
  f.samples.assign(42, g);
  const auto r = ricci_oracle(f);
  EXPECT_EQ(r.nx, 3);
  EXPECT_EQ(r.ny, 2);
  for (const auto& v : r.values) EXPECT_LT(v.cwiseAbs().maxCoeff(), 1e-8);
}

TEST(RicciOracle, SphereMatchesClosedFormWithSecondOrderConvergence) {
  for (double r : {1.0, 2.5}) {
    const double e1 = sphere_error(r, 1e-2);
    const double e2 = sphere_error(r, 5e-3);
    EXPECT_LT(e1, 0.02);
    EXPECT_GT(e1 / e2, 3.5);
    EXPECT_LT(e1 / e2, 4.5);
  }
}

TEST(RicciOracle, ConstantRescaleLeavesRicciUnchanged) {
  auto f = sphere(1.0, 1e-2, 7, 0.8, 0.0);
  const auto a = ricci_oracle(f);
  for (auto& g : f.samples) g *= 3.0;
  const auto b = ricci_oracle(f);
  for (std::size_t i = 0; i < a.values.size(); ++i) {
    EXPECT_LT((a.values[i] - b.values[i]).norm(), 1e-9);
  }
}

TEST(RicciOracle, Errors) {
  MetricField f;
  f.nx = f.ny = 4;
  f.spacing = 0.1;
  f.samples.assign(16, Eigen::Matrix2d::Identity());
  EXPECT_THROW(ricci_oracle(f), ArgumentError);
  f.nx = f.ny = 5;
  f.samples.assign(25, Eigen::Matrix2d::Identity());
  f.samples[12] = Eigen::Matrix2d::Zero();
  EXPECT_THROW(ricci_oracle(f), SingularMetricError);
}
