#include "rfdn/error.hpp"
#include "rfdn/geometry.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

using namespace rfdn;
using namespace rfdn::geometry;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, int n, double sd) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = d(rng);
  return v;
}

Eigen::VectorXd as_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// u with ||u||^2 = target, built directly (no tanh).
std::vector<double> factor_with_norm(std::mt19937_64& rng, int n, double norm_sq) {
  auto v = random_vec(rng, n, 1.0);
  double s = 0.0;
  for (double x : v) s += x * x;
  for (double& x : v) x *= std::sqrt(norm_sq / s);
  return v;
}

}  // namespace

TEST(LogCosh, MatchesDirectFormulaAndAvoidsOverflow) {
  for (double x : {-5.0, -0.3, 0.0, 0.01, 2.5, 15.0}) {
    EXPECT_NEAR(log_cosh(x), std::log(std::cosh(x)), 1e-14 * (1.0 + std::abs(x)));
  }
  // Reference values from 40-digit arithmetic.
  EXPECT_NEAR(log_cosh(30.0), 29.306852819440056, 1e-13);
  EXPECT_NEAR(log_cosh(0.001), 4.999999166666889e-07, 1e-20);
  EXPECT_TRUE(std::isfinite(log_cosh(1e6)));
  EXPECT_NEAR(log_cosh(1e6), 1e6 - std::log(2.0), 1e-6);
  EXPECT_EQ(log_cosh(-7.0), log_cosh(7.0));
}

TEST(LneDivergence, ReferenceValue) {
  const std::vector<double> xp{0.5, 0.1, -0.7};
  const std::vector<double> x{0.3, -1.2, 2.0};
  EXPECT_NEAR(lne_divergence(xp, x, 0.5), 3.3577591840651135, 1e-13);
  const ConvexPotential phi{PotentialKind::LogCosh, 0.5};
  EXPECT_NEAR(bregman_divergence(phi, xp, x), 3.3577591840651135, 1e-13);
}

TEST(LneDivergence, SelfDivergenceIsExactlyZero) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const auto x = random_vec(rng, 12, 3.0);
    EXPECT_EQ(lne_divergence(x, x, 0.4), 0.0);
  }
}

TEST(LneDivergence, RejectsBadInput) {
  const std::vector<double> a{1.0, 2.0}, b{1.0};
  EXPECT_THROW(lne_divergence(a, b, 0.5), ShapeError);
  EXPECT_THROW(lne_divergence(a, a, 0.0), DomainError);
  const std::vector<double> c{1.0, NAN};
  EXPECT_THROW(lne_divergence(c, a, 0.5), DomainError);
}

TEST(BregmanDivergence, HalfSquareIsHalfSquaredDistance) {
  std::mt19937_64 rng(5);
  const ConvexPotential phi{PotentialKind::HalfSquare, 1.0};
  for (int t = 0; t < 20; ++t) {
    const auto a = random_vec(rng, 7, 1.0);
    const auto b = random_vec(rng, 7, 1.0);
    EXPECT_NEAR(bregman_divergence(phi, a, b), 0.5 * (as_eigen(a) - as_eigen(b)).squaredNorm(),
                1e-13);
  }
}

TEST(BregmanDivergence, NegativeEntropyIsGeneralizedKl) {
  const ConvexPotential phi{PotentialKind::NegativeEntropy, 1.0};
  const std::vector<double> a{0.2, 1.5, 0.7}, b{0.9, 0.4, 0.7};
  EXPECT_NEAR(bregman_divergence(phi, a, b), 1.2818182806182243, 1e-13);
  const std::vector<double> bad{0.2, -1.0, 0.7};
  EXPECT_THROW(bregman_divergence(phi, bad, b), DomainError);
}

TEST(BregmanDivergence, NonnegativeOnRandomPairs) {
  std::mt19937_64 rng(11);
  for (const auto kind : {PotentialKind::LogCosh, PotentialKind::HalfSquare}) {
    const ConvexPotential phi{kind, 0.3};
    for (int t = 0; t < 200; ++t) {
      const auto a = random_vec(rng, 10, 2.0);
      const auto b = random_vec(rng, 10, 2.0);
      EXPECT_GE(bregman_divergence(phi, a, b), -1e-12);
    }
  }
}

TEST(ConvexPotential, HessianMatchesSecondDifference) {
  const ConvexPotential phi{PotentialKind::LogCosh, 0.7};
  const double h = 1e-4;
  for (double x : {-2.0, -0.1, 0.4, 3.0}) {
    const std::vector<double> p{x + h}, c{x}, m{x - h};
    const double fd = (phi.value(p) - 2.0 * phi.value(c) + phi.value(m)) / (h * h);
    EXPECT_NEAR(phi.hessian_diag(c)[0], fd, 1e-6);
  }
}

TEST(LneMetric, FactorAndDenseForm) {
  const std::vector<double> xi{0.5, -1.0, 2.0};
  const auto g = lne_metric(xi, 0.3);
  ASSERT_EQ(g.dim(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_DOUBLE_EQ(g.u()[i], std::tanh(0.3 * xi[i]));
  const Eigen::MatrixXd d = g.dense();
  const Eigen::VectorXd u = as_eigen({g.u().begin(), g.u().end()});
  EXPECT_LT((d - (Eigen::MatrixXd::Identity(3, 3) - u * u.transpose())).norm(), 1e-15);
  EXPECT_NEAR(g.norm_sq(), u.squaredNorm(), 1e-15);
  EXPECT_TRUE(g.positive_definite());
}

TEST(ExactFlow, MatchesDenseSolve) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> norm(0.0, 0.9);
  std::uniform_int_distribution<int> dim(1, 64);
  for (int t = 0; t < 100; ++t) {
    const int n = dim(rng);
    const FactoredLneMetric g(factor_with_norm(rng, n, norm(rng)), 1.0);
    const auto grad = random_vec(rng, n, 1.0);
    const auto fast = exact_gradient_flow(g, grad);
    const Eigen::VectorXd ref = g.dense().partialPivLu().solve(as_eigen(grad));
    EXPECT_LT((as_eigen(fast) - ref).norm() / ref.norm(), 1e-10) << "n=" << n;
  }
}

TEST(ExactFlow, SingularMetricThrows) {
  const FactoredLneMetric g({0.8, 0.6}, 1.0);  // ||u||^2 = 1
  const std::vector<double> grad{1.0, 1.0};
  EXPECT_FALSE(g.positive_definite());
  EXPECT_THROW(exact_gradient_flow(g, grad), SingularMetricError);
}

TEST(ExactFlow, ZeroFactorIsIdentity) {
  const FactoredLneMetric g({0.0, 0.0, 0.0}, 1.0);
  const std::vector<double> grad{1.5, -2.0, 0.25};
  EXPECT_EQ(exact_gradient_flow(g, grad), grad);
}

TEST(FactoredMetric, RejectsEntriesOutsideUnitInterval) {
  EXPECT_THROW(FactoredLneMetric({1.0, 0.0}, 1.0), DomainError);
}

TEST(WeakFlow, ResidualEqualsFourthPowerOfNorm) {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> norm(0.0, 0.9);
  for (int t = 0; t < 100; ++t) {
    const int n = 1 + t % 32;
    const auto u = factor_with_norm(rng, n, norm(rng));
    const Eigen::VectorXd v = as_eigen(u);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd r = (I - v * v.transpose()) * (I + v * v.transpose()) - I;
    const double spectral = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(r)
                                .eigenvalues()
                                .cwiseAbs()
                                .maxCoeff();
    EXPECT_NEAR(spectral, std::pow(v.squaredNorm(), 2), 1e-12);
  }
}

TEST(WeakFlow, DirectionIsIPlusUUTimesGrad) {
  std::mt19937_64 rng(29);
  const FactoredLneMetric g(factor_with_norm(rng, 6, 0.2), 1.0);
  const auto grad = random_vec(rng, 6, 1.0);
  const auto wf = weak_gradient_flow(g, grad);
  const Eigen::VectorXd u = as_eigen({g.u().begin(), g.u().end()});
  const Eigen::VectorXd ref =
      (Eigen::MatrixXd::Identity(6, 6) + u * u.transpose()) * as_eigen(grad);
  EXPECT_LT((as_eigen(wf.direction) - ref).norm(), 1e-14);
  std::vector<double> in_place = grad;
  EXPECT_EQ(apply_weak_flow(g, in_place), wf.dominant);
  EXPECT_EQ(in_place, wf.direction);
}

TEST(Dominance, AgreesWithRowByRowDefinition) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> norm(0.0, 0.99);
  int dominant = 0;
  for (int t = 0; t < 300; ++t) {
    const int n = 1 + t % 20;
    const FactoredLneMetric g(factor_with_norm(rng, n, norm(rng)), 1.0);
    const Eigen::MatrixXd d = g.dense();
    bool ref = true;
    for (int i = 0; i < n; ++i) {
      double off = 0.0;
      for (int j = 0; j < n; ++j)
        if (j != i) off += std::abs(d(i, j));
      if (!(std::abs(d(i, i)) > off)) ref = false;
    }
    EXPECT_EQ(dominance_check(g), ref) << "trial " << t;
    dominant += ref;
  }
  // The sample must exercise both outcomes.
  EXPECT_GT(dominant, 0);
  EXPECT_LT(dominant, 300);
}

TEST(Dominance, SmallFactorIsDominantAndWeakFlowReportsIt) {
  const FactoredLneMetric small({0.1, -0.1, 0.05}, 1.0);
  EXPECT_TRUE(dominance_check(small));
  // Row 0: 1 - 0.49 = 0.51 against 0.7 * (0.7 + 0.1) = 0.56.
  const FactoredLneMetric big({0.7, 0.7, 0.1}, 1.0);
  EXPECT_FALSE(dominance_check(big));
  const std::vector<double> grad{1.0, 1.0, 1.0};
  EXPECT_FALSE(weak_gradient_flow(big, grad).dominant);
}

TEST(PackSymmetric, RoundTrip) {
  Eigen::MatrixXd m(3, 3);
  m << 1, 2, 3, 2, 4, 5, 3, 5, 6;
  const auto p = pack_symmetric(m);
  EXPECT_EQ(p.size(), 6);
  EXPECT_EQ(unpack_symmetric(p, 3), m);
  EXPECT_THROW(unpack_symmetric(p, 4), ShapeError);
}

TEST(StrongApprox, LearnsInverseOfSmallMetric) {
  std::mt19937_64 rng(37);
  const FactoredLneMetric g(factor_with_norm(rng, 4, 0.3), 1.0);
  StrongApproxOptions opt;
  opt.steps = 3000;
  opt.seed = 5;
  const auto res = strong_approx_train(g, opt);
  const Eigen::MatrixXd dense = g.dense();
  EXPECT_LT(res.final_loss, 1e-2);
  const Eigen::MatrixXd inv = dense.inverse();
  EXPECT_LT((res.approx_inverse - inv).norm() / inv.norm(), 0.1);
  const double loss = (Eigen::MatrixXd::Identity(4, 4) - dense * res.approx_inverse).squaredNorm();
  EXPECT_NEAR(loss, res.final_loss, 1e-12);
  // Checkpoints never increase: the best iterate is kept.
  for (std::size_t i = 1; i < res.loss_checkpoints.size(); ++i) {
    EXPECT_LE(res.loss_checkpoints[i], res.loss_checkpoints[i - 1]);
  }
}

TEST(StrongApprox, RejectsBadMetrics) {
  EXPECT_THROW(strong_approx_train(Eigen::MatrixXd::Identity(65, 65), {}), ArgumentError);
  Eigen::MatrixXd neg = -Eigen::MatrixXd::Identity(3, 3);
  EXPECT_THROW(strong_approx_train(neg, {}), SingularMetricError);
  EXPECT_THROW(strong_approx_train(Eigen::MatrixXd(2, 3), {}), ShapeError);
}

TEST(DivergenceAxioms, NoViolationsAndFirstOrderLocalError) {
  const auto rep = divergence_axioms_check({PotentialKind::LogCosh, 0.5}, 16, 200, 1);
  EXPECT_EQ(rep.total_violations(), 0);
  EXPECT_EQ(rep.trials, 200);
  EXPECT_GT(rep.local_metric_slope, 0.8);
  EXPECT_LT(rep.local_metric_slope, 1.2);
  const auto ent = divergence_axioms_check({PotentialKind::NegativeEntropy, 1.0}, 8, 100, 2);
  EXPECT_EQ(ent.total_violations(), 0);
}
