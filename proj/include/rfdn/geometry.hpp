#pragma once

// Information geometry of the parameter space: convex potentials, Bregman and
// LNE divergences, the rank-one LNE metric g = I - u u^T with u = tanh(tau xi),
// and the exact / weak / strong approximations of the steepest-descent flow
// g^{-1} grad.

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rfdn::geometry {

/// Flattened weights of one layer; a point on the parameter manifold.
struct ParamVector {
  std::vector<double> values;
  int layer_id = 0;

  ParamVector() = default;
  explicit ParamVector(std::vector<double> v, int layer = 0);

  std::size_t dim() const noexcept { return values.size(); }
  std::span<const double> view() const noexcept { return values; }
};

/// LNE metric g = I - u u^T stored through its rank-one factor u.
class FactoredLneMetric {
 public:
  FactoredLneMetric(std::vector<double> u, double tau);

  std::span<const double> u() const noexcept { return u_; }
  double tau() const noexcept { return tau_; }
  std::size_t dim() const noexcept { return u_.size(); }

  /// ||u||^2; the smallest eigenvalue of the dense form is 1 - ||u||^2.
  double norm_sq() const noexcept { return norm_sq_; }
  bool positive_definite() const noexcept { return norm_sq_ < 1.0; }

  /// Materializes I - u u^T. For tests and small diagnostics only.
  Eigen::MatrixXd dense() const;

 private:
  std::vector<double> u_;
  double tau_;
  double norm_sq_;
};

enum class PotentialKind { LogCosh, HalfSquare, NegativeEntropy };

std::string to_string(PotentialKind kind);

struct ConvexPotential {
  PotentialKind kind = PotentialKind::LogCosh;
  double tau = 1.0;  // log-cosh only

  double value(std::span<const double> xi) const;
  std::vector<double> gradient(std::span<const double> xi) const;
  /// Diagonal of the Hessian (all three potentials are separable).
  std::vector<double> hessian_diag(std::span<const double> xi) const;
  void check_domain(std::span<const double> xi) const;
};

/// log(cosh(x)) without overflow for large |x|.
double log_cosh(double x);

double convex_potential(std::span<const double> xi, double tau);

/// phi(xi') - phi(xi) - (xi' - xi) . grad phi(xi)
double bregman_divergence(const ConvexPotential& phi,
                          std::span<const double> xi_p,
                          std::span<const double> xi);

/// Closed-form Bregman divergence of the log-cosh potential.
double lne_divergence(std::span<const double> xi_p, std::span<const double> xi,
                      double tau);

FactoredLneMetric lne_metric(std::span<const double> xi, double tau);

/// Strict diagonal dominance of I - u u^T, evaluated in O(n).
bool dominance_check(const FactoredLneMetric& metric);

/// g^{-1} grad = grad + u (u.grad) / (1 - ||u||^2).
/// Throws SingularMetricError when ||u||^2 >= 1.
std::vector<double> exact_gradient_flow(const FactoredLneMetric& metric,
                                        std::span<const double> grad);

struct WeakFlow {
  std::vector<double> direction;
  /// False when the metric was not strictly diagonally dominant; the
  /// direction is still returned.
  bool dominant = true;
};

/// (I + u u^T) grad, the first-order inverse of I - u u^T.
WeakFlow weak_gradient_flow(const FactoredLneMetric& metric,
                            std::span<const double> grad);

/// In-place variant used on the training hot path; returns dominance.
bool apply_weak_flow(const FactoredLneMetric& metric, std::span<double> grad);
void apply_exact_flow(const FactoredLneMetric& metric, std::span<double> grad);

// --- strong approximation -------------------------------------------------

struct StrongApproxOptions {
  int hidden_width = 64;
  int steps = 4000;
  double learning_rate = 2e-3;
  std::uint64_t seed = 0;
  int checkpoint_every = 100;
};

struct StrongApproxResult {
  Eigen::MatrixXd approx_inverse;        ///< the learned metric g~
  double final_loss = 0.0;               ///< ||I - g g~||_F^2 of the best iterate
  std::vector<double> loss_checkpoints;  ///< best-so-far loss at each checkpoint
};

/// Packs a symmetric matrix into [lower-triangle entries, diagonal entries].
Eigen::VectorXd pack_symmetric(const Eigen::MatrixXd& m);
Eigen::MatrixXd unpack_symmetric(const Eigen::VectorXd& packed, int n);

/// Trains a one-hidden-layer perceptron that maps the packed entries of g to
/// the packed entries of g~, minimizing ||I - g g~||_F^2. Dense; n <= 64.
StrongApproxResult strong_approx_train(const Eigen::MatrixXd& metric,
                                       const StrongApproxOptions& options);
StrongApproxResult strong_approx_train(const FactoredLneMetric& metric,
                                       const StrongApproxOptions& options);

// --- divergence axioms ----------------------------------------------------

struct AxiomViolation {
  int trial = 0;
  std::string criterion;
  double value = 0.0;
};

struct AxiomReport {
  PotentialKind kind = PotentialKind::LogCosh;
  int trials = 0;
  int nonnegativity_violations = 0;
  int identity_violations = 0;
  int local_metric_violations = 0;
  /// Median log-log slope of |2 D[xi : xi + h] / h^2 - g(xi)| against h, from
  /// h = 1e-2 to h = 1e-3 (about 1 for a first-order error, NaN when exact).
  double local_metric_slope = 0.0;
  std::vector<AxiomViolation> violations;

  int total_violations() const noexcept {
    return nonnegativity_violations + identity_violations +
           local_metric_violations;
  }
};

/// Samples random point pairs and checks nonnegativity, identity of
/// indiscernibles, and the second-order agreement 2 D[xi : xi + h] ~ g h^2.
AxiomReport divergence_axioms_check(const ConvexPotential& potential, int n,
                                    int trials, std::uint64_t seed);

}  // namespace rfdn::geometry
