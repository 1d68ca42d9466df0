#include "rfdn/geometry.hpp"

#include "rfdn/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace rfdn::geometry {

namespace {

void require_finite(std::span<const double> xs, const char* what) {
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i])) {
      throw DomainError(std::string(what) + ": non-finite entry at index " +
                        std::to_string(i));
    }
  }
}

void require_same_dim(std::span<const double> a, std::span<const double> b,
                      const char* what) {
  if (a.size() != b.size()) {
    throw ShapeError(std::string(what) + ": dimension mismatch (" +
                     std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  }
}

void require_tau(double tau) {
  if (!(tau > 0.0) || !std::isfinite(tau)) {
    throw DomainError("tau must be positive and finite");
  }
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

ParamVector::ParamVector(std::vector<double> v, int layer)
    : values(std::move(v)), layer_id(layer) {
  if (values.empty()) throw ShapeError("ParamVector: dimension must be > 0");
  require_finite(values, "ParamVector");
}

FactoredLneMetric::FactoredLneMetric(std::vector<double> u, double tau)
    : u_(std::move(u)), tau_(tau) {
  require_tau(tau);
  for (double v : u_) {
    if (!(std::abs(v) < 1.0)) {
      throw DomainError("FactoredLneMetric: factor entries must lie in (-1, 1)");
    }
  }
  norm_sq_ = dot(u_, u_);
}

Eigen::MatrixXd FactoredLneMetric::dense() const {
  const Eigen::Map<const Eigen::VectorXd> u(u_.data(),
                                            static_cast<Eigen::Index>(u_.size()));
  Eigen::MatrixXd g = -u * u.transpose();
  g.diagonal().array() += 1.0;
  return g;
}

std::string to_string(PotentialKind kind) {
  switch (kind) {
    case PotentialKind::LogCosh: return "log-cosh";
    case PotentialKind::HalfSquare: return "half-square";
    case PotentialKind::NegativeEntropy: return "negative-entropy";
  }
  return "unknown";
}

double log_cosh(double x) {
  const double a = std::abs(x);
  if (a < 1.0) {
    // cosh(x) - 1 = 2 sinh^2(x / 2), free of cancellation near zero
    const double s = std::sinh(0.5 * a);
    return std::log1p(2.0 * s * s);
  }
  return a + std::log1p(std::exp(-2.0 * a)) - std::numbers::ln2;
}

void ConvexPotential::check_domain(std::span<const double> xi) const {
  require_finite(xi, "ConvexPotential");
  if (kind == PotentialKind::LogCosh) require_tau(tau);
  if (kind == PotentialKind::NegativeEntropy) {
    for (double v : xi) {
      if (!(v > 0.0)) {
        throw DomainError("negative-entropy potential needs positive entries");
      }
    }
  }
}

double ConvexPotential::value(std::span<const double> xi) const {
  check_domain(xi);
  double s = 0.0;
  switch (kind) {
    case PotentialKind::LogCosh:
      for (double v : xi) s += log_cosh(tau * v);
      return s / (tau * tau);
    case PotentialKind::HalfSquare:
      for (double v : xi) s += v * v;
      return 0.5 * s;
    case PotentialKind::NegativeEntropy:
      for (double v : xi) s += v * std::log(v);
      return s;
  }
  return s;
}

std::vector<double> ConvexPotential::gradient(std::span<const double> xi) const {
  check_domain(xi);
  std::vector<double> g(xi.size());
  for (std::size_t i = 0; i < xi.size(); ++i) {
    switch (kind) {
      case PotentialKind::LogCosh: g[i] = std::tanh(tau * xi[i]) / tau; break;
      case PotentialKind::HalfSquare: g[i] = xi[i]; break;
      case PotentialKind::NegativeEntropy: g[i] = std::log(xi[i]) + 1.0; break;
    }
  }
  return g;
}

std::vector<double> ConvexPotential::hessian_diag(
    std::span<const double> xi) const {
  check_domain(xi);
  std::vector<double> h(xi.size());
  for (std::size_t i = 0; i < xi.size(); ++i) {
    switch (kind) {
      case PotentialKind::LogCosh: {
        const double t = std::tanh(tau * xi[i]);
        h[i] = 1.0 - t * t;
        break;
      }
      case PotentialKind::HalfSquare: h[i] = 1.0; break;
      case PotentialKind::NegativeEntropy: h[i] = 1.0 / xi[i]; break;
    }
  }
  return h;
}

double convex_potential(std::span<const double> xi, double tau) {
  return ConvexPotential{PotentialKind::LogCosh, tau}.value(xi);
}

double bregman_divergence(const ConvexPotential& phi,
                          std::span<const double> xi_p,
                          std::span<const double> xi) {
  require_same_dim(xi_p, xi, "bregman_divergence");
  phi.check_domain(xi_p);
  phi.check_domain(xi);
  const std::vector<double> grad = phi.gradient(xi);
  // Summed per coordinate so equal points give exactly zero.
  double d = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    const double a = xi_p[i];
    const double b = xi[i];
    double term = 0.0;
    switch (phi.kind) {
      case PotentialKind::LogCosh:
        term = (log_cosh(phi.tau * a) - log_cosh(phi.tau * b)) /
               (phi.tau * phi.tau);
        break;
      case PotentialKind::HalfSquare: term = 0.5 * (a * a - b * b); break;
      case PotentialKind::NegativeEntropy:
        term = a * std::log(a) - b * std::log(b);
        break;
    }
    d += term - (a - b) * grad[i];
  }
  return d;
}

double lne_divergence(std::span<const double> xi_p, std::span<const double> xi,
                      double tau) {
  require_same_dim(xi_p, xi, "lne_divergence");
  require_tau(tau);
  require_finite(xi_p, "lne_divergence");
  require_finite(xi, "lne_divergence");
  double d = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) {
    d += (log_cosh(tau * xi_p[i]) - log_cosh(tau * xi[i])) / (tau * tau) -
         (xi_p[i] - xi[i]) * std::tanh(tau * xi[i]) / tau;
  }
  return d;
}

FactoredLneMetric lne_metric(std::span<const double> xi, double tau) {
  require_tau(tau);
  require_finite(xi, "lne_metric");
  std::vector<double> u(xi.size());
  std::transform(xi.begin(), xi.end(), u.begin(),
                 [tau](double v) { return std::tanh(tau * v); });
  return FactoredLneMetric(std::move(u), tau);
}

bool dominance_check(const FactoredLneMetric& metric) {
  const auto u = metric.u();
  double total = 0.0;
  for (double v : u) total += std::abs(v);
  for (double v : u) {
    const double a = std::abs(v);
    if (!(1.0 - a * a > a * (total - a))) return false;
  }
  return true;
}

void apply_exact_flow(const FactoredLneMetric& metric, std::span<double> grad) {
  require_same_dim(metric.u(), grad, "exact_gradient_flow");
  if (!metric.positive_definite()) {
    throw SingularMetricError("exact_gradient_flow: ||u||^2 = " +
                              std::to_string(metric.norm_sq()) + " >= 1");
  }
  const auto u = metric.u();
  const double coeff = dot(u, grad) / (1.0 - metric.norm_sq());
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += u[i] * coeff;
}

std::vector<double> exact_gradient_flow(const FactoredLneMetric& metric,
                                        std::span<const double> grad) {
  std::vector<double> out(grad.begin(), grad.end());
  apply_exact_flow(metric, out);
  return out;
}

bool apply_weak_flow(const FactoredLneMetric& metric, std::span<double> grad) {
  require_same_dim(metric.u(), grad, "weak_gradient_flow");
  const auto u = metric.u();
  const double coeff = dot(u, grad);
  for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += u[i] * coeff;
  return dominance_check(metric);
}

WeakFlow weak_gradient_flow(const FactoredLneMetric& metric,
                            std::span<const double> grad) {
  WeakFlow out{std::vector<double>(grad.begin(), grad.end()), true};
  out.dominant = apply_weak_flow(metric, out.direction);
  return out;
}

// --- strong approximation -------------------------------------------------

Eigen::VectorXd pack_symmetric(const Eigen::MatrixXd& m) {
  const Eigen::Index n = m.rows();
  Eigen::VectorXd out(n * (n + 1) / 2);
  Eigen::Index k = 0;
  for (Eigen::Index i = 1; i < n; ++i)
    for (Eigen::Index j = 0; j < i; ++j) out(k++) = m(i, j);
  for (Eigen::Index i = 0; i < n; ++i) out(k++) = m(i, i);
  return out;
}

Eigen::MatrixXd unpack_symmetric(const Eigen::VectorXd& packed, int n) {
  if (packed.size() != static_cast<Eigen::Index>(n) * (n + 1) / 2) {
    throw ShapeError("unpack_symmetric: wrong packed length");
  }
  Eigen::MatrixXd m(n, n);
  Eigen::Index k = 0;
  for (int i = 1; i < n; ++i)
    for (int j = 0; j < i; ++j) m(i, j) = m(j, i) = packed(k++);
  for (int i = 0; i < n; ++i) m(i, i) = packed(k++);
  return m;
}

namespace {

struct Adam {
  Eigen::MatrixXd m, v;
  explicit Adam(Eigen::Index rows, Eigen::Index cols)
      : m(Eigen::MatrixXd::Zero(rows, cols)), v(Eigen::MatrixXd::Zero(rows, cols)) {}

  void step(Eigen::MatrixXd& param, const Eigen::MatrixXd& grad, double lr,
            int t) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-12;
    m = b1 * m + (1.0 - b1) * grad;
    v = b2 * v + (1.0 - b2) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }
};

}  // namespace

StrongApproxResult strong_approx_train(const Eigen::MatrixXd& metric,
                                       const StrongApproxOptions& options) {
  const Eigen::Index n = metric.rows();
  if (metric.cols() != n || n == 0) throw ShapeError("metric must be square");
  if (n > 64) throw ArgumentError("strong_approx_train: dimension capped at 64");
  if (options.hidden_width < 1 || options.steps < 1) {
    throw ArgumentError("strong_approx_train: width and steps must be positive");
  }
  if (!metric.allFinite()) throw DomainError("metric has non-finite entries");
  Eigen::LLT<Eigen::MatrixXd> llt(0.5 * (metric + metric.transpose()));
  if (llt.info() != Eigen::Success) {
    throw SingularMetricError("strong_approx_train: metric is not positive-definite");
  }

  const Eigen::VectorXd x = pack_symmetric(metric);
  const Eigen::Index m = x.size();
  const Eigen::Index h = options.hidden_width;

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto randn = [&](Eigen::Index r, Eigen::Index c, double sd) {
    Eigen::MatrixXd out(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
      for (Eigen::Index i = 0; i < r; ++i) out(i, j) = sd * normal(rng);
    return out;
  };
  Eigen::MatrixXd w1 = randn(h, m, 1.0 / std::sqrt(static_cast<double>(m)));
  Eigen::MatrixXd b1 = Eigen::MatrixXd::Zero(h, 1);
  Eigen::MatrixXd w2 = randn(m, h, 0.1 / std::sqrt(static_cast<double>(h)));
  Eigen::MatrixXd b2 = Eigen::MatrixXd::Zero(m, 1);
  Adam opt_w1(h, m), opt_b1(h, 1), opt_w2(m, h), opt_b2(m, 1);

  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);
  StrongApproxResult result;
  result.final_loss = std::numeric_limits<double>::infinity();

  for (int t = 1; t <= options.steps + 1; ++t) {
    const Eigen::VectorXd pre = w1 * x + b1;
    const Eigen::VectorXd hidden = pre.array().tanh().matrix();
    const Eigen::VectorXd y = w2 * hidden + b2;
    const Eigen::MatrixXd approx = unpack_symmetric(y, static_cast<int>(n));
    const Eigen::MatrixXd residual = identity - metric * approx;
    const double loss = residual.squaredNorm();

    if (loss < result.final_loss) {
      result.final_loss = loss;
      result.approx_inverse = approx;
    }
    if ((t - 1) % options.checkpoint_every == 0 || t == options.steps + 1) {
      result.loss_checkpoints.push_back(result.final_loss);
    }
    if (t == options.steps + 1) break;

    // dL/d(approx) = -2 g^T R, folded onto the packed symmetric entries.
    const Eigen::MatrixXd g_approx = -2.0 * metric.transpose() * residual;
    Eigen::VectorXd dy(m);
    Eigen::Index k = 0;
    for (Eigen::Index i = 1; i < n; ++i)
      for (Eigen::Index j = 0; j < i; ++j)
        dy(k++) = g_approx(i, j) + g_approx(j, i);
    for (Eigen::Index i = 0; i < n; ++i) dy(k++) = g_approx(i, i);

    const Eigen::MatrixXd d_w2 = dy * hidden.transpose();
    const Eigen::VectorXd d_hidden = w2.transpose() * dy;
    const Eigen::VectorXd d_pre =
        d_hidden.array() * (1.0 - hidden.array().square());
    const Eigen::MatrixXd d_w1 = d_pre * x.transpose();

    // Linear decay to 5% of the base rate.
    const double frac = static_cast<double>(t - 1) / options.steps;
    const double lr = options.learning_rate * (1.0 - 0.95 * frac);
    opt_w1.step(w1, d_w1, lr, t);
    opt_b1.step(b1, d_pre, lr, t);
    opt_w2.step(w2, d_w2, lr, t);
    opt_b2.step(b2, dy, lr, t);
  }
  return result;
}

StrongApproxResult strong_approx_train(const FactoredLneMetric& metric,
                                       const StrongApproxOptions& options) {
  if (!metric.positive_definite()) {
    throw SingularMetricError("strong_approx_train: ||u||^2 >= 1");
  }
  return strong_approx_train(metric.dense(), options);
}

// --- divergence axioms ----------------------------------------------------

AxiomReport divergence_axioms_check(const ConvexPotential& potential, int n,
                                    int trials, std::uint64_t seed) {
  if (n < 1 || trials < 0) throw ArgumentError("divergence_axioms_check: bad sizes");
  constexpr double kTol = 1e-12;
  constexpr double kRoundoffFloor = 1e-8;

  AxiomReport report;
  report.kind = potential.kind;
  report.trials = trials;

  std::mt19937_64 rng(seed);
  const bool positive = potential.kind == PotentialKind::NegativeEntropy;
  std::uniform_real_distribution<double> coord(positive ? 0.1 : -2.0, 2.0);
  std::uniform_real_distribution<double> point1d(positive ? 0.5 : -1.0,
                                                 positive ? 2.0 : 1.0);

  // Bound on |2 D / h^2 - g| / h, i.e. (2/3) max |phi'''| on the sample range.
  double third_bound = 0.0;
  switch (potential.kind) {
    case PotentialKind::LogCosh: third_bound = potential.tau; break;
    case PotentialKind::HalfSquare: third_bound = 0.0; break;
    case PotentialKind::NegativeEntropy: third_bound = 4.0; break;
  }

  std::vector<double> slopes;
  auto record = [&](int trial, const char* what, double value) {
    if (report.violations.size() < 32) {
      report.violations.push_back({trial, what, value});
    }
  };

  std::vector<double> a(n), b(n);
  for (int t = 0; t < trials; ++t) {
    for (int i = 0; i < n; ++i) {
      a[i] = coord(rng);
      b[i] = coord(rng);
    }
    const double d = bregman_divergence(potential, a, b);
    if (d < -kTol) {
      ++report.nonnegativity_violations;
      record(t, "nonnegativity", d);
    }
    const double self = bregman_divergence(potential, a, a);
    if (std::abs(self) > kTol) {
      ++report.identity_violations;
      record(t, "identity", self);
    }
    if (!(d > 0.0)) {
      ++report.identity_violations;
      record(t, "distinct points with zero divergence", d);
    }

    // Local second-order agreement in 1-D.
    const double p = point1d(rng);
    const double g = potential.hessian_diag(std::span<const double>(&p, 1))[0];
    double errs[2];
    const double hs[2] = {1e-2, 1e-3};
    for (int k = 0; k < 2; ++k) {
      const double q = p + hs[k];
      const double dd = bregman_divergence(potential, std::span<const double>(&p, 1),
                                           std::span<const double>(&q, 1));
      errs[k] = std::abs(2.0 * dd / (hs[k] * hs[k]) - g);
      if (errs[k] > third_bound * hs[k] + kRoundoffFloor) {
        ++report.local_metric_violations;
        record(t, "local metric", errs[k]);
      }
    }
    if (errs[0] > 0.0 && errs[1] > 0.0) {
      slopes.push_back(std::log10(errs[0] / errs[1]));
    }
  }
  if (slopes.empty()) {
    report.local_metric_slope = std::numeric_limits<double>::quiet_NaN();
  } else {
    std::nth_element(slopes.begin(), slopes.begin() + slopes.size() / 2,
                     slopes.end());
    report.local_metric_slope = slopes[slopes.size() / 2];
  }
  return report;
}

}  // namespace rfdn::geometry
