#include "rfdn/ricci.hpp"

#include "rfdn/error.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace rfdn::ricci {

void TranslationSpec::validate() const {
  if (k1 == k2 || j1 == j2) {
    throw ArgumentError("TranslationSpec: k1 != k2 and j1 != j2 required");
  }
  for (int v : {k1, k2, j1, j2}) {
    if (std::abs(v) > kMaxOffset) {
      throw ArgumentError("TranslationSpec: offsets are limited to " +
                          std::to_string(kMaxOffset) + " pixels");
    }
  }
}

std::array<double, 4> TranslationSpec::coefficients() const {
  validate();
  const double dk = static_cast<double>(k1 - k2);
  const double dj = static_cast<double>(j1 - j2);
  return {-1.0 / dk, 1.0 / dk, 1.0 / dj, -1.0 / dj};
}

void MetricSnapshot::validate() const {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& f = layers[l];
    for (int m = 0; m < 4; ++m) {
      if (f.u[m].empty() || f.u[m].size() != f.u[0].size()) {
        throw IncompleteSnapshotError("snapshot layer " + std::to_string(l) +
                                      ": missing or mismatched translation " +
                                      std::to_string(m));
      }
      for (double v : f.u[m]) {
        if (!(std::abs(v) < 1.0)) {
          throw DomainError("snapshot factor entries must lie in (-1, 1)");
        }
      }
    }
  }
}

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

Eigen::Matrix4d gram_of(const std::array<std::vector<double>, 4>& u) {
  Eigen::Matrix4d g;
  for (int a = 0; a < 4; ++a) {
    for (int b = a; b < 4; ++b) g(a, b) = g(b, a) = dot(u[a], u[b]);
  }
  return g;
}

/// || d I - sum_m w_m u_m u_m^T ||_F^2 for an n-dimensional layer.
double weighted_norm_sq(const Eigen::Matrix4d& g, const std::array<double, 4>& w,
                        double d, double n) {
  double quad = 0.0;
  double trace = 0.0;
  for (int a = 0; a < 4; ++a) {
    trace += w[a] * g(a, a);
    for (int b = 0; b < 4; ++b) quad += w[a] * w[b] * g(a, b) * g(a, b);
  }
  return d * d * n - 2.0 * d * trace + quad;
}

}  // namespace

double RankOneCombination::frobenius_norm_sq() const {
  const Eigen::Matrix4d g = gram_of(factor);
  double s = 0.0;
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) s += coeff[a] * coeff[b] * g(a, b) * g(a, b);
  return std::max(s, 0.0);
}

double RankOneCombination::frobenius_norm() const {
  return std::sqrt(frobenius_norm_sq());
}

Eigen::MatrixXd RankOneCombination::dense() const {
  const auto n = static_cast<Eigen::Index>(factor[0].size());
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(n, n);
  for (int m = 0; m < 4; ++m) {
    const Eigen::Map<const Eigen::VectorXd> u(factor[m].data(), n);
    c += coeff[m] * u * u.transpose();
  }
  return c;
}

std::vector<RankOneCombination> discrete_ricci(const MetricSnapshot& snapshot,
                                               const TranslationSpec& spec) {
  snapshot.validate();
  const auto c = spec.coefficients();
  std::vector<RankOneCombination> out;
  out.reserve(snapshot.layers.size());
  for (const auto& layer : snapshot.layers) {
    out.push_back(RankOneCombination{c, layer.u});
  }
  return out;
}

Eigen::Matrix4d gram(const LayerFactors& factors) { return gram_of(factors.u); }

double layer_regularization(const LayerFactors& factors,
                            const TranslationSpec& spec) {
  const auto c = spec.coefficients();
  const Eigen::Matrix4d g = gram_of(factors.u);
  const std::array<double, 4> w{-c[0], -c[1], -c[2], -c[3]};
  return std::max(weighted_norm_sq(g, w, 0.0, 0.0), 0.0);
}

double regularization_N(const MetricSnapshot& snapshot,
                        const TranslationSpec& spec) {
  snapshot.validate();
  double total = 0.0;
  for (const auto& layer : snapshot.layers) {
    total += layer_regularization(layer, spec);
  }
  return total;
}

RegularizationBounds regularization_bounds(const MetricSnapshot& snapshot,
                                           const TranslationSpec& spec,
                                           double eps) {
  if (!(eps >= 0.0)) throw ArgumentError("regularization_bounds: eps >= 0");
  snapshot.validate();
  spec.validate();
  const double a = static_cast<double>(spec.k1 - spec.k2);
  const double b = static_cast<double>(spec.j1 - spec.j2);
  const double s = 1.0 + eps;

  // Both bounds are || sum_m w_m g|m ||^2 with g|m = I - u|m u|m^T.
  const std::array<double, 4> w_upper{s / a, -1.0 / (s * a), -1.0 / (s * b),
                                      s / b};
  const std::array<double, 4> w_lower{1.0 / (s * a), -s / a, -s / b,
                                      1.0 / (s * b)};
  auto sum = [](const std::array<double, 4>& w) {
    return w[0] + w[1] + w[2] + w[3];
  };

  RegularizationBounds out;
  for (const auto& layer : snapshot.layers) {
    const Eigen::Matrix4d g = gram_of(layer.u);
    const double n = static_cast<double>(layer.dim());
    out.upper += weighted_norm_sq(g, w_upper, sum(w_upper), n);
    out.lower += weighted_norm_sq(g, w_lower, sum(w_lower), n);
    out.nominal += layer_regularization(layer, spec);
  }
  return out;
}

std::vector<double> rf_residual(const LayerFactors& current,
                                const LayerFactors& next,
                                const TranslationSpec& spec) {
  spec.validate();
  const std::size_t n = current.dim();
  if (next.dim() != n) throw ShapeError("rf_mask: layer dimension changed");
  for (int m = 0; m < 4; ++m) {
    if (current.u[m].size() != n) throw ShapeError("rf_mask: ragged factors");
  }
  const double dk = static_cast<double>(spec.k1 - spec.k2);
  const double dj = static_cast<double>(spec.j1 - spec.j2);
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double xk1 = current.u[kK1][i] * current.u[kK1][i];
    const double xk2 = current.u[kK2][i] * current.u[kK2][i];
    const double xj1 = current.u[kJ1][i] * current.u[kJ1][i];
    const double xj2 = current.u[kJ2][i] * current.u[kJ2][i];
    const double xk1_next = next.u[kK1][i] * next.u[kK1][i];
    r[i] = xk1_next - xk1 + (xk2 - xk1) / dk - (xj2 - xj1) / dj;
  }
  return r;
}

std::vector<std::vector<std::uint8_t>> rf_mask(const MetricSnapshot& current,
                                               const MetricSnapshot& next,
                                               const TranslationSpec& spec,
                                               double beta) {
  if (!(beta > 0.0)) throw ArgumentError("rf_mask: beta must be positive");
  if (next.time_index != current.time_index + 1) {
    throw ArgumentError("rf_mask: snapshots must be consecutive in time");
  }
  if (current.layers.size() != next.layers.size()) {
    throw ShapeError("rf_mask: layer count mismatch");
  }
  std::vector<std::vector<std::uint8_t>> out(current.layers.size());
  for (std::size_t l = 0; l < current.layers.size(); ++l) {
    const auto r = rf_residual(current.layers[l], next.layers[l], spec);
    out[l].resize(r.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      out[l][i] = std::abs(r[i]) <= beta ? 1 : 0;
    }
  }
  return out;
}

Eigen::MatrixXd flow_step(const std::array<Eigen::MatrixXd, 4>& branches,
                          const TranslationSpec& spec) {
  spec.validate();
  for (const auto& g : branches) {
    if (g.rows() != branches[0].rows() || g.cols() != branches[0].cols()) {
      throw ShapeError("flow_step: branch shapes differ");
    }
  }
  const double dk = static_cast<double>(spec.k1 - spec.k2);
  const double dj = static_cast<double>(spec.j1 - spec.j2);
  return branches[kK1] + (branches[kK1] - branches[kK2]) / dk -
         (branches[kJ1] - branches[kJ2]) / dj;
}

std::vector<double> flow_sandbox(const FlowSandboxOptions& options,
                                 const TranslationSpec& spec) {
  spec.validate();
  if (options.n < 1 || options.steps < 0 || options.positions < 2 ||
      options.modes < 1 || 2 * options.modes >= options.positions) {
    throw ArgumentError("flow_sandbox: invalid sizes");
  }
  const int n = options.n;
  const int positions = options.positions;

  // Smooth zero-mean perturbation field on a ring: each position carries a
  // symmetric n x n matrix built from the lowest Fourier modes.
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_symmetric = [&] {
    Eigen::MatrixXd m(n, n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) m(i, j) = m(j, i) = normal(rng);
    return m;
  };
  std::vector<Eigen::MatrixXd> field(positions, Eigen::MatrixXd::Zero(n, n));
  for (int q = 1; q <= options.modes; ++q) {
    const Eigen::MatrixXd cos_part = random_symmetric();
    const Eigen::MatrixXd sin_part = random_symmetric();
    for (int p = 0; p < positions; ++p) {
      const double phase = 2.0 * std::numbers::pi * q * p / positions;
      field[p] += std::cos(phase) * cos_part + std::sin(phase) * sin_part;
    }
  }
  auto norm = [&] {
    double s = 0.0;
    for (const auto& h : field) s += h.squaredNorm();
    return std::sqrt(s);
  };
  const double initial = norm();
  const double scale = initial > 0.0 ? options.amplitude / initial : 0.0;
  for (auto& h : field) h *= scale;

  // The k1 branch is the field itself; the other branches re-sample it,
  // by linear interpolation, at ring positions displaced by a fixed fraction
  // of a cell per unit offset. With k1 < k2 and j1 < j2 the two quotients form
  // a forward and a backward difference, so the update is an explicit
  // diffusion step h + kSubCell (h[p+1] - 2 h[p] + h[p-1]), stable for every
  // ring frequency.
  constexpr double kSubCell = 1.0 / (4.0 * TranslationSpec::kMaxOffset);
  const double shift_k = kSubCell * (spec.k2 - spec.k1);
  const double shift_j = kSubCell * (spec.j2 - spec.j1);
  auto wrap = [positions](int p) {
    return ((p % positions) + positions) % positions;
  };
  auto sample = [&](int p, double offset) -> Eigen::MatrixXd {
    const double base = std::floor(offset);
    const double frac = offset - base;
    const int i = p + static_cast<int>(base);
    return (1.0 - frac) * field[wrap(i)] + frac * field[wrap(i + 1)];
  };
  const Eigen::MatrixXd identity = Eigen::MatrixXd::Identity(n, n);

  std::vector<double> trace;
  trace.reserve(options.steps + 1);
  trace.push_back(norm());
  std::vector<Eigen::MatrixXd> next(positions);
  for (int t = 0; t < options.steps; ++t) {
    for (int p = 0; p < positions; ++p) {
      const std::array<Eigen::MatrixXd, 4> branches{
          identity + field[p], identity + sample(p, shift_k),
          identity + sample(p, -shift_j), identity + field[p]};
      next[p] = flow_step(branches, spec) - identity;
    }
    field.swap(next);
    trace.push_back(norm());
  }
  return trace;
}

// --- finite-difference curvature oracle --------------------------------------

namespace {

// Gamma[k](i, j) = Gamma^k_{ij}
using Christoffel = std::array<Eigen::Matrix2d, 2>;

}  // namespace

RicciField ricci_oracle(const MetricField& field) {
  if (field.nx < 5 || field.ny < 5) {
    throw ArgumentError("ricci_oracle: grid must be at least 5x5");
  }
  if (!(field.spacing > 0.0)) throw ArgumentError("ricci_oracle: spacing > 0");
  if (field.samples.size() != static_cast<std::size_t>(field.nx) * field.ny) {
    throw ShapeError("ricci_oracle: sample count does not match the grid");
  }
  const int nx = field.nx;
  const int ny = field.ny;
  const double h = field.spacing;
  auto idx = [ny](int i, int j) { return i * ny + j; };

  std::vector<Eigen::Matrix2d> inverse(field.samples.size());
  for (std::size_t s = 0; s < field.samples.size(); ++s) {
    const Eigen::Matrix2d& g = field.samples[s];
    const double det = g.determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-300) {
      throw SingularMetricError("ricci_oracle: non-invertible metric sample");
    }
    inverse[s] = g.inverse();
  }

  // Christoffel symbols on grid indices 1..n-2.
  std::vector<Christoffel> gamma(field.samples.size());
  for (int i = 1; i < nx - 1; ++i) {
    for (int j = 1; j < ny - 1; ++j) {
      // dg[a] = d g / d x^a
      const std::array<Eigen::Matrix2d, 2> dg{
          (field.at(i + 1, j) - field.at(i - 1, j)) / (2.0 * h),
          (field.at(i, j + 1) - field.at(i, j - 1)) / (2.0 * h)};
      const Eigen::Matrix2d& ginv = inverse[idx(i, j)];
      Christoffel& out = gamma[idx(i, j)];
      for (int k = 0; k < 2; ++k) {
        for (int a = 0; a < 2; ++a) {
          for (int b = 0; b < 2; ++b) {
            double s = 0.0;
            for (int l = 0; l < 2; ++l) {
              s += ginv(k, l) * (dg[a](b, l) + dg[b](a, l) - dg[l](a, b));
            }
            out[k](a, b) = 0.5 * s;
          }
        }
      }
    }
  }

  RicciField result;
  result.nx = nx - 4;
  result.ny = ny - 4;
  result.offset = 2;
  result.values.resize(static_cast<std::size_t>(result.nx) * result.ny);
  for (int i = 2; i < nx - 2; ++i) {
    for (int j = 2; j < ny - 2; ++j) {
      // dG[p][k](a, b) = d Gamma^k_{ab} / d x^p
      std::array<Christoffel, 2> dG;
      for (int k = 0; k < 2; ++k) {
        dG[0][k] = (gamma[idx(i + 1, j)][k] - gamma[idx(i - 1, j)][k]) / (2.0 * h);
        dG[1][k] = (gamma[idx(i, j + 1)][k] - gamma[idx(i, j - 1)][k]) / (2.0 * h);
      }
      const Christoffel& G = gamma[idx(i, j)];
      // R_ab = R^p_{pab} = d_p G^p_ab - d_a G^p_pb + G^q_ab G^p_pq - G^q_pb G^p_aq
      Eigen::Matrix2d ric;
      for (int a = 0; a < 2; ++a) {
        for (int b = 0; b < 2; ++b) {
          double s = 0.0;
          for (int p = 0; p < 2; ++p) {
            s += dG[p][p](a, b) - dG[a][p](p, b);
            for (int q = 0; q < 2; ++q) {
              s += G[q](a, b) * G[p](p, q) - G[q](p, b) * G[p](a, q);
            }
          }
          ric(a, b) = s;
        }
      }
      result.values[(i - 2) * result.ny + (j - 2)] = ric;
    }
  }
  return result;
}

}  // namespace rfdn::ricci
