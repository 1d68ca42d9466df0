#pragma once

// Translation-based discrete Ricci curvature over per-layer rank-one metric
// factors, the curvature regularizer N, the Ricci-flow gradient mask, a small
// dense flow sandbox, and a finite-difference Ricci tensor for 2-D metric
// fields.

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <vector>

namespace rfdn::ricci {

/// Input shifts used for the difference quotients. k-offsets move rows, j-offsets
/// move columns.
struct TranslationSpec {
  int k1 = 1;
  int k2 = 2;
  int j1 = 1;
  int j2 = 2;

  static constexpr int kMaxOffset = 4;

  void validate() const;

  /// Coefficients c_m of C = sum_m c_m u_m u_m^T, ordered (k1, k2, j1, j2),
  /// for C = (gamma|k1 - gamma|k2)/(k1 - k2) - (gamma|j1 - gamma|j2)/(j1 - j2)
  /// with gamma = -u u^T.
  std::array<double, 4> coefficients() const;
};

enum Branch : int { kK1 = 0, kK2 = 1, kJ1 = 2, kJ2 = 3 };

/// The four translation factors u|m of one layer.
struct LayerFactors {
  std::array<std::vector<double>, 4> u;

  std::size_t dim() const noexcept { return u[0].size(); }
};

struct MetricSnapshot {
  std::vector<LayerFactors> layers;
  std::int64_t time_index = 0;

  /// Throws IncompleteSnapshotError on a missing branch or unequal dimensions
  /// and DomainError on entries outside (-1, 1).
  void validate() const;
};

/// C = sum_m coeff[m] factor[m] factor[m]^T for one layer; never densified
/// outside of dense().
struct RankOneCombination {
  std::array<double, 4> coeff{};
  std::array<std::vector<double>, 4> factor;

  double frobenius_norm_sq() const;
  double frobenius_norm() const;
  Eigen::MatrixXd dense() const;
};

std::vector<RankOneCombination> discrete_ricci(const MetricSnapshot& snapshot,
                                               const TranslationSpec& spec);

/// 4x4 Gram matrix of the factors, G(m, m') = u|m . u|m'.
Eigen::Matrix4d gram(const LayerFactors& factors);

/// ||C||_F^2 of one layer from the Gram matrix, O(n).
double layer_regularization(const LayerFactors& factors,
                            const TranslationSpec& spec);
/// Sum of the per-layer values.
double regularization_N(const MetricSnapshot& snapshot,
                        const TranslationSpec& spec);

struct RegularizationBounds {
  double lower = 0.0;
  double upper = 0.0;
  double nominal = 0.0;  ///< N of the snapshot itself
};

/// Evaluates the ball-perturbed bound expressions for metrics within a factor
/// (1 + eps) of g = I - u u^T on every branch. Diagnostic only.
RegularizationBounds regularization_bounds(const MetricSnapshot& snapshot,
                                           const TranslationSpec& spec,
                                           double eps);

/// Per-weight {0,1} mask for each layer: 1 where the diagonal flow-consistency
/// residual of Xi = u u^T is within beta.
std::vector<std::vector<std::uint8_t>> rf_mask(const MetricSnapshot& current,
                                               const MetricSnapshot& next,
                                               const TranslationSpec& spec,
                                               double beta);

/// Diagonal residual behind rf_mask for one layer.
std::vector<double> rf_residual(const LayerFactors& current,
                                const LayerFactors& next,
                                const TranslationSpec& spec);

/// One discrete flow step on dense branch metrics (ordered k1, k2, j1, j2):
/// returns g|k1 + (g|k1 - g|k2)/(k1 - k2) - (g|j1 - g|j2)/(j1 - j2).
Eigen::MatrixXd flow_step(const std::array<Eigen::MatrixXd, 4>& branches,
                          const TranslationSpec& spec);

struct FlowSandboxOptions {
  int n = 16;
  double amplitude = 0.01;
  int steps = 100;
  std::uint64_t seed = 0;
  int positions = 16;  ///< length of the periodic sampling ring
  int modes = 3;       ///< Fourier modes 1..modes in the perturbation field
};

/// Evolves a smooth perturbation of the identity under flow_step and returns
/// ||g(t)|k1 - I||_F for t = 0..steps (steps + 1 values).
std::vector<double> flow_sandbox(const FlowSandboxOptions& options,
                                 const TranslationSpec& spec);

// --- finite-difference curvature oracle --------------------------------------

/// Symmetric 2x2 metric sampled on a regular grid; sample (i, j) sits at
/// coordinates (origin_x + i h, origin_y + j h).
struct MetricField {
  int nx = 0;
  int ny = 0;
  double spacing = 0.0;
  double origin_x = 0.0;
  double origin_y = 0.0;
  std::vector<Eigen::Matrix2d> samples;  ///< row-major in (i, j)

  const Eigen::Matrix2d& at(int i, int j) const { return samples[i * ny + j]; }
  Eigen::Matrix2d& at(int i, int j) { return samples[i * ny + j]; }
};

struct RicciField {
  int nx = 0;      ///< interior extent (field nx - 4)
  int ny = 0;
  int offset = 2;  ///< grid index of the first interior sample
  std::vector<Eigen::Matrix2d> values;

  const Eigen::Matrix2d& at(int i, int j) const { return values[i * ny + j]; }
};

/// Christoffel symbols and Ricci tensor by nested central differences; second
/// order in the spacing.
RicciField ricci_oracle(const MetricField& field);

}  // namespace rfdn::ricci
