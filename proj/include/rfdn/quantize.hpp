#pragma once

// Discretization functions, the straight-through clip mask, and the
// tanh-reweighting (DoReFa) weight transform.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace rfdn::quantize {

enum class QuantMode {
  BinaryMeanScale,  ///< mean(|x|) * sign(x)
  FixedPointGrid,   ///< clip(round(L x) / L, -1, 1) with L = 2^(k-1) - 1
};

struct QuantScheme {
  int bits = 1;
  QuantMode mode = QuantMode::BinaryMeanScale;

  /// The only valid scheme for a bit-width: 1 bit is binary, k > 1 is a grid.
  static QuantScheme for_bits(int bits);

  /// Number of distinct output values (2 for binary).
  int levels() const;
  /// Grid points of the fixed-point grid, ascending; {-1, +1} for binary
  /// (to be multiplied by the per-tensor mean).
  std::vector<double> grid() const;
  std::string describe() const;
  void validate() const;
};

/// sign with sign(0) = +1.
inline double sign_pos(double x) noexcept { return x >= 0.0 ? 1.0 : -1.0; }

/// Rounding with ties away from zero.
inline double round_half_away(double x) noexcept { return std::round(x); }

std::vector<double> quantize_1bit(std::span<const double> x);
void quantize_1bit(std::span<const double> x, std::span<double> out);

double quantize_kbit(double x, int k);
std::vector<double> quantize_kbit(std::span<const double> x, int k);
void quantize_kbit(std::span<const double> x, int k, std::span<double> out);

/// Dispatches on the scheme.
void apply(const QuantScheme& scheme, std::span<const double> x,
           std::span<double> out);
std::vector<double> apply(const QuantScheme& scheme, std::span<const double> x);

struct SteMask {
  std::vector<std::uint8_t> mask;  ///< 1 where |x| <= 1

  std::size_t size() const noexcept { return mask.size(); }
  std::size_t zeros() const noexcept;
};

SteMask ste_mask(std::span<const double> x);

struct DorefaTransform {
  std::vector<double> w_tilde;        ///< tanh(w) / max |tanh(w)|
  std::vector<double> jacobian_diag;  ///< (1 - tanh^2(w)) / max |tanh(w)|
};

/// Throws DegenerateInputError when every entry is zero.
DorefaTransform dorefa_transform(std::span<const double> w);

}  // namespace rfdn::quantize
