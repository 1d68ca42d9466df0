#include "rfdn/quantize.hpp"

#include "rfdn/error.hpp"

#include <algorithm>
#include <cmath>

namespace rfdn::quantize {

QuantScheme QuantScheme::for_bits(int bits) {
  if (bits < 1) throw ArgumentError("bit-width must be >= 1");
  return QuantScheme{bits, bits == 1 ? QuantMode::BinaryMeanScale
                                     : QuantMode::FixedPointGrid};
}

void QuantScheme::validate() const {
  if (bits < 1) throw ArgumentError("bit-width must be >= 1");
  if ((bits == 1) != (mode == QuantMode::BinaryMeanScale)) {
    throw ArgumentError("binary mode is used exactly when bits == 1");
  }
  if (bits > 30) throw ArgumentError("bit-width above 30 is not supported");
}

int QuantScheme::levels() const {
  validate();
  if (bits == 1) return 2;
  return 2 * ((1 << (bits - 1)) - 1) + 1;
}

std::vector<double> QuantScheme::grid() const {
  validate();
  if (bits == 1) return {-1.0, 1.0};
  const int half = (1 << (bits - 1)) - 1;
  std::vector<double> out;
  out.reserve(2 * half + 1);
  for (int m = -half; m <= half; ++m) {
    out.push_back(static_cast<double>(m) / half);
  }
  return out;
}

std::string QuantScheme::describe() const {
  return std::to_string(bits) + "-bit " +
         (mode == QuantMode::BinaryMeanScale ? "binary-mean-scale"
                                             : "fixed-point-grid");
}

void quantize_1bit(std::span<const double> x, std::span<double> out) {
  if (x.empty()) throw ShapeError("quantize_1bit: empty tensor");
  if (out.size() != x.size()) throw ShapeError("quantize_1bit: output size");
  double mean_abs = 0.0;
  for (double v : x) mean_abs += std::abs(v);
  mean_abs /= static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = mean_abs * sign_pos(x[i]);
}

std::vector<double> quantize_1bit(std::span<const double> x) {
  std::vector<double> out(x.size());
  quantize_1bit(x, out);
  return out;
}

double quantize_kbit(double x, int k) {
  if (k < 2) throw ArgumentError("quantize_kbit: k must be >= 2");
  const double levels = static_cast<double>((1 << (k - 1)) - 1);
  const double q = round_half_away(levels * x) / levels;
  return std::clamp(q, -1.0, 1.0);
}

void quantize_kbit(std::span<const double> x, int k, std::span<double> out) {
  if (k < 2) throw ArgumentError("quantize_kbit: k must be >= 2");
  if (out.size() != x.size()) throw ShapeError("quantize_kbit: output size");
  const double levels = static_cast<double>((1 << (k - 1)) - 1);
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::clamp(round_half_away(levels * x[i]) / levels, -1.0, 1.0);
  }
}

std::vector<double> quantize_kbit(std::span<const double> x, int k) {
  std::vector<double> out(x.size());
  quantize_kbit(x, k, out);
  return out;
}

void apply(const QuantScheme& scheme, std::span<const double> x,
           std::span<double> out) {
  if (scheme.mode == QuantMode::BinaryMeanScale) {
    quantize_1bit(x, out);
  } else {
    quantize_kbit(x, scheme.bits, out);
  }
}

std::vector<double> apply(const QuantScheme& scheme, std::span<const double> x) {
  std::vector<double> out(x.size());
  apply(scheme, x, out);
  return out;
}

std::size_t SteMask::zeros() const noexcept {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 0));
}

SteMask ste_mask(std::span<const double> x) {
  SteMask m;
  m.mask.resize(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    m.mask[i] = std::abs(x[i]) <= 1.0 ? 1 : 0;
  }
  return m;
}

DorefaTransform dorefa_transform(std::span<const double> w) {
  double max_abs = 0.0;
  for (double v : w) max_abs = std::max(max_abs, std::abs(std::tanh(v)));
  if (!(max_abs > 0.0)) {
    throw DegenerateInputError("dorefa_transform: all-zero weight tensor");
  }
  DorefaTransform out;
  out.w_tilde.resize(w.size());
  out.jacobian_diag.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double t = std::tanh(w[i]);
    out.w_tilde[i] = t / max_abs;
    const double c = std::cosh(w[i]);
    out.jacobian_diag[i] = 1.0 / (c * c) / max_abs;
  }
  return out;
}

}  // namespace rfdn::quantize
