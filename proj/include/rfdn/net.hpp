#pragma once

// Dense feed-forward network with a quantized forward path, hand-written
// reverse mode, and the softmax negative log-likelihood.
//
// Batches are column-major matrices: one column per sample.

#include "rfdn/quantize.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rfdn::net {

enum class Nonlinearity { HardTanh, Relu };
enum class WeightTransform { Identity, Dorefa };

std::string to_string(Nonlinearity f);
Nonlinearity parse_nonlinearity(const std::string& s);
std::string to_string(WeightTransform t);
WeightTransform parse_transform(const std::string& s);

struct DenseLayer {
  Eigen::MatrixXd weights;  ///< out x in
  double tau = 1.0;         ///< metric constant of this layer
  double scale = 1.0;       ///< frozen normalization multiplier

  std::size_t size() const noexcept {
    return static_cast<std::size_t>(weights.size());
  }
};

class Network {
 public:
  Network() = default;
  Network(std::vector<DenseLayer> layers, Nonlinearity f,
          std::optional<quantize::QuantScheme> quant,
          WeightTransform transform = WeightTransform::Identity);

  /// Uniform weights in +-1/sqrt(fan_in), scale 1/sqrt(fan_in) and
  /// tau = tau_c / sqrt(#weights) per layer.
  static Network initialize(std::span<const int> widths, Nonlinearity f,
                            std::optional<quantize::QuantScheme> quant,
                            std::uint64_t seed, double tau_c = 1.0);

  std::size_t num_layers() const noexcept { return layers_.size(); }
  const DenseLayer& layer(std::size_t i) const { return layers_.at(i); }
  int input_dim() const;
  int output_dim() const;
  std::size_t num_weights() const;

  Nonlinearity nonlinearity() const noexcept { return f_; }
  const std::optional<quantize::QuantScheme>& quant() const noexcept {
    return quant_;
  }
  WeightTransform transform() const noexcept { return transform_; }
  void set_transform(WeightTransform t) noexcept;
  void set_tau(std::size_t i, double tau);

  /// Mutable access bumps the version, which invalidates forward caches.
  Eigen::MatrixXd& mutable_weights(std::size_t i);
  std::uint64_t version() const noexcept { return version_; }

 private:
  void validate() const;

  std::vector<DenseLayer> layers_;
  Nonlinearity f_ = Nonlinearity::HardTanh;
  std::optional<quantize::QuantScheme> quant_;
  WeightTransform transform_ = WeightTransform::Identity;
  std::uint64_t version_ = 0;
};

struct LayerCache {
  Eigen::MatrixXd weights_eff;  ///< Q(T(W)) or T(W)
  Eigen::MatrixXd transform_jacobian;  ///< dT/dW diagonal (DoReFa only)
  Eigen::MatrixXd pre;          ///< s_i
  Eigen::MatrixXd act;          ///< a_i = f(s_i); logits on the last layer
  Eigen::MatrixXd act_q;        ///< Q(a_i), what the next layer consumes
};

struct ForwardCache {
  Eigen::MatrixXd input;
  std::vector<LayerCache> layers;
  bool quantized = false;
  std::uint64_t version = 0;

  const Eigen::MatrixXd& logits() const { return layers.back().act; }
};

/// s_i = scale_i W_eff,i a^_{i-1}; a_i = f(s_i), a^_i = Q(a_i) on hidden layers.
/// The last layer is linear and unquantized (its output is the logit vector);
/// the input is used as given.
ForwardCache forward(const Network& net, const Eigen::MatrixXd& input,
                     bool quantized);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

struct LossResult {
  double loss = 0.0;
  Eigen::VectorXd dlogits;
};

LossResult nll_softmax_loss(const Eigen::VectorXd& logits, int target);

struct BatchLoss {
  double mean_loss = 0.0;
  Eigen::MatrixXd dlogits;  ///< gradient of the mean loss
};

BatchLoss nll_softmax_batch(const Eigen::MatrixXd& logits,
                            std::span<const int> targets);

enum class Backend { Plain, Ste };

struct Gradients {
  /// dL / d(effective weights), i.e. the gradient w.r.t. Q(W).
  std::vector<Eigen::MatrixXd> effective;
  /// Gradient w.r.t. the latent weights W under the backend rule.
  std::vector<Eigen::MatrixXd> weight;
};

/// Plain: exact reverse mode of a full-precision forward. Ste: identity
/// pass-through of the quantizers, the |a| <= 1 activation clip, and the
/// |W| <= 1 weight mask (or the DoReFa Jacobian when that transform is set).
Gradients backward(const Network& net, const ForwardCache& cache,
                   const Eigen::MatrixXd& dlogits, Backend backend);

/// Argmax per column, ties toward the lowest index.
std::vector<int> predict(const Network& net, const Eigen::MatrixXd& input);

// --- checkpoints ---------------------------------------------------------------

inline constexpr char kCheckpointMagic[4] = {'R', 'F', 'D', 'N'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

/// Binary weights plus a "<path>.manifest" text sidecar.
void save_checkpoint(const Network& net, const std::filesystem::path& path,
                     const std::string& config_hash);
Network load_checkpoint(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);

}  // namespace rfdn::net
