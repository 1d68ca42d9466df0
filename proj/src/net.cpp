#include "rfdn/net.hpp"

#include "rfdn/error.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace rfdn::net {

std::string to_string(Nonlinearity f) {
  return f == Nonlinearity::HardTanh ? "hard-tanh" : "relu";
}

Nonlinearity parse_nonlinearity(const std::string& s) {
  if (s == "hard-tanh") return Nonlinearity::HardTanh;
  if (s == "relu") return Nonlinearity::Relu;
  throw ArgumentError("unknown nonlinearity '" + s + "'");
}

std::string to_string(WeightTransform t) {
  return t == WeightTransform::Identity ? "identity" : "dorefa";
}

WeightTransform parse_transform(const std::string& s) {
  if (s == "identity") return WeightTransform::Identity;
  if (s == "dorefa") return WeightTransform::Dorefa;
  throw ArgumentError("unknown weight transform '" + s + "'");
}

Network::Network(std::vector<DenseLayer> layers, Nonlinearity f,
                 std::optional<quantize::QuantScheme> quant,
                 WeightTransform transform)
    : layers_(std::move(layers)), f_(f), quant_(quant), transform_(transform) {
  validate();
}

void Network::validate() const {
  if (layers_.empty()) throw ShapeError("network needs at least one layer");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.weights.size() == 0) throw ShapeError("empty layer");
    if (!l.weights.allFinite()) {
      throw DomainError("layer " + std::to_string(i) + " has non-finite weights");
    }
    if (!(l.scale > 0.0) || !(l.tau > 0.0)) {
      throw DomainError("layer " + std::to_string(i) + ": scale and tau must be > 0");
    }
    if (i > 0 && layers_[i - 1].weights.rows() != l.weights.cols()) {
      throw ShapeError("layer " + std::to_string(i) +
                       ": input width does not match the previous layer");
    }
  }
  if (quant_) quant_->validate();
}

Network Network::initialize(std::span<const int> widths, Nonlinearity f,
                            std::optional<quantize::QuantScheme> quant,
                            std::uint64_t seed, double tau_c) {
  if (widths.size() < 2) throw ShapeError("need at least input and output widths");
  std::mt19937_64 rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const int in = widths[i];
    const int out = widths[i + 1];
    if (in < 1 || out < 1) throw ShapeError("layer widths must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> uni(-bound, bound);
    DenseLayer layer;
    layer.weights.resize(out, in);
    // Row-major fill so the draw order matches the checkpoint layout.
    for (int r = 0; r < out; ++r)
      for (int c = 0; c < in; ++c) layer.weights(r, c) = uni(rng);
    layer.scale = bound;
    layer.tau = tau_c / std::sqrt(static_cast<double>(in) * out);
    layers.push_back(std::move(layer));
  }
  return Network(std::move(layers), f, quant);
}

int Network::input_dim() const {
  return static_cast<int>(layers_.front().weights.cols());
}

int Network::output_dim() const {
  return static_cast<int>(layers_.back().weights.rows());
}

std::size_t Network::num_weights() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.size();
  return n;
}

void Network::set_transform(WeightTransform t) noexcept {
  transform_ = t;
  ++version_;
}

void Network::set_tau(std::size_t i, double tau) {
  if (!(tau > 0.0)) throw DomainError("tau must be positive");
  layers_.at(i).tau = tau;
}

Eigen::MatrixXd& Network::mutable_weights(std::size_t i) {
  ++version_;
  return layers_.at(i).weights;
}

namespace {

std::span<const double> view(const Eigen::MatrixXd& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

std::span<double> view(Eigen::MatrixXd& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

void apply_nonlinearity(Nonlinearity f, const Eigen::MatrixXd& s,
                        Eigen::MatrixXd& a) {
  if (f == Nonlinearity::HardTanh) {
    a = s.cwiseMax(-1.0).cwiseMin(1.0);
  } else {
    a = s.cwiseMax(0.0);
  }
}

/// Multiplies `d` in place by f'(s).
void apply_nonlinearity_grad(Nonlinearity f, const Eigen::MatrixXd& s,
                             Eigen::MatrixXd& d) {
  if (f == Nonlinearity::HardTanh) {
    d = (s.array().abs() <= 1.0).select(d, 0.0);
  } else {
    d = (s.array() > 0.0).select(d, 0.0);
  }
}

void quantize_activations(const quantize::QuantScheme& q,
                          const Eigen::MatrixXd& a, Eigen::MatrixXd& out) {
  out.resize(a.rows(), a.cols());
  if (q.mode == quantize::QuantMode::BinaryMeanScale) {
    // One scale per sample.
    for (Eigen::Index c = 0; c < a.cols(); ++c) {
      quantize::quantize_1bit(
          std::span<const double>(a.col(c).data(), static_cast<std::size_t>(a.rows())),
          std::span<double>(out.col(c).data(), static_cast<std::size_t>(a.rows())));
    }
  } else {
    quantize::quantize_kbit(view(a), q.bits, view(out));
  }
}

void check_finite(const Eigen::MatrixXd& m, std::size_t layer, const char* what) {
  if (!m.allFinite()) {
    throw NumericError("non-finite " + std::string(what) + " in layer " +
                       std::to_string(layer));
  }
}

}  // namespace

ForwardCache forward(const Network& net, const Eigen::MatrixXd& input,
                     bool quantized) {
  if (input.rows() != net.input_dim()) {
    throw ShapeError("forward: input has " + std::to_string(input.rows()) +
                     " features, network expects " +
                     std::to_string(net.input_dim()));
  }
  if (quantized && !net.quant()) {
    throw ArgumentError("forward: quantized pass on a network without a scheme");
  }
  ForwardCache cache;
  cache.input = input;
  cache.quantized = quantized;
  cache.version = net.version();
  cache.layers.resize(net.num_layers());

  const Eigen::MatrixXd* prev = &cache.input;
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const DenseLayer& layer = net.layer(i);
    LayerCache& lc = cache.layers[i];

    if (net.transform() == WeightTransform::Dorefa) {
      const auto t = quantize::dorefa_transform(view(layer.weights));
      lc.weights_eff = Eigen::Map<const Eigen::MatrixXd>(
          t.w_tilde.data(), layer.weights.rows(), layer.weights.cols());
      lc.transform_jacobian = Eigen::Map<const Eigen::MatrixXd>(
          t.jacobian_diag.data(), layer.weights.rows(), layer.weights.cols());
    } else {
      lc.weights_eff = layer.weights;
    }
    if (quantized) {
      Eigen::MatrixXd q(lc.weights_eff.rows(), lc.weights_eff.cols());
      quantize::apply(*net.quant(), view(lc.weights_eff), view(q));
      lc.weights_eff = std::move(q);
    }

    lc.pre.noalias() = lc.weights_eff * *prev;
    lc.pre *= layer.scale;
    check_finite(lc.pre, i, "pre-activation");

    if (i + 1 == net.num_layers()) {
      lc.act = lc.pre;
      lc.act_q = lc.pre;
    } else {
      apply_nonlinearity(net.nonlinearity(), lc.pre, lc.act);
      if (quantized) {
        quantize_activations(*net.quant(), lc.act, lc.act_q);
      } else {
        lc.act_q = lc.act;
      }
    }
    prev = &lc.act_q;
  }
  return cache;
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double mx = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - mx).exp().matrix();
  return e / e.sum();
}

LossResult nll_softmax_loss(const Eigen::VectorXd& logits, int target) {
  if (target < 0 || target >= logits.size()) {
    throw ArgumentError("nll_softmax_loss: target " + std::to_string(target) +
                        " out of range");
  }
  if (!logits.allFinite()) throw NumericError("nll_softmax_loss: non-finite logits");
  const double mx = logits.maxCoeff();
  const double lse = mx + std::log((logits.array() - mx).exp().sum());
  LossResult r;
  r.loss = lse - logits(target);
  r.dlogits = (logits.array() - lse).exp().matrix();
  r.dlogits(target) -= 1.0;
  return r;
}

BatchLoss nll_softmax_batch(const Eigen::MatrixXd& logits,
                            std::span<const int> targets) {
  if (static_cast<std::size_t>(logits.cols()) != targets.size() ||
      targets.empty()) {
    throw ShapeError("nll_softmax_batch: one target per column required");
  }
  BatchLoss out;
  out.dlogits.resize(logits.rows(), logits.cols());
  const double inv = 1.0 / static_cast<double>(targets.size());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const LossResult r = nll_softmax_loss(logits.col(c), targets[c]);
    out.mean_loss += r.loss;
    out.dlogits.col(c) = r.dlogits * inv;
  }
  out.mean_loss *= inv;
  return out;
}

Gradients backward(const Network& net, const ForwardCache& cache,
                   const Eigen::MatrixXd& dlogits, Backend backend) {
  if (cache.version != net.version() || cache.layers.size() != net.num_layers()) {
    throw StateError("backward: forward cache is stale");
  }
  if (backend == Backend::Plain &&
      (cache.quantized || net.transform() != WeightTransform::Identity)) {
    throw StateError("backward: plain backend needs a full-precision forward");
  }
  const std::size_t L = net.num_layers();
  if (dlogits.rows() != cache.logits().rows() ||
      dlogits.cols() != cache.logits().cols()) {
    throw ShapeError("backward: dlogits shape does not match the logits");
  }

  Gradients g;
  g.effective.resize(L);
  g.weight.resize(L);
  Eigen::MatrixXd d_pre = dlogits;  // dL/ds_L
  for (std::size_t i = L; i-- > 0;) {
    const DenseLayer& layer = net.layer(i);
    const LayerCache& lc = cache.layers[i];
    const Eigen::MatrixXd& in = i == 0 ? cache.input : cache.layers[i - 1].act_q;

    g.effective[i].noalias() = d_pre * in.transpose();
    g.effective[i] *= layer.scale;

    if (backend == Backend::Plain) {
      g.weight[i] = g.effective[i];
    } else if (net.transform() == WeightTransform::Dorefa) {
      g.weight[i] = g.effective[i].cwiseProduct(lc.transform_jacobian);
    } else {
      g.weight[i] =
          (layer.weights.array().abs() <= 1.0).select(g.effective[i], 0.0);
    }

    if (i == 0) break;
    Eigen::MatrixXd d_act;
    d_act.noalias() = lc.weights_eff.transpose() * d_pre;
    d_act *= layer.scale;
    const LayerCache& below = cache.layers[i - 1];
    if (backend == Backend::Ste) {
      d_act = (below.act.array().abs() <= 1.0).select(d_act, 0.0);
    }
    apply_nonlinearity_grad(net.nonlinearity(), below.pre, d_act);
    d_pre = std::move(d_act);
  }
  return g;
}

std::vector<int> predict(const Network& net, const Eigen::MatrixXd& input) {
  const ForwardCache cache = forward(net, input, net.quant().has_value());
  const Eigen::MatrixXd& logits = cache.logits();
  std::vector<int> out(static_cast<std::size_t>(logits.cols()));
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    Eigen::Index best = 0;
    for (Eigen::Index r = 1; r < logits.rows(); ++r) {
      if (logits(r, c) > logits(best, c)) best = r;
    }
    out[c] = static_cast<int>(best);
  }
  return out;
}

}  // namespace rfdn::net
