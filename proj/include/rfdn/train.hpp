#pragma once

// The training loop: translated lookahead snapshots, the curvature
// regularizer, backend-specific gradient corrections, the RF mask, momentum
// SGD, per-epoch metrics and checkpoints.

#include "rfdn/data.hpp"
#include "rfdn/net.hpp"
#include "rfdn/ricci.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace rfdn::train {

enum class TrainBackend { Ste, Dorefa, RfWeak, RfExact };
enum class RegMode { Monitor, Grad };

std::string to_string(TrainBackend b);
TrainBackend parse_backend(const std::string& s);
std::string to_string(RegMode m);
RegMode parse_reg_mode(const std::string& s);

struct TrainConfig {
  TrainBackend backend = TrainBackend::Ste;
  /// Metric constant for every layer; 0 selects 1/sqrt(#weights) per layer.
  double tau = 0.0;
  double alpha = 0.0;
  double beta = 1e-6;
  double lr = 0.01;
  double momentum = 0.9;
  bool nesterov = false;
  /// lr is multiplied by lr_decay every lr_decay_every epochs (0 = never).
  double lr_decay = 1.0;
  int lr_decay_every = 0;
  int epochs = 10;
  int batch_size = 64;
  /// 0 trains in full precision.
  int bits = 1;
  std::vector<int> hidden = {128};
  net::Nonlinearity nonlinearity = net::Nonlinearity::HardTanh;
  ricci::TranslationSpec translations;
  RegMode reg_mode = RegMode::Monitor;
  std::uint64_t seed = 0;
  bool record_wall_time = false;

  void validate() const;
  /// Sets one field from its text form; returns false for an unknown key and
  /// throws ArgumentError for a bad value.
  bool set(const std::string& key, const std::string& value);
  /// Canonical "key = value" listing of every field, sorted by key.
  std::string serialize() const;
  /// FNV-1a 64 of serialize(), as 16 hex digits.
  std::string hash() const;

  bool uses_lookahead() const;
};

/// Flat "key = value" file with '#' comments. Keys keep their file order;
/// a repeated key keeps its last value.
std::vector<std::pair<std::string, std::string>> read_key_values(
    const std::filesystem::path& path);

std::string fnv1a_hex(const std::string& text);

/// Translated copies of a batch, ordered (k1, k2, j1, j2). k-offsets shift
/// rows (dy), j-offsets shift columns (dx).
std::array<Eigen::MatrixXd, 4> shifted_batches(const Eigen::MatrixXd& batch,
                                               int height, int width,
                                               const ricci::TranslationSpec& spec);

/// Factors tanh(tau (xi - eta grad_m)) for the four translated batches.
/// `k1_grads` reuses the gradient of an already-computed k1 pass.
ricci::MetricSnapshot lookahead_factors(
    const net::Network& net, const std::array<Eigen::MatrixXd, 4>& shifted,
    std::span<const int> labels, double eta,
    const std::vector<Eigen::MatrixXd>* k1_grads = nullptr);

/// dN/dxi for one layer, holding the lookahead displacements fixed: only the
/// k1 factor tanh(tau (xi + const)) depends on xi.
std::vector<double> reg_gradient(const ricci::LayerFactors& factors,
                                 const ricci::TranslationSpec& spec, double tau);

struct TrainState {
  std::vector<Eigen::MatrixXd> velocity;
  std::optional<ricci::MetricSnapshot> previous;
  std::int64_t step = 0;
};

struct StepMetrics {
  double task_loss = 0.0;
  double reg_n = 0.0;
  bool has_reg_n = false;
  int dominance_violations = 0;
  std::size_t mask_zeros = 0;
  std::size_t mask_size = 0;
};

/// Builds the network described by the config (widths from the dataset) with
/// the backend's weight transform and the configured tau.
net::Network make_network(const TrainConfig& cfg, int input_dim, int num_classes);

/// One iteration of the training algorithm on a batch of columns.
StepMetrics train_step(net::Network& net, const Eigen::MatrixXd& batch,
                       std::span<const int> labels, int height, int width,
                       const TrainConfig& cfg, double lr, TrainState& state);

/// Fraction of correct argmax predictions; throws ArgumentError when empty.
double evaluate(const net::Network& net, const data::Dataset& ds);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double test_acc = 0.0;
  double reg_n = 0.0;
  long dominance_violations = 0;
  double rf_mask_zero_frac = 0.0;
  double wall_ms = 0.0;
};

struct RunMetrics {
  std::uint64_t seed = 0;
  std::vector<EpochMetrics> epochs;
  double wall_ms = 0.0;
  /// Mean and population std of the last (up to) 10 test accuracies.
  double last10_mean = 0.0;
  double last10_std = 0.0;
};

std::string to_jsonl(const EpochMetrics& m);

struct RunOutputs {
  std::filesystem::path metrics;     ///< JSONL; empty to skip
  std::filesystem::path checkpoint;  ///< RFDN; empty to skip
};

RunMetrics train_run(net::Network& net, const data::Dataset& train,
                     const data::Dataset& test, const TrainConfig& cfg,
                     const RunOutputs& outputs = {});

}  // namespace rfdn::train
