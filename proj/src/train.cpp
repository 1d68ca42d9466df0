#include "rfdn/train.hpp"

#include "rfdn/error.hpp"
#include "rfdn/geometry.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace rfdn::train {

std::string to_string(TrainBackend b) {
  switch (b) {
    case TrainBackend::Ste: return "ste";
    case TrainBackend::Dorefa: return "dorefa";
    case TrainBackend::RfWeak: return "rf-weak";
    case TrainBackend::RfExact: return "rf-exact";
  }
  return "?";
}

TrainBackend parse_backend(const std::string& s) {
  if (s == "ste") return TrainBackend::Ste;
  if (s == "dorefa") return TrainBackend::Dorefa;
  if (s == "rf-weak") return TrainBackend::RfWeak;
  if (s == "rf-exact") return TrainBackend::RfExact;
  throw ArgumentError("unknown backend '" + s + "'");
}

std::string to_string(RegMode m) { return m == RegMode::Monitor ? "monitor" : "grad"; }

RegMode parse_reg_mode(const std::string& s) {
  if (s == "monitor") return RegMode::Monitor;
  if (s == "grad") return RegMode::Grad;
  throw ArgumentError("unknown reg_mode '" + s + "'");
}

// --- config ------------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* first = value.data();
  const char* last = value.data() + value.size();
  const auto [p, ec] = std::from_chars(first, last, out);
  if (ec != std::errc{} || p != last) {
    throw ArgumentError("bad value '" + value + "' for '" + key + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ArgumentError("bad value '" + value + "' for '" + key + "' (true/false)");
}

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ArgumentError("lr must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("momentum must be in [0, 1)");
  if (!(alpha >= 0.0)) throw ArgumentError("alpha must be >= 0");
  if (!(beta > 0.0)) throw ArgumentError("beta must be > 0");
  if (!(tau >= 0.0) || !std::isfinite(tau)) throw ArgumentError("tau must be finite and >= 0");
  if (!(lr_decay > 0.0)) throw ArgumentError("lr_decay must be > 0");
  if (lr_decay_every < 0) throw ArgumentError("lr_decay_every must be >= 0");
  if (epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (bits < 0 || bits > 30) throw ArgumentError("bits must be in [0, 30]");
  for (int h : hidden) {
    if (h < 1) throw ArgumentError("hidden widths must be positive");
  }
  translations.validate();
}

bool TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "backend") backend = parse_backend(value);
  else if (key == "tau") tau = value == "auto" ? 0.0 : parse_number<double>(key, value);
  else if (key == "alpha") alpha = parse_number<double>(key, value);
  else if (key == "beta") beta = parse_number<double>(key, value);
  else if (key == "lr") lr = parse_number<double>(key, value);
  else if (key == "momentum") momentum = parse_number<double>(key, value);
  else if (key == "nesterov") nesterov = parse_bool(key, value);
  else if (key == "lr_decay") lr_decay = parse_number<double>(key, value);
  else if (key == "lr_decay_every") lr_decay_every = parse_number<int>(key, value);
  else if (key == "epochs") epochs = parse_number<int>(key, value);
  else if (key == "batch_size") batch_size = parse_number<int>(key, value);
  else if (key == "bits") bits = parse_number<int>(key, value);
  else if (key == "hidden") {
    hidden.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) hidden.push_back(parse_number<int>(key, item));
    }
  } else if (key == "nonlinearity") nonlinearity = net::parse_nonlinearity(value);
  else if (key == "k1") translations.k1 = parse_number<int>(key, value);
  else if (key == "k2") translations.k2 = parse_number<int>(key, value);
  else if (key == "j1") translations.j1 = parse_number<int>(key, value);
  else if (key == "j2") translations.j2 = parse_number<int>(key, value);
  else if (key == "reg_mode") reg_mode = parse_reg_mode(value);
  else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
  else if (key == "record_wall_time") record_wall_time = parse_bool(key, value);
  else return false;
  return true;
}

std::string TrainConfig::serialize() const {
  std::map<std::string, std::string> kv;
  kv["backend"] = to_string(backend);
  kv["tau"] = tau == 0.0 ? "auto" : num(tau);
  kv["alpha"] = num(alpha);
  kv["beta"] = num(beta);
  kv["lr"] = num(lr);
  kv["momentum"] = num(momentum);
  kv["nesterov"] = nesterov ? "true" : "false";
  kv["lr_decay"] = num(lr_decay);
  kv["lr_decay_every"] = std::to_string(lr_decay_every);
  kv["epochs"] = std::to_string(epochs);
  kv["batch_size"] = std::to_string(batch_size);
  kv["bits"] = std::to_string(bits);
  std::string h;
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    if (i) h += ',';
    h += std::to_string(hidden[i]);
  }
  kv["hidden"] = h;
  kv["nonlinearity"] = net::to_string(nonlinearity);
  kv["k1"] = std::to_string(translations.k1);
  kv["k2"] = std::to_string(translations.k2);
  kv["j1"] = std::to_string(translations.j1);
  kv["j2"] = std::to_string(translations.j2);
  kv["reg_mode"] = to_string(reg_mode);
  kv["seed"] = std::to_string(seed);
  kv["record_wall_time"] = record_wall_time ? "true" : "false";
  std::string out;
  for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  return out;
}

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string TrainConfig::hash() const { return fnv1a_hex(serialize()); }

bool TrainConfig::uses_lookahead() const {
  return backend == TrainBackend::RfWeak || backend == TrainBackend::RfExact ||
         alpha > 0.0;
}

std::vector<std::pair<std::string, std::string>> read_key_values(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path.string() + "'");
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::uint64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) +
                            ": expected 'key = value'",
                        lineno);
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": empty key",
                        lineno);
    }
    auto it = std::find_if(out.begin(), out.end(),
                           [&](const auto& kv) { return kv.first == key; });
    if (it != out.end()) it->second = value;
    else out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

// --- lookahead and regularizer gradient ----------------------------------------

std::array<Eigen::MatrixXd, 4> shifted_batches(const Eigen::MatrixXd& batch,
                                               int height, int width,
                                               const ricci::TranslationSpec& spec) {
  return {data::translate(batch, height, width, 0, spec.k1),
          data::translate(batch, height, width, 0, spec.k2),
          data::translate(batch, height, width, spec.j1, 0),
          data::translate(batch, height, width, spec.j2, 0)};
}

namespace {

net::Backend backward_rule(const net::Network& net) {
  return net.quant() || net.transform() != net::WeightTransform::Identity
             ? net::Backend::Ste
             : net::Backend::Plain;
}

std::vector<double> factor(const Eigen::MatrixXd& w, const Eigen::MatrixXd& g,
                           double eta, double tau) {
  std::vector<double> u(static_cast<std::size_t>(w.size()));
  const double* wp = w.data();
  const double* gp = g.data();
  for (std::size_t i = 0; i < u.size(); ++i) u[i] = std::tanh(tau * (wp[i] - eta * gp[i]));
  return u;
}

std::span<double> flat(Eigen::MatrixXd& m) {
  return {m.data(), static_cast<std::size_t>(m.size())};
}

}  // namespace

ricci::MetricSnapshot lookahead_factors(const net::Network& net,
                                        const std::array<Eigen::MatrixXd, 4>& shifted,
                                        std::span<const int> labels, double eta,
                                        const std::vector<Eigen::MatrixXd>* k1_grads) {
  if (labels.empty()) throw ArgumentError("lookahead_factors: empty batch");
  const bool quantized = net.quant().has_value();
  const net::Backend rule = backward_rule(net);

  ricci::MetricSnapshot snap;
  snap.layers.resize(net.num_layers());
  for (int m = 0; m < 4; ++m) {
    std::vector<Eigen::MatrixXd> grads;
    const std::vector<Eigen::MatrixXd>* use = nullptr;
    if (m == ricci::kK1 && k1_grads) {
      use = k1_grads;
    } else {
      const auto cache = net::forward(net, shifted[m], quantized);
      const auto loss = net::nll_softmax_batch(cache.logits(), labels);
      grads = net::backward(net, cache, loss.dlogits, rule).weight;
      use = &grads;
    }
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
      const auto& layer = net.layer(l);
      snap.layers[l].u[m] = factor(layer.weights, (*use)[l], eta, layer.tau);
    }
  }
  return snap;
}

std::vector<double> reg_gradient(const ricci::LayerFactors& factors,
                                 const ricci::TranslationSpec& spec, double tau) {
  const auto c = spec.coefficients();
  const Eigen::Matrix4d G = ricci::gram(factors);
  const std::size_t n = factors.dim();
  std::array<double, 4> w{};
  for (int m = 0; m < 4; ++m) w[m] = 4.0 * c[0] * c[m] * G(0, m);
  std::vector<double> out(n);
  const auto& u0 = factors.u[ricci::kK1];
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (int m = 0; m < 4; ++m) d += w[m] * factors.u[m][i];
    out[i] = d * tau * (1.0 - u0[i] * u0[i]);
  }
  return out;
}

// --- training step -------------------------------------------------------------

net::Network make_network(const TrainConfig& cfg, int input_dim, int num_classes) {
  cfg.validate();
  std::vector<int> widths{input_dim};
  widths.insert(widths.end(), cfg.hidden.begin(), cfg.hidden.end());
  widths.push_back(num_classes);
  std::optional<quantize::QuantScheme> quant;
  if (cfg.bits > 0) quant = quantize::QuantScheme::for_bits(cfg.bits);
  auto net = net::Network::initialize(widths, cfg.nonlinearity, quant, cfg.seed);
  if (cfg.tau > 0.0) {
    for (std::size_t l = 0; l < net.num_layers(); ++l) net.set_tau(l, cfg.tau);
  }
  if (cfg.backend == TrainBackend::Dorefa) net.set_transform(net::WeightTransform::Dorefa);
  return net;
}

StepMetrics train_step(net::Network& net, const Eigen::MatrixXd& batch,
                       std::span<const int> labels, int height, int width,
                       const TrainConfig& cfg, double lr, TrainState& state) {
  const auto shifted = shifted_batches(batch, height, width, cfg.translations);
  const bool quantized = net.quant().has_value();
  const std::size_t L = net.num_layers();

  const auto cache = net::forward(net, shifted[ricci::kK1], quantized);
  const auto loss = net::nll_softmax_batch(cache.logits(), labels);
  const auto grads = net::backward(net, cache, loss.dlogits, backward_rule(net));

  StepMetrics sm;
  sm.task_loss = loss.mean_loss;

  std::optional<ricci::MetricSnapshot> snap;
  if (cfg.uses_lookahead()) {
    snap = lookahead_factors(net, shifted, labels, lr, &grads.weight);
    snap->time_index = state.step;
    sm.reg_n = ricci::regularization_N(*snap, cfg.translations);
    sm.has_reg_n = true;
  }

  const bool rf = cfg.backend == TrainBackend::RfWeak ||
                  cfg.backend == TrainBackend::RfExact;
  std::vector<std::vector<std::uint8_t>> mask;
  if (rf && state.previous) {
    mask = ricci::rf_mask(*state.previous, *snap, cfg.translations, cfg.beta);
  }

  if (state.velocity.size() != L) {
    state.velocity.clear();
    for (std::size_t l = 0; l < L; ++l) {
      state.velocity.push_back(Eigen::MatrixXd::Zero(net.layer(l).weights.rows(),
                                                     net.layer(l).weights.cols()));
    }
  }

  for (std::size_t l = 0; l < L; ++l) {
    const auto& layer = net.layer(l);
    Eigen::MatrixXd g;
    if (rf) {
      g = grads.effective[l];
      const Eigen::MatrixXd u_mat = (layer.weights * layer.tau).array().tanh().matrix();
      const geometry::FactoredLneMetric metric(
          std::vector<double>(u_mat.data(), u_mat.data() + u_mat.size()), layer.tau);
      if (cfg.backend == TrainBackend::RfWeak) {
        if (!geometry::apply_weak_flow(metric, flat(g))) ++sm.dominance_violations;
      } else {
        if (!geometry::dominance_check(metric)) ++sm.dominance_violations;
        geometry::apply_exact_flow(metric, flat(g));
      }
      g = (layer.weights.array().abs() <= 1.0).select(g, 0.0);
      sm.mask_size += static_cast<std::size_t>(g.size());
      if (!mask.empty()) {
        double* gp = g.data();
        for (std::size_t i = 0; i < mask[l].size(); ++i) {
          if (!mask[l][i]) {
            gp[i] = 0.0;
            ++sm.mask_zeros;
          }
        }
      }
    } else {
      g = grads.weight[l];
    }

    if (cfg.reg_mode == RegMode::Grad && cfg.alpha > 0.0 && snap) {
      const auto rg = reg_gradient(snap->layers[l], cfg.translations, layer.tau);
      double* gp = g.data();
      for (std::size_t i = 0; i < rg.size(); ++i) gp[i] += cfg.alpha * rg[i];
    }

    Eigen::MatrixXd& v = state.velocity[l];
    v = cfg.momentum * v + g;
    Eigen::MatrixXd& w = net.mutable_weights(l);
    if (cfg.nesterov) {
      w -= lr * (g + cfg.momentum * v);
    } else {
      w -= lr * v;
    }
  }

  if (snap) state.previous = std::move(snap);
  ++state.step;
  return sm;
}

// --- evaluation and runs -----------------------------------------------------------

double evaluate(const net::Network& net, const data::Dataset& ds) {
  if (ds.size() == 0) throw ArgumentError("evaluate: empty dataset");
  constexpr Eigen::Index kChunk = 512;
  std::size_t correct = 0;
  const Eigen::Index n = ds.features.cols();
  for (Eigen::Index start = 0; start < n; start += kChunk) {
    const Eigen::Index len = std::min(kChunk, n - start);
    const auto pred = net::predict(net, ds.features.middleCols(start, len));
    for (Eigen::Index i = 0; i < len; ++i) {
      if (pred[static_cast<std::size_t>(i)] == ds.labels[static_cast<std::size_t>(start + i)])
        ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

std::string to_jsonl(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["train_loss"] = m.train_loss;
  j["test_acc"] = m.test_acc;
  j["reg_n"] = m.reg_n;
  j["dominance_violations"] = m.dominance_violations;
  j["rf_mask_zero_frac"] = m.rf_mask_zero_frac;
  j["wall_ms"] = m.wall_ms;
  return j.dump();
}

RunMetrics train_run(net::Network& net, const data::Dataset& train,
                     const data::Dataset& test, const TrainConfig& cfg,
                     const RunOutputs& outputs) {
  using Clock = std::chrono::steady_clock;
  cfg.validate();
  train.validate();
  if (test.size() == 0) throw ArgumentError("train_run: empty test split");
  if (train.dim() != net.input_dim() || test.dim() != net.input_dim()) {
    throw ShapeError("train_run: dataset features do not match the network input");
  }

  std::ofstream metrics;
  if (!outputs.metrics.empty()) {
    if (outputs.metrics.has_parent_path()) {
      std::error_code ec;
      std::filesystem::create_directories(outputs.metrics.parent_path(), ec);
    }
    metrics.open(outputs.metrics, std::ios::trunc);
    if (!metrics) throw IoError("cannot open metrics file '" + outputs.metrics.string() + "'");
  }

  const auto run_start = Clock::now();
  auto elapsed_ms = [&](Clock::time_point since) {
    if (!cfg.record_wall_time) return 0.0;
    return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
  };

  RunMetrics run;
  run.seed = cfg.seed;
  TrainState state;
  std::mt19937_64 rng(cfg.seed ^ 0x5eed5eed5eedull);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const std::size_t bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto epoch_start = Clock::now();
    double lr = cfg.lr;
    if (cfg.lr_decay_every > 0) lr *= std::pow(cfg.lr_decay, epoch / cfg.lr_decay_every);
    std::shuffle(order.begin(), order.end(), rng);

    double loss_sum = 0.0, n_sum = 0.0;
    long violations = 0;
    std::size_t zeros = 0, masked = 0;
    int n_reg = 0;
    std::size_t batches = 0;
    Eigen::MatrixXd batch;
    std::vector<int> labels;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t len = std::min(bs, order.size() - start);
      batch.resize(train.features.rows(), static_cast<Eigen::Index>(len));
      labels.resize(len);
      for (std::size_t i = 0; i < len; ++i) {
        batch.col(static_cast<Eigen::Index>(i)) =
            train.features.col(static_cast<Eigen::Index>(order[start + i]));
        labels[i] = train.labels[order[start + i]];
      }
      const StepMetrics sm =
          train_step(net, batch, labels, train.height, train.width, cfg, lr, state);
      loss_sum += sm.task_loss;
      ++batches;
      if (sm.has_reg_n) {
        n_sum += sm.reg_n;
        ++n_reg;
      }
      violations += sm.dominance_violations;
      zeros += sm.mask_zeros;
      masked += sm.mask_size;
    }

    EpochMetrics em;
    em.epoch = epoch + 1;
    em.train_loss = loss_sum / static_cast<double>(batches);
    em.test_acc = evaluate(net, test);
    em.reg_n = n_reg ? n_sum / n_reg : 0.0;
    em.dominance_violations = violations;
    em.rf_mask_zero_frac = masked ? static_cast<double>(zeros) / masked : 0.0;
    em.wall_ms = elapsed_ms(epoch_start);
    run.epochs.push_back(em);
    if (metrics.is_open()) {
      metrics << to_jsonl(em) << '\n';
      metrics.flush();
    }
  }

  if (!run.epochs.empty()) {
    const std::size_t k = std::min<std::size_t>(10, run.epochs.size());
    double mean = 0.0;
    for (std::size_t i = run.epochs.size() - k; i < run.epochs.size(); ++i)
      mean += run.epochs[i].test_acc;
    mean /= static_cast<double>(k);
    double var = 0.0;
    for (std::size_t i = run.epochs.size() - k; i < run.epochs.size(); ++i)
      var += (run.epochs[i].test_acc - mean) * (run.epochs[i].test_acc - mean);
    run.last10_mean = mean;
    run.last10_std = std::sqrt(var / static_cast<double>(k));
  }
  run.wall_ms = elapsed_ms(run_start);

  if (!outputs.checkpoint.empty()) {
    net::save_checkpoint(net, outputs.checkpoint, cfg.hash());
  }
  return run;
}

}  // namespace rfdn::train
