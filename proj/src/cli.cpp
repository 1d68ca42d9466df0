#include "rfdn/cli.hpp"

#include "rfdn/error.hpp"
#include "rfdn/geometry.hpp"
#include "rfdn/quantize.hpp"
#include "rfdn/ricci.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <random>

namespace rfdn::cli {

namespace {

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const auto [p, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc{} || p != value.data() + value.size()) {
    throw ArgumentError("bad value '" + value + "' for '" + key + "'");
  }
  return out;
}

}  // namespace

bool DataConfig::set(const std::string& key, const std::string& value) {
  if (key == "dataset") {
    if (value != "idx" && value != "csv" && value != "blobs" && value != "xor") {
      throw ArgumentError("unknown dataset '" + value + "' (idx, csv, blobs, xor)");
    }
    dataset = value;
  } else if (key == "train_images") train_images = value;
  else if (key == "train_labels") train_labels = value;
  else if (key == "test_images") test_images = value;
  else if (key == "test_labels") test_labels = value;
  else if (key == "train_csv") train_csv = value;
  else if (key == "test_csv") test_csv = value;
  else if (key == "train_limit") train_limit = parse_number<std::size_t>(key, value);
  else if (key == "test_limit") test_limit = parse_number<std::size_t>(key, value);
  else if (key == "synthetic_n") synthetic_n = parse_number<std::size_t>(key, value);
  else if (key == "synthetic_test_n") synthetic_test_n = parse_number<std::size_t>(key, value);
  else if (key == "synthetic_param") synthetic_param = parse_number<double>(key, value);
  else if (key == "data_seed") data_seed = parse_number<std::uint64_t>(key, value);
  else if (key == "out_dir") out_dir = value;
  else return false;
  return true;
}

RunFiles parse_run_config(const std::vector<std::pair<std::string, std::string>>& kv) {
  RunFiles rf;
  for (const auto& [key, value] : kv) {
    if (!rf.train.set(key, value) && !rf.data.set(key, value)) {
      throw ArgumentError("unknown config key '" + key + "'");
    }
  }
  return rf;
}

namespace {

data::Dataset head(const data::Dataset& ds, std::size_t limit) {
  if (limit == 0 || limit >= ds.size()) return ds;
  std::vector<std::size_t> idx(limit);
  for (std::size_t i = 0; i < limit; ++i) idx[i] = i;
  return ds.subset(idx);
}

}  // namespace

std::pair<data::Dataset, data::Dataset> load_datasets(const DataConfig& cfg) {
  data::Dataset train, test;
  if (cfg.dataset == "idx") {
    train = data::load_idx(cfg.train_images, cfg.train_labels, data::Split::Train);
    test = data::load_idx(cfg.test_images, cfg.test_labels, data::Split::Test);
    test.num_classes = train.num_classes = std::max(train.num_classes, test.num_classes);
    train = head(train, cfg.train_limit);
    test = head(test, cfg.test_limit);
    const auto stats = data::Standardizer::fit(train);
    stats.apply(train);
    stats.apply(test);
  } else if (cfg.dataset == "csv") {
    train = data::load_csv(cfg.train_csv, data::Split::Train);
    test = data::load_csv(cfg.test_csv, data::Split::Test);
    test.num_classes = train.num_classes = std::max(train.num_classes, test.num_classes);
    train = head(train, cfg.train_limit);
    test = head(test, cfg.test_limit);
  } else if (cfg.dataset == "blobs") {
    train = data::make_blobs(cfg.synthetic_n, cfg.synthetic_param, cfg.data_seed);
    test = data::make_blobs(cfg.synthetic_test_n, cfg.synthetic_param, cfg.data_seed + 1,
                            data::Split::Test);
  } else {
    train = data::make_xor(cfg.synthetic_n, cfg.synthetic_param, cfg.data_seed);
    test = data::make_xor(cfg.synthetic_test_n, cfg.synthetic_param, cfg.data_seed + 1,
                          data::Split::Test);
  }
  if (train.dim() != test.dim()) {
    throw ShapeError("train and test splits have different feature sizes");
  }
  return {std::move(train), std::move(test)};
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text,
                std::ostream& out) {
  if (path.empty()) {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << text;
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

// --- subcommands -------------------------------------------------------------

struct TrainArgs {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string out_dir;
};

int run_train(const TrainArgs& a, std::ostream& out) {
  auto kv = train::read_key_values(a.config);
  for (const auto& o : a.overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ArgumentError("--set expects key=value, got '" + o + "'");
    kv.emplace_back(o.substr(0, eq), o.substr(eq + 1));
  }
  if (a.seed) kv.emplace_back("seed", std::to_string(*a.seed));
  if (!a.out_dir.empty()) kv.emplace_back("out_dir", a.out_dir);
  const RunFiles rf = parse_run_config(kv);
  rf.train.validate();

  const auto [train_ds, test_ds] = load_datasets(rf.data);
  auto net = train::make_network(rf.train, train_ds.dim(), train_ds.num_classes);
  const train::RunOutputs outputs{rf.data.out_dir / "metrics.jsonl",
                                  rf.data.out_dir / "model.rfdn"};
  const auto run = train::train_run(net, train_ds, test_ds, rf.train, outputs);
  out << "backend " << train::to_string(rf.train.backend) << " seed " << rf.train.seed
      << " epochs " << run.epochs.size() << '\n';
  if (!run.epochs.empty()) {
    out << "final_test_acc " << num(run.epochs.back().test_acc) << '\n';
    out << "last10_mean " << num(run.last10_mean) << " last10_std "
        << num(run.last10_std) << '\n';
  }
  out << "metrics " << outputs.metrics.string() << '\n';
  out << "checkpoint " << outputs.checkpoint.string() << '\n';
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint;
  std::string config;
  std::string csv;
};

int run_eval(const EvalArgs& a, std::ostream& out) {
  const auto net = net::load_checkpoint(a.checkpoint);
  data::Dataset test;
  if (!a.csv.empty()) {
    test = data::load_csv(a.csv, data::Split::Test);
  } else if (!a.config.empty()) {
    const RunFiles rf = parse_run_config(train::read_key_values(a.config));
    test = load_datasets(rf.data).second;
  } else {
    throw ArgumentError("eval needs --config or --csv");
  }
  if (test.dim() != net.input_dim()) {
    throw ShapeError("dataset has " + std::to_string(test.dim()) +
                     " features, checkpoint expects " + std::to_string(net.input_dim()));
  }
  out << "accuracy " << num(train::evaluate(net, test)) << '\n';
  out << "samples " << test.size() << '\n';
  return kExitOk;
}

struct GeomArgs {
  int n = 16;
  int trials = 1000;
  double tau = 0.5;
  std::uint64_t seed = 0;
};

ricci::MetricField sphere_field(double radius, double spacing, int size) {
  ricci::MetricField f;
  f.nx = f.ny = size;
  f.spacing = spacing;
  f.origin_x = 1.0;  // polar angle, away from the coordinate singularity
  f.origin_y = 0.0;
  f.samples.resize(static_cast<std::size_t>(size) * size);
  for (int i = 0; i < size; ++i) {
    const double theta = f.origin_x + i * spacing;
    for (int j = 0; j < size; ++j) {
      Eigen::Matrix2d g = Eigen::Matrix2d::Zero();
      g(0, 0) = radius * radius;
      g(1, 1) = radius * radius * std::sin(theta) * std::sin(theta);
      f.at(i, j) = g;
    }
  }
  return f;
}

int run_geom_check(const GeomArgs& a, std::ostream& out) {
  if (a.n < 1 || a.trials < 1 || !(a.tau > 0.0)) {
    throw ArgumentError("geom-check: n, trials and tau must be positive");
  }
  long total = 0;
  out << "divergence axioms (n=" << a.n << ", trials=" << a.trials << ")\n";
  for (const auto kind : {geometry::PotentialKind::LogCosh, geometry::PotentialKind::HalfSquare,
                          geometry::PotentialKind::NegativeEntropy}) {
    const geometry::ConvexPotential phi{kind, a.tau};
    const auto rep = geometry::divergence_axioms_check(phi, a.n, a.trials, a.seed);
    out << "  " << geometry::to_string(kind) << ": nonnegativity "
        << rep.nonnegativity_violations << ", identity " << rep.identity_violations
        << ", local metric " << rep.local_metric_violations << '\n';
    total += rep.total_violations();
  }

  // Dominance: the O(n) test must agree with the row-by-row definition.
  std::mt19937_64 rng(a.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> radius(0.0, 1.5);
  int dominance_mismatch = 0;
  int dominant = 0;
  for (int t = 0; t < a.trials; ++t) {
    std::vector<double> xi(static_cast<std::size_t>(a.n));
    const double r = radius(rng);
    for (double& v : xi) v = r * normal(rng) / std::sqrt(static_cast<double>(a.n));
    const auto metric = geometry::lne_metric(xi, 1.0);
    const Eigen::MatrixXd g = metric.dense();
    bool dense_dominant = true;
    for (int i = 0; i < a.n; ++i) {
      const double off = g.row(i).cwiseAbs().sum() - std::abs(g(i, i));
      if (!(std::abs(g(i, i)) > off)) dense_dominant = false;
    }
    const bool fast = geometry::dominance_check(metric);
    dominant += fast ? 1 : 0;
    if (fast != dense_dominant) ++dominance_mismatch;
  }
  out << "dominance check: " << dominant << " of " << a.trials
      << " dominant, mismatches " << dominance_mismatch << '\n';
  total += dominance_mismatch;

  // Curvature oracle on a flat and a spherical metric.
  ricci::MetricField flat;
  flat.nx = flat.ny = 9;
  flat.spacing = 0.1;
  flat.samples.assign(81, Eigen::Matrix2d::Identity());
  const auto rf = ricci::ricci_oracle(flat);
  double flat_max = 0.0;
  for (const auto& r : rf.values) flat_max = std::max(flat_max, r.cwiseAbs().maxCoeff());
  const bool flat_ok = flat_max < 1e-8;
  out << "ricci flat: max |R| " << num(flat_max) << (flat_ok ? " ok" : " FAIL") << '\n';
  total += flat_ok ? 0 : 1;

  const auto sphere = sphere_field(1.0, 1e-2, 9);
  const auto rs = ricci::ricci_oracle(sphere);
  double sphere_err = 0.0;
  for (int i = 0; i < rs.nx; ++i) {
    for (int j = 0; j < rs.ny; ++j) {
      const Eigen::Matrix2d& g = sphere.at(i + rs.offset, j + rs.offset);
      sphere_err = std::max(sphere_err, (rs.at(i, j) - g).norm() / g.norm());
    }
  }
  const bool sphere_ok = sphere_err < 0.02;
  out << "ricci sphere r=1: max rel err " << num(sphere_err)
      << (sphere_ok ? " ok" : " FAIL") << '\n';
  total += sphere_ok ? 0 : 1;

  out << "violations " << total << '\n';
  return total == 0 ? kExitOk : kExitValidation;
}

struct FlowArgs {
  ricci::FlowSandboxOptions options;
  ricci::TranslationSpec spec;
  std::string out;
};

int run_flow_sim(const FlowArgs& a, std::ostream& out) {
  const auto trace = ricci::flow_sandbox(a.options, a.spec);
  std::string csv = "step,frobenius_norm\n";
  for (std::size_t t = 0; t < trace.size(); ++t) {
    csv += std::to_string(t) + "," + num(trace[t]) + "\n";
  }
  write_text(a.out, csv, out);
  return kExitOk;
}

struct InspectArgs {
  std::string checkpoint;
  int bits = 0;  ///< 0: the checkpoint's scheme
  std::string out;
};

int run_quantize_inspect(const InspectArgs& a, std::ostream& out) {
  const auto net = net::load_checkpoint(a.checkpoint);
  quantize::QuantScheme scheme;
  if (a.bits > 0) scheme = quantize::QuantScheme::for_bits(a.bits);
  else if (net.quant()) scheme = *net.quant();
  else throw ArgumentError("checkpoint is full precision; pass --bits");

  std::string csv = "layer,grid_value,count\n";
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    Eigen::MatrixXd w = net.layer(l).weights;
    if (net.transform() == net::WeightTransform::Dorefa) {
      const auto t = quantize::dorefa_transform({w.data(), static_cast<std::size_t>(w.size())});
      w = Eigen::Map<const Eigen::MatrixXd>(t.w_tilde.data(), w.rows(), w.cols());
    }
    const auto q = quantize::apply(scheme, {w.data(), static_cast<std::size_t>(w.size())});
    std::map<double, std::size_t> hist;
    for (double v : q) ++hist[v + 0.0];  // fold -0 into +0
    for (const auto& [value, count] : hist) {
      csv += std::to_string(l) + "," + num(value) + "," + std::to_string(count) + "\n";
    }
  }
  write_text(a.out, csv, out);
  return kExitOk;
}

}  // namespace

int cli_main(int argc, const char* const argv[], std::ostream& out, std::ostream& err) {
  CLI::App app{"Ricci-flow regularized quantized network toolkit", "rfdn"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "train a network from a config file");
  train_cmd->add_option("--config", ta.config, "key = value config file")->required();
  train_cmd->add_option("--seed", ta.seed, "override the config seed");
  train_cmd->add_option("--set", ta.overrides, "override a config key (key=value)");
  train_cmd->add_option("--out-dir", ta.out_dir, "directory for metrics and checkpoint");

  EvalArgs ea;
  auto* eval_cmd = app.add_subcommand("eval", "accuracy of a checkpoint on a test split");
  eval_cmd->add_option("--checkpoint", ea.checkpoint, "RFDN checkpoint")->required();
  eval_cmd->add_option("--config", ea.config, "config naming the dataset");
  eval_cmd->add_option("--csv", ea.csv, "CSV test set");

  GeomArgs ga;
  auto* geom_cmd = app.add_subcommand("geom-check", "divergence, dominance and curvature checks");
  geom_cmd->add_option("--n", ga.n, "dimension")->capture_default_str();
  geom_cmd->add_option("--trials", ga.trials, "random trials")->capture_default_str();
  geom_cmd->add_option("--tau", ga.tau, "log-cosh constant")->capture_default_str();
  geom_cmd->add_option("--seed", ga.seed, "seed")->capture_default_str();

  FlowArgs fa;
  auto* flow_cmd = app.add_subcommand("flow-sim", "perturbation decay trace as CSV");
  flow_cmd->add_option("--n", fa.options.n, "metric dimension")->capture_default_str();
  flow_cmd->add_option("--amplitude", fa.options.amplitude, "initial perturbation norm")
      ->capture_default_str();
  flow_cmd->add_option("--steps", fa.options.steps, "flow steps")->capture_default_str();
  flow_cmd->add_option("--seed", fa.options.seed, "seed")->capture_default_str();
  flow_cmd->add_option("--k1", fa.spec.k1)->capture_default_str();
  flow_cmd->add_option("--k2", fa.spec.k2)->capture_default_str();
  flow_cmd->add_option("--j1", fa.spec.j1)->capture_default_str();
  flow_cmd->add_option("--j2", fa.spec.j2)->capture_default_str();
  flow_cmd->add_option("--out", fa.out, "output file (default stdout)");

  InspectArgs ia;
  auto* inspect_cmd =
      app.add_subcommand("quantize-inspect", "histogram of quantized checkpoint weights");
  inspect_cmd->add_option("--checkpoint", ia.checkpoint, "RFDN checkpoint")->required();
  inspect_cmd->add_option("--bits", ia.bits, "override the bit-width");
  inspect_cmd->add_option("--out", ia.out, "output file (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitValidation;
  }

  try {
    if (*train_cmd) return run_train(ta, out);
    if (*eval_cmd) return run_eval(ea, out);
    if (*geom_cmd) return run_geom_check(ga, out);
    if (*flow_cmd) return run_flow_sim(fa, out);
    if (*inspect_cmd) return run_quantize_inspect(ia, out);
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }
  return kExitValidation;
}

int cli_main(int argc, const char* const argv[]) {
  return cli_main(argc, argv, std::cout, std::cerr);
}

}  // namespace rfdn::cli
