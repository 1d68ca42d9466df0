#pragma once

// Command-line entry point: train, eval, geom-check, flow-sim,
// quantize-inspect. Exit codes: 0 success, 1 validation error, 2 I/O error.

#include "rfdn/data.hpp"
#include "rfdn/train.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace rfdn::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

/// Dataset selection from the same key = value file as the training config.
struct DataConfig {
  std::string dataset = "blobs";  ///< idx | csv | blobs | xor
  std::filesystem::path train_images, train_labels, test_images, test_labels;
  std::filesystem::path train_csv, test_csv;
  std::size_t train_limit = 0;  ///< 0 keeps every training sample
  std::size_t test_limit = 0;
  std::size_t synthetic_n = 400;
  std::size_t synthetic_test_n = 200;
  double synthetic_param = 4.0;  ///< blob separation or XOR jitter
  std::uint64_t data_seed = 1234;
  std::filesystem::path out_dir = "run";

  bool set(const std::string& key, const std::string& value);
};

struct RunFiles {
  train::TrainConfig train;
  DataConfig data;
};

/// Splits every key between the two configs; unknown keys are errors.
RunFiles parse_run_config(
    const std::vector<std::pair<std::string, std::string>>& kv);

/// Loads the train and test splits; IDX images are standardized with the
/// training split's statistics.
std::pair<data::Dataset, data::Dataset> load_datasets(const DataConfig& cfg);

int cli_main(int argc, const char* const argv[]);
int cli_main(int argc, const char* const argv[], std::ostream& out,
             std::ostream& err);

}  // namespace rfdn::cli
