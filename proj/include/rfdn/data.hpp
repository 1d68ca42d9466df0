#pragma once

// Datasets, IDX / CSV loaders, standardization, zero-padded translations, and
// small synthetic generators.

#include <Eigen/Dense>

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace rfdn::data {

enum class Split { Train, Test };

struct Dataset {
  /// One column per sample; image pixels are flattened row-major.
  Eigen::MatrixXd features;
  std::vector<int> labels;
  int height = 0;  ///< 0 for flat feature vectors
  int width = 0;
  int num_classes = 0;
  Split split = Split::Train;

  std::size_t size() const noexcept { return labels.size(); }
  int dim() const noexcept { return static_cast<int>(features.rows()); }
  bool is_image() const noexcept { return height > 0 && width > 0; }

  /// Throws ShapeError / DomainError when the invariants are broken.
  void validate() const;

  /// Columns `idx` gathered into a new batch (labels follow).
  Dataset subset(std::span<const std::size_t> idx) const;
};

struct IdxImages {
  int count = 0;
  int rows = 0;
  int cols = 0;
  std::vector<double> pixels;  ///< scaled to [0, 1], image-major, row-major
};

IdxImages read_idx_images(const std::filesystem::path& path);
std::vector<int> read_idx_labels(const std::filesystem::path& path);

/// Images + labels in [0, 1]. num_classes is max(label) + 1 unless given.
Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels, Split split,
                 int num_classes = 0);

struct Standardizer {
  double mean = 0.0;
  double stddev = 1.0;

  /// Single-channel statistics over every pixel of the dataset.
  static Standardizer fit(const Dataset& train);
  void apply(Dataset& ds) const;
};

/// Header "x0,x1,...,label"; label column last.
Dataset load_csv(const std::filesystem::path& path, Split split = Split::Train);
void write_csv(const std::filesystem::path& path, const Dataset& ds);

inline constexpr int kMaxShift = 4;

/// Shifts every image by dx columns and dy rows (positive = right / down) and
/// zero-fills the vacated border. Flat features (height == 0) are returned
/// unchanged with a one-time warning.
Eigen::MatrixXd translate(const Eigen::MatrixXd& batch, int height, int width,
                          int dx, int dy);
Dataset translate(const Dataset& ds, int dx, int dy);

/// Two isotropic Gaussian blobs in 2-D, centres at -+separation/2 on x.
Dataset make_blobs(std::size_t n, double separation, std::uint64_t seed,
                   Split split = Split::Train);
/// Points on a jittered 2x2 grid labelled by XOR of the quadrant signs.
Dataset make_xor(std::size_t n, double jitter, std::uint64_t seed,
                 Split split = Split::Train);

}  // namespace rfdn::data
