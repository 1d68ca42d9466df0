#include "rfdn/data.hpp"

#include "rfdn/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <mutex>
#include <random>

namespace rfdn::data {

void Dataset::validate() const {
  if (labels.empty()) throw ShapeError("dataset is empty");
  if (static_cast<std::size_t>(features.cols()) != labels.size()) {
    throw ShapeError("dataset: feature columns and labels differ in count");
  }
  if (is_image() && features.rows() != static_cast<Eigen::Index>(height) * width) {
    throw ShapeError("dataset: image shape does not match the feature rows");
  }
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw DomainError("dataset: label " + std::to_string(y) +
                        " outside [0, " + std::to_string(num_classes) + ")");
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> idx) const {
  Dataset out;
  out.height = height;
  out.width = width;
  out.num_classes = num_classes;
  out.split = split;
  out.features.resize(features.rows(), static_cast<Eigen::Index>(idx.size()));
  out.labels.resize(idx.size());
  for (std::size_t c = 0; c < idx.size(); ++c) {
    out.features.col(static_cast<Eigen::Index>(c)) =
        features.col(static_cast<Eigen::Index>(idx[c]));
    out.labels[c] = labels[idx[c]];
  }
  return out;
}

// --- IDX ---------------------------------------------------------------------

namespace {

std::vector<unsigned char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t be32(const std::vector<unsigned char>& buf, std::size_t at,
                   const std::filesystem::path& path) {
  if (buf.size() < at + 4) {
    throw FormatError(path.string() + ": truncated header at byte " +
                          std::to_string(buf.size()),
                      buf.size());
  }
  return (std::uint32_t{buf[at]} << 24) | (std::uint32_t{buf[at + 1]} << 16) |
         (std::uint32_t{buf[at + 2]} << 8) | std::uint32_t{buf[at + 3]};
}

void check_payload(const std::vector<unsigned char>& buf, std::size_t header,
                   std::uint64_t payload, const std::filesystem::path& path) {
  if (buf.size() < header + payload) {
    throw FormatError(path.string() + ": truncated payload at byte " +
                          std::to_string(buf.size()) + " (expected " +
                          std::to_string(header + payload) + " bytes)",
                      buf.size());
  }
}

}  // namespace

IdxImages read_idx_images(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  const std::uint32_t magic = be32(buf, 0, path);
  if (magic != 0x00000803u) {
    throw FormatError(path.string() + ": bad IDX image magic at byte 0", 0);
  }
  IdxImages img;
  img.count = static_cast<int>(be32(buf, 4, path));
  img.rows = static_cast<int>(be32(buf, 8, path));
  img.cols = static_cast<int>(be32(buf, 12, path));
  const std::uint64_t n =
      std::uint64_t(img.count) * std::uint64_t(img.rows) * std::uint64_t(img.cols);
  check_payload(buf, 16, n, path);
  img.pixels.resize(n);
  for (std::uint64_t i = 0; i < n; ++i) img.pixels[i] = buf[16 + i] / 255.0;
  return img;
}

std::vector<int> read_idx_labels(const std::filesystem::path& path) {
  const auto buf = slurp(path);
  const std::uint32_t magic = be32(buf, 0, path);
  if (magic != 0x00000801u) {
    throw FormatError(path.string() + ": bad IDX label magic at byte 0", 0);
  }
  const std::uint32_t n = be32(buf, 4, path);
  check_payload(buf, 8, n, path);
  return {buf.begin() + 8, buf.begin() + 8 + n};
}

Dataset load_idx(const std::filesystem::path& images,
                 const std::filesystem::path& labels, Split split,
                 int num_classes) {
  IdxImages img = read_idx_images(images);
  Dataset ds;
  ds.labels = read_idx_labels(labels);
  if (ds.labels.size() != static_cast<std::size_t>(img.count)) {
    throw ShapeError("'" + images.string() + "' has " + std::to_string(img.count) +
                     " images but '" + labels.string() + "' has " +
                     std::to_string(ds.labels.size()) + " labels");
  }
  ds.height = img.rows;
  ds.width = img.cols;
  ds.split = split;
  ds.features = Eigen::Map<const Eigen::MatrixXd>(
      img.pixels.data(), static_cast<Eigen::Index>(img.rows) * img.cols, img.count);
  ds.num_classes =
      num_classes > 0
          ? num_classes
          : (ds.labels.empty() ? 0 : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1);
  ds.validate();
  return ds;
}

Standardizer Standardizer::fit(const Dataset& train) {
  if (train.features.size() == 0) throw ShapeError("cannot fit statistics on empty data");
  Standardizer s;
  const double n = static_cast<double>(train.features.size());
  s.mean = train.features.sum() / n;
  const double var = (train.features.array() - s.mean).square().sum() / n;
  // Rounding leaves a residue of order eps * |mean| on constant data.
  const double floor = 1e-12 * std::max(1.0, std::abs(s.mean));
  s.stddev = std::sqrt(var) > floor ? std::sqrt(var) : 1.0;
  return s;
}

void Standardizer::apply(Dataset& ds) const {
  ds.features = ((ds.features.array() - mean) / stddev).matrix();
}

// --- CSV ---------------------------------------------------------------------

namespace {

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    out.push_back(line.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, Split split) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw FormatError(path.string() + ":1: missing header", 1);
  const auto header = split_commas(line);
  if (header.size() < 2 || trim(header.back()) != "label") {
    throw FormatError(path.string() + ":1: header must end with a 'label' column", 1);
  }
  const std::size_t dim = header.size() - 1;

  std::vector<double> values;
  std::vector<int> labels;
  std::uint64_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_commas(line);
    const auto where = path.string() + ":" + std::to_string(lineno) + ": ";
    if (cells.size() != header.size()) {
      throw FormatError(where + "expected " + std::to_string(header.size()) +
                            " fields, found " + std::to_string(cells.size()),
                        lineno);
    }
    for (std::size_t i = 0; i < dim; ++i) {
      const auto cell = trim(cells[i]);
      double v = 0.0;
      const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (ec != std::errc{} || p != cell.data() + cell.size()) {
        throw FormatError(where + "bad number '" + std::string(cell) + "'", lineno);
      }
      values.push_back(v);
    }
    const auto cell = trim(cells.back());
    int y = 0;
    const auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), y);
    if (ec != std::errc{} || p != cell.data() + cell.size() || y < 0) {
      throw FormatError(where + "bad label '" + std::string(cell) + "'", lineno);
    }
    labels.push_back(y);
  }

  Dataset ds;
  ds.split = split;
  ds.labels = std::move(labels);
  ds.features = Eigen::Map<const Eigen::MatrixXd>(
      values.data(), static_cast<Eigen::Index>(dim),
      static_cast<Eigen::Index>(ds.labels.size()));
  ds.num_classes = ds.labels.empty()
                       ? 0
                       : *std::max_element(ds.labels.begin(), ds.labels.end()) + 1;
  ds.validate();
  return ds;
}

void write_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  for (int i = 0; i < ds.dim(); ++i) out << 'x' << i << ',';
  out << "label\n";
  char buf[64];
  for (std::size_t c = 0; c < ds.size(); ++c) {
    for (int i = 0; i < ds.dim(); ++i) {
      // Shortest representation that reads back to the same double.
      const auto res = std::to_chars(buf, buf + sizeof buf,
                                     ds.features(i, static_cast<Eigen::Index>(c)));
      out.write(buf, res.ptr - buf);
      out << ',';
    }
    out << ds.labels[c] << '\n';
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

// --- translations ------------------------------------------------------------

Eigen::MatrixXd translate(const Eigen::MatrixXd& batch, int height, int width,
                          int dx, int dy) {
  if (std::abs(dx) > kMaxShift || std::abs(dy) > kMaxShift) {
    throw ArgumentError("translate: shifts are limited to +-" +
                        std::to_string(kMaxShift));
  }
  if (height <= 0 || width <= 0) {
    static std::once_flag warned;
    std::call_once(warned, [] {
      spdlog::warn("translate: flat features, shifts act as the identity");
    });
    return batch;
  }
  if (batch.rows() != static_cast<Eigen::Index>(height) * width) {
    throw ShapeError("translate: batch rows do not match height * width");
  }
  if (dx == 0 && dy == 0) return batch;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(batch.rows(), batch.cols());
  const int r0 = std::max(0, dy), r1 = std::min(height, height + dy);
  const int c0 = std::max(0, dx), c1 = std::min(width, width + dx);
  for (Eigen::Index s = 0; s < batch.cols(); ++s) {
    for (int r = r0; r < r1; ++r) {
      for (int c = c0; c < c1; ++c) {
        out(r * width + c, s) = batch((r - dy) * width + (c - dx), s);
      }
    }
  }
  return out;
}

Dataset translate(const Dataset& ds, int dx, int dy) {
  Dataset out = ds;
  out.features = translate(ds.features, ds.height, ds.width, dx, dy);
  return out;
}

// --- synthetic ---------------------------------------------------------------

Dataset make_blobs(std::size_t n, double separation, std::uint64_t seed,
                   Split split) {
  if (n == 0) throw ArgumentError("make_blobs: n must be positive");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  Dataset ds;
  ds.split = split;
  ds.num_classes = 2;
  ds.features.resize(2, static_cast<Eigen::Index>(n));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    const double cx = (y == 0 ? -0.5 : 0.5) * separation;
    ds.features(0, static_cast<Eigen::Index>(i)) = cx + noise(rng);
    ds.features(1, static_cast<Eigen::Index>(i)) = noise(rng);
    ds.labels[i] = y;
  }
  return ds;
}

Dataset make_xor(std::size_t n, double jitter, std::uint64_t seed, Split split) {
  if (n == 0) throw ArgumentError("make_xor: n must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> corner(0, 3);
  std::normal_distribution<double> noise(0.0, jitter);
  Dataset ds;
  ds.split = split;
  ds.num_classes = 2;
  ds.features.resize(2, static_cast<Eigen::Index>(n));
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int q = corner(rng);
    const double sx = (q & 1) ? 1.0 : -1.0;
    const double sy = (q & 2) ? 1.0 : -1.0;
    ds.features(0, static_cast<Eigen::Index>(i)) = sx + noise(rng);
    ds.features(1, static_cast<Eigen::Index>(i)) = sy + noise(rng);
    ds.labels[i] = (sx > 0) != (sy > 0) ? 1 : 0;
  }
  return ds;
}

}  // namespace rfdn::data
