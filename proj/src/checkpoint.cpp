#include "rfdn/error.hpp"
#include "rfdn/net.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace rfdn::net {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

template <typename T>
void put(std::ostream& os, T value) {
  os.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

class Reader {
 public:
  Reader(std::istream& is, const std::filesystem::path& path)
      : is_(is), path_(path) {}

  template <typename T>
  T get(const char* what) {
    T value{};
    is_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (is_.gcount() != static_cast<std::streamsize>(sizeof(T))) {
      throw FormatError(path_.string() + ": truncated while reading " + what +
                            " at byte " + std::to_string(offset_),
                        offset_);
    }
    offset_ += sizeof(T);
    return value;
  }

  std::uint64_t offset() const noexcept { return offset_; }

 private:
  std::istream& is_;
  const std::filesystem::path& path_;
  std::uint64_t offset_ = 0;
};

std::string quant_string(const std::optional<quantize::QuantScheme>& q) {
  return q ? std::to_string(q->bits) : "none";
}

struct Manifest {
  Nonlinearity f = Nonlinearity::HardTanh;
  std::optional<quantize::QuantScheme> quant;
  WeightTransform transform = WeightTransform::Identity;
};

Manifest read_manifest(const std::filesystem::path& path) {
  Manifest m;
  std::ifstream in(path);
  if (!in) return m;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string key, value;
    if (!(ss >> key)) continue;
    ss >> value;
    try {
      if (key == "nonlinearity") {
        m.f = parse_nonlinearity(value);
      } else if (key == "quant") {
        if (value != "none") m.quant = quantize::QuantScheme::for_bits(std::stoi(value));
      } else if (key == "transform") {
        m.transform = parse_transform(value);
      }
    } catch (const std::exception& e) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": " +
                            e.what(),
                        static_cast<std::uint64_t>(lineno));
    }
  }
  return m;
}

}  // namespace

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint) {
  return checkpoint.string() + ".manifest";
}

void save_checkpoint(const Network& net, const std::filesystem::path& path,
                     const std::string& config_hash) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");

  out.write(kCheckpointMagic, 4);
  put<std::uint16_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.num_layers()));
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const DenseLayer& l = net.layer(i);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.weights.rows()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.weights.cols()));
    put<double>(out, l.tau);
    put<double>(out, l.scale);
  }
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const Eigen::MatrixXd& w = net.layer(i).weights;
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) put<double>(out, w(r, c));
  }
  if (!out) throw IoError("write failed for '" + path.string() + "'");

  const auto mpath = manifest_path(path);
  std::ofstream man(mpath, std::ios::trunc);
  if (!man) throw IoError("cannot open '" + mpath.string() + "' for writing");
  man << "format RFDN " << kCheckpointVersion << '\n';
  man << "layers " << net.num_layers() << '\n';
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    man << "shape " << net.layer(i).weights.rows() << 'x'
        << net.layer(i).weights.cols() << '\n';
  }
  man << "nonlinearity " << to_string(net.nonlinearity()) << '\n';
  man << "quant " << quant_string(net.quant()) << '\n';
  man << "transform " << to_string(net.transform()) << '\n';
  man << "config_hash " << config_hash << '\n';
  if (!man) throw IoError("write failed for '" + mpath.string() + "'");
}

Network load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  Reader rd(in, path);

  std::array<char, 4> magic{};
  for (char& ch : magic) ch = rd.get<char>("magic");
  if (std::memcmp(magic.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError(path.string() + ": bad magic at byte 0", 0);
  }
  const auto version = rd.get<std::uint16_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError(path.string() + ": unsupported version " +
                          std::to_string(version) + " at byte 4",
                      4);
  }
  const auto count = rd.get<std::uint32_t>("layer count");
  if (count == 0 || count > 4096) {
    throw FormatError(path.string() + ": implausible layer count at byte 6", 6);
  }
  std::vector<DenseLayer> layers(count);
  for (auto& l : layers) {
    const std::uint64_t at = rd.offset();
    const auto rows = rd.get<std::uint32_t>("rows");
    const auto cols = rd.get<std::uint32_t>("cols");
    if (rows == 0 || cols == 0 ||
        static_cast<std::uint64_t>(rows) * cols > (1ull << 28)) {
      throw FormatError(path.string() + ": bad layer shape at byte " +
                            std::to_string(at),
                        at);
    }
    l.weights.resize(rows, cols);
    l.tau = rd.get<double>("tau");
    l.scale = rd.get<double>("scale");
  }
  for (auto& l : layers) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
        l.weights(r, c) = rd.get<double>("weights");
  }

  const Manifest m = read_manifest(manifest_path(path));
  return Network(std::move(layers), m.f, m.quant, m.transform);
}

}  // namespace rfdn::net
