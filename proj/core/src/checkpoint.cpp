#include "skelssl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "skelssl/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint i/o assumes a little-endian host");

namespace skelssl {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'C', 'K'};

template <typename T>
void write_pod(std::ofstream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in, const std::string& section) {
  T value;
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw ParseError("checkpoint truncated while reading " + section);
  return value;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod<std::uint64_t>(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in, const std::string& section) {
  const auto len = read_pod<std::uint64_t>(in, section + ".length");
  if (len > (1ULL << 32)) throw ParseError("checkpoint: implausible string length in " + section);
  std::string s(len, '\0');
  in.read(s.data(), static_cast<std::streamsize>(len));
  if (!in) throw ParseError("checkpoint truncated while reading " + section);
  return s;
}

}  // namespace

const Eigen::MatrixXd* CheckpointData::find(const std::string& name) const {
  for (const auto& [n, m] : tensors)
    if (n == name) return &m;
  return nullptr;
}

void write_checkpoint(const CheckpointData& data, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);

  out.write(kMagic, 4);
  write_pod<std::uint32_t>(out, data.version);
  write_string(out, data.config_json);
  write_pod<std::uint64_t>(out, data.config_hash);
  write_string(out, data.stage);
  write_pod<std::int32_t>(out, data.epoch);
  write_pod<std::uint64_t>(out, data.step);
  write_pod<std::int32_t>(out, data.queue_size);
  write_pod<std::int32_t>(out, data.queue_cursor);
  write_pod<std::uint64_t>(out, data.tensors.size());
  for (const auto& [name, tensor] : data.tensors) {
    write_string(out, name);
    write_pod<std::int64_t>(out, tensor.rows());
    write_pod<std::int64_t>(out, tensor.cols());
    // Eigen default storage is column-major; write row-by-row for a stable layout.
    for (Eigen::Index r = 0; r < tensor.rows(); ++r)
      for (Eigen::Index c = 0; c < tensor.cols(); ++c) write_pod<double>(out, tensor(r, c));
  }
  if (!out) throw IoError("short write: " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw ParseError("not a checkpoint archive: " + path);

  CheckpointData data;
  data.version = read_pod<std::uint32_t>(in, "version");
  if (data.version != 1)
    throw ParseError("unsupported checkpoint version " + std::to_string(data.version));
  data.config_json = read_string(in, "config");
  data.config_hash = read_pod<std::uint64_t>(in, "config_hash");
  data.stage = read_string(in, "stage");
  data.epoch = read_pod<std::int32_t>(in, "epoch");
  data.step = read_pod<std::uint64_t>(in, "step");
  data.queue_size = read_pod<std::int32_t>(in, "queue_size");
  data.queue_cursor = read_pod<std::int32_t>(in, "queue_cursor");
  const auto count = read_pod<std::uint64_t>(in, "tensor count");
  data.tensors.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = read_string(in, "tensor name #" + std::to_string(i));
    const auto rows = read_pod<std::int64_t>(in, "tensor '" + name + "' rows");
    const auto cols = read_pod<std::int64_t>(in, "tensor '" + name + "' cols");
    if (rows < 0 || cols < 0 || rows * cols > (1LL << 32))
      throw ParseError("checkpoint: implausible tensor shape for " + name);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
      for (Eigen::Index c = 0; c < cols; ++c)
        m(r, c) = read_pod<double>(in, "tensor '" + name + "' data");
    data.tensors.emplace_back(name, std::move(m));
  }
  return data;
}

}  // namespace skelssl
