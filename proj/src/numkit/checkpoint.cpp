#include "duet/numkit/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>

namespace duet {

namespace {

template <typename UInt>
void put_le(std::ostream& out, UInt v) {
  char bytes[sizeof(UInt)];
  for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes[i] = char((v >> (8 * i)) & 0xff);
  out.write(bytes, sizeof(UInt));
}

template <typename UInt>
UInt get_le(std::istream& in, const char* what) {
  unsigned char bytes[sizeof(UInt)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(UInt))) {
    throw CheckpointError(std::string("checkpoint truncated while reading ") + what);
  }
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= UInt(bytes[i]) << (8 * i);
  return v;
}

constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxName = 4096;

}  // namespace

void write_tensors(std::ostream& out, const std::map<std::string, Tensor>& tensors) {
  out << kCheckpointHeader << '\n';
  for (const auto& [name, t] : tensors) {
    put_le<std::uint32_t>(out, std::uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    put_le<std::uint32_t>(out, std::uint32_t(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
    for (double v : t.values()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
}

std::map<std::string, Tensor> read_tensors(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header != kCheckpointHeader) {
    throw CheckpointError("bad checkpoint header '" + header.substr(0, 32) + "', expected '" +
                          kCheckpointHeader + "'");
  }
  std::map<std::string, Tensor> out;
  while (in.peek() != std::char_traits<char>::eof()) {
    const auto name_len = get_le<std::uint32_t>(in, "name length");
    if (name_len == 0 || name_len > kMaxName) throw CheckpointError("corrupt tensor name length");
    std::string name(name_len, '\0');
    if (!in.read(name.data(), name_len)) throw CheckpointError("checkpoint truncated in tensor name");
    const auto rank = get_le<std::uint32_t>(in, "rank");
    if (rank > kMaxRank) throw CheckpointError("corrupt rank for tensor '" + name + "'");
    Shape shape(rank);
    for (auto& d : shape) d = get_le<std::uint64_t>(in, "dims");
    Tensor::Storage data(shape_size(shape));
    for (auto& v : data) v = std::bit_cast<double>(get_le<std::uint64_t>(in, "values"));
    if (!out.emplace(name, Tensor(std::move(shape), std::move(data))).second) {
      throw CheckpointError("duplicate tensor '" + name + "' in checkpoint");
    }
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& store) {
  std::map<std::string, Tensor> tensors;
  for (const auto& [name, p] : store) tensors.emplace(name, p.value);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  write_tensors(out, tensors);
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

std::map<std::string, Tensor> load_tensors(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  return read_tensors(in);
}

void assign_values(ParamStore& store, const std::map<std::string, Tensor>& tensors) {
  if (tensors.size() != store.size()) {
    throw CheckpointError("checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                          std::to_string(store.size()));
  }
  for (auto& [name, p] : store) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    if (it->second.shape() != p.value.shape()) {
      throw CheckpointError("tensor '" + name + "' has shape " + shape_string(it->second.shape()) +
                            ", model expects " + shape_string(p.value.shape()));
    }
    p.value = it->second;
  }
}

void load_checkpoint(const std::filesystem::path& path, ParamStore& store) {
  assign_values(store, load_tensors(path));
}

}  // namespace duet
