#include "sscd/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>

#include <torch/torch.h>

#include "sscd/error.hpp"

namespace fs = std::filesystem;

namespace sscd {
namespace {

constexpr std::array<char, 8> kMagic{'S', 'S', 'C', 'D', 'C', 'K', 'P', 'T'};

struct DtypeCode {
  torch::Dtype dtype;
  std::uint8_t code;
};

constexpr std::array<DtypeCode, 6> kDtypes{{
    {torch::kFloat32, 1},
    {torch::kFloat64, 2},
    {torch::kInt64, 3},
    {torch::kInt32, 4},
    {torch::kUInt8, 5},
    {torch::kBool, 6},
}};

std::uint8_t encode_dtype(torch::Dtype dtype) {
  for (const auto& d : kDtypes) {
    if (d.dtype == dtype) return d.code;
  }
  throw CheckpointError(std::string("unsupported tensor dtype ") + c10::toString(dtype));
}

torch::Dtype decode_dtype(std::uint8_t code) {
  for (const auto& d : kDtypes) {
    if (d.code == code) return d.dtype;
  }
  throw CheckpointError("unknown dtype code " + std::to_string(code));
}

class Writer {
 public:
  explicit Writer(std::ofstream& out) : out_(out) {}
  template <typename T>
  void pod(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
  }
  void str(const std::string& s) {
    pod<std::uint64_t>(s.size());
    bytes(s.data(), s.size());
  }

 private:
  std::ofstream& out_;
};

class Reader {
 public:
  Reader(std::ifstream& in, fs::path path) : in_(in), path_(std::move(path)) {}
  template <typename T>
  T pod() {
    T v{};
    bytes(&v, sizeof(T));
    return v;
  }
  void bytes(void* data, std::size_t n) {
    in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
    if (!in_) throw IoError("truncated checkpoint " + path_.string());
  }
  std::string str() {
    const auto n = pod<std::uint64_t>();
    if (n > (1ULL << 32)) throw IoError("corrupt checkpoint " + path_.string());
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::ifstream& in_;
  fs::path path_;
};

}  // namespace

void write_archive(const fs::path& path, const TensorArchive& archive) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Write to a sibling file first so a crash never leaves a torn checkpoint.
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    Writer w(out);
    w.bytes(kMagic.data(), kMagic.size());
    w.pod<std::uint32_t>(kCheckpointVersion);
    w.pod<std::uint64_t>(archive.meta.size());
    for (const auto& [k, v] : archive.meta) {
      w.str(k);
      w.str(v);
    }
    w.pod<std::uint64_t>(archive.tensors.size());
    for (const auto& [name, tensor] : archive.tensors) {
      auto t = tensor.detach().to(torch::kCPU).contiguous();
      w.str(name);
      w.pod<std::uint8_t>(encode_dtype(t.scalar_type()));
      w.pod<std::uint32_t>(static_cast<std::uint32_t>(t.dim()));
      for (auto d : t.sizes()) w.pod<std::int64_t>(d);
      const auto nbytes = static_cast<std::uint64_t>(t.numel() * t.element_size());
      w.pod<std::uint64_t>(nbytes);
      w.bytes(t.data_ptr(), nbytes);
    }
    if (!out) throw IoError("error while writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

TensorArchive read_archive(const fs::path& path) {
  if (!fs::is_regular_file(path)) throw IoError("no such checkpoint: " + path.string());
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  Reader r(in, path);
  std::array<char, 8> magic{};
  r.bytes(magic.data(), magic.size());
  if (magic != kMagic) throw CheckpointError(path.string() + " is not a checkpoint file");
  const auto version = r.pod<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint " + path.string() + " has format version " +
                          std::to_string(version) + ", this build reads version " +
                          std::to_string(kCheckpointVersion));
  }
  TensorArchive archive;
  const auto n_meta = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    auto key = r.str();
    archive.meta[key] = r.str();
  }
  const auto n_tensors = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    auto name = r.str();
    const auto dtype = decode_dtype(r.pod<std::uint8_t>());
    const auto rank = r.pod<std::uint32_t>();
    std::vector<int64_t> dims(rank);
    for (auto& d : dims) d = r.pod<std::int64_t>();
    const auto nbytes = r.pod<std::uint64_t>();
    auto t = torch::empty(dims, torch::TensorOptions().dtype(dtype));
    if (static_cast<std::uint64_t>(t.numel() * t.element_size()) != nbytes) {
      throw IoError("corrupt tensor '" + name + "' in " + path.string());
    }
    r.bytes(t.data_ptr(), nbytes);
    archive.tensors.emplace(std::move(name), std::move(t));
  }
  return archive;
}

}  // namespace sscd
