#include "clbench/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace clbench {

namespace {

constexpr char kMagic[8] = {'C', 'L', 'B', 'C', 'K', 'P', 'T', '1'};
constexpr uint32_t kVersion = 1;

enum class DtypeTag : uint8_t { f32 = 0, f64 = 1, i64 = 2, u8 = 3 };

DtypeTag tag_of(const torch::Tensor& t) {
  switch (t.scalar_type()) {
    case torch::kFloat32: return DtypeTag::f32;
    case torch::kFloat64: return DtypeTag::f64;
    case torch::kInt64: return DtypeTag::i64;
    case torch::kUInt8: return DtypeTag::u8;
    default:
      throw std::invalid_argument("checkpoint: unsupported dtype " +
                                  std::string(torch::toString(t.scalar_type())));
  }
}

torch::Dtype dtype_of(DtypeTag tag) {
  switch (tag) {
    case DtypeTag::f32: return torch::kFloat32;
    case DtypeTag::f64: return torch::kFloat64;
    case DtypeTag::i64: return torch::kInt64;
    case DtypeTag::u8: return torch::kUInt8;
  }
  throw std::runtime_error("checkpoint: unknown dtype tag");
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw std::runtime_error("checkpoint: truncated file");
  return v;
}

}  // namespace

void Checkpoint::put(const std::string& name, const torch::Tensor& t) {
  tensors[name] = t.detach().to(torch::kCPU).contiguous();
}

const torch::Tensor& Checkpoint::get(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw std::out_of_range("checkpoint: missing tensor " + name);
  return it->second;
}

void Checkpoint::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);

  const std::string meta_str = meta.dump();
  write_pod(out, static_cast<uint64_t>(meta_str.size()));
  out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

  write_pod(out, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, raw] : tensors) {
    auto t = raw.detach().to(torch::kCPU).contiguous();
    write_pod(out, static_cast<uint16_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod(out, static_cast<uint8_t>(tag_of(t)));
    write_pod(out, static_cast<uint32_t>(t.dim()));
    for (int64_t d = 0; d < t.dim(); ++d) write_pod(out, static_cast<uint64_t>(t.size(d)));
    const uint64_t bytes = t.numel() * t.element_size();
    write_pod(out, bytes);
    out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(bytes));
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw std::runtime_error("checkpoint: bad magic in " + path);
  const uint32_t version = read_pod<uint32_t>(in);
  if (version != kVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));

  Checkpoint ckpt;
  const uint64_t meta_len = read_pod<uint64_t>(in);
  std::string meta_str(meta_len, '\0');
  in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
  if (!in) throw std::runtime_error("checkpoint: truncated metadata");
  ckpt.meta = nlohmann::json::parse(meta_str);

  const uint32_t count = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = read_pod<uint16_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const auto tag = static_cast<DtypeTag>(read_pod<uint8_t>(in));
    const uint32_t ndim = read_pod<uint32_t>(in);
    std::vector<int64_t> sizes(ndim);
    for (uint32_t d = 0; d < ndim; ++d) sizes[d] = static_cast<int64_t>(read_pod<uint64_t>(in));
    const uint64_t bytes = read_pod<uint64_t>(in);
    auto t = torch::empty(sizes, torch::TensorOptions().dtype(dtype_of(tag)));
    if (static_cast<uint64_t>(t.numel() * t.element_size()) != bytes)
      throw std::runtime_error("checkpoint: blob size mismatch for " + name);
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(bytes));
    if (!in) throw std::runtime_error("checkpoint: truncated blob " + name);
    ckpt.tensors[name] = t;
  }
  return ckpt;
}

void save_module_state(Checkpoint& ckpt, const std::string& prefix,
                       const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters())
    ckpt.put(prefix + "/param/" + item.key(), item.value());
  for (const auto& item : module.named_buffers())
    ckpt.put(prefix + "/buffer/" + item.key(), item.value());
}

void load_module_state(const Checkpoint& ckpt, const std::string& prefix,
                       torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  for (auto& item : module.named_parameters())
    item.value().copy_(ckpt.get(prefix + "/param/" + item.key()));
  for (auto& item : module.named_buffers())
    item.value().copy_(ckpt.get(prefix + "/buffer/" + item.key()));
}

}  // namespace clbench
