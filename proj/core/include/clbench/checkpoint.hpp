#pragma once

#include <torch/torch.h>

#include <map>
#include <string>

#include <json.hpp>

namespace clbench {

/// Single-file run container: a JSON metadata document plus named tensor
/// blobs. Format: magic, version, meta length + bytes, then per tensor
/// name, dtype, shape and raw little-endian data.
struct Checkpoint {
  nlohmann::json meta;
  std::map<std::string, torch::Tensor> tensors;

  void put(const std::string& name, const torch::Tensor& t);
  const torch::Tensor& get(const std::string& name) const;
  bool has(const std::string& name) const { return tensors.count(name) > 0; }

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

/// Stores every parameter and buffer of a module under prefix/name.
void save_module_state(Checkpoint& ckpt, const std::string& prefix,
                       const torch::nn::Module& module);
/// Copies stored values back into an already-constructed module.
void load_module_state(const Checkpoint& ckpt, const std::string& prefix,
                       torch::nn::Module& module);

}  // namespace clbench
