#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "clbench/rng.hpp"

namespace clbench {

/// Which replayed projections feed the momentum target c-bar: the mean of
/// the current replay batch (default) or the mean over all resident
/// buffer samples of the class (computed by the learner).
enum class MomentumTargetMode { batch_mean, buffer_mean };

struct PrototypeStoreOptions {
  int64_t dim = 128;
  double momentum = 0.9;  // alpha
  /// When true (the prototype-contrast method), only incoming-class
  /// prototypes receive gradients; old classes change via momentum only.
  bool mask_old_classes = true;
  uint64_t seed = 0;
  torch::Dtype dtype = torch::kFloat32;
};

/// Per-step prototype tensors handed to the losses. Rows of trainable
/// classes are autograd leaves; the rest are gradient-free constants.
struct ProtoStepTensors {
  std::vector<int64_t> class_ids;     // ascending
  std::vector<torch::Tensor> rows;    // aligned with class_ids
  std::vector<bool> trainable;

  torch::Tensor matrix() const { return torch::stack(rows); }
};

/// One learnable unit-norm prototype per observed class; doubles as the
/// cosine classifier. Every public operation leaves prototypes unit-norm.
class PrototypeStore {
 public:
  explicit PrototypeStore(const PrototypeStoreOptions& opts);

  /// Draws an isotropic Gaussian vector, normalizes it and stores it.
  /// Throws on duplicate registration.
  torch::Tensor register_class(int64_t class_id);

  /// Sets the incoming-class set, registering any unseen class first.
  void set_incoming(const torch::Tensor& labels);

  size_t num_classes() const { return prototypes_.size(); }
  bool has_class(int64_t id) const { return prototypes_.count(id) > 0; }
  torch::Tensor prototype(int64_t id) const;
  std::vector<int64_t> registered_ids() const;  // ascending
  const std::vector<int64_t>& registered_order() const { return order_; }
  const std::set<int64_t>& incoming_set() const { return incoming_; }
  bool is_trainable(int64_t id) const;

  /// Materializes the per-step tensors (leaves for trainable classes).
  ProtoStepTensors begin_step() const;

  /// SGD step on the trainable leaves followed by renormalization.
  void apply_gradient_step(const ProtoStepTensors& step, double learning_rate);

  /// c_y <- alpha*c_y + (1-alpha)*cbar_y with cbar_y the normalized mean of
  /// the class's replayed projections, then renormalized. Incoming classes
  /// are skipped; classes absent from the batch are untouched. Projections
  /// are treated as constants.
  void momentum_update(const torch::Tensor& projections, const torch::Tensor& labels);

  /// Momentum targets recorded by the last momentum_update, for tests and
  /// step audits.
  const std::map<int64_t, torch::Tensor>& last_momentum_targets() const { return last_cbar_; }

  /// argmax over registered classes of cosine similarity; ties break to
  /// the lowest class id. Throws on an empty store or zero-norm input.
  int64_t classify(const torch::Tensor& projection) const;
  torch::Tensor classify_batch(const torch::Tensor& projections) const;

  const PrototypeStoreOptions& options() const { return opts_; }

  // Checkpoint support.
  struct Snapshot {
    torch::Tensor matrix;               // [K, d] in registration order
    std::vector<int64_t> order;
    std::vector<int64_t> incoming;
    std::string rng_state;
  };
  Snapshot snapshot() const;
  void restore(const Snapshot& snap);

 private:
  torch::Tensor normalized(const torch::Tensor& v, const char* what) const;

  PrototypeStoreOptions opts_;
  Rng rng_;
  std::map<int64_t, torch::Tensor> prototypes_;  // unit-norm, no grad
  std::vector<int64_t> order_;                   // registration sequence
  std::set<int64_t> incoming_;
  std::map<int64_t, torch::Tensor> last_cbar_;
};

}  // namespace clbench
