#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <map>
#include <optional>
#include <vector>

#include "clbench/rng.hpp"
#include "clbench/stream.hpp"

namespace clbench {

enum class InsertionPolicy { reservoir, class_balanced };

/// Fixed-capacity sample memory. Insertion is reservoir sampling by
/// default, so after a stream of length L >= capacity every element is
/// resident with probability capacity/L. Retrieval is uniform, without
/// replacement when enough slots exist and with replacement otherwise.
class ReplayBuffer {
 public:
  ReplayBuffer(int64_t capacity, uint64_t seed,
               InsertionPolicy policy = InsertionPolicy::reservoir);

  void observe(const LabeledBatch& batch);

  /// Empty buffer signals the no-replay condition via nullopt. n=0 yields
  /// an empty batch.
  std::optional<LabeledBatch> sample(int64_t n);

  int64_t size() const { return static_cast<int64_t>(labels_.size()); }
  int64_t capacity() const { return capacity_; }
  int64_t observed_count() const { return observed_; }
  bool empty() const { return labels_.empty(); }

  /// Label of slot i, for inspection and tests.
  int64_t slot_label(int64_t i) const { return labels_.at(i); }
  torch::Tensor slot_image(int64_t i) const { return images_.at(i); }

  /// All resident samples of one class (empty batch when none).
  LabeledBatch samples_of_class(int64_t label) const;

  // Checkpoint support.
  struct Snapshot {
    int64_t capacity;
    int64_t observed;
    std::string rng_state;
    torch::Tensor images;  // [size, c, h, w]; undefined when size == 0
    torch::Tensor labels;  // [size]
    InsertionPolicy policy;
    std::map<int64_t, int64_t> observed_per_class;
  };
  Snapshot snapshot() const;
  static ReplayBuffer restore(const Snapshot& snap);

 private:
  void insert_reservoir(const torch::Tensor& image, int64_t label);
  void insert_balanced(const torch::Tensor& image, int64_t label);

  int64_t capacity_;
  int64_t observed_ = 0;
  InsertionPolicy policy_;
  Rng rng_;
  std::vector<torch::Tensor> images_;
  std::vector<int64_t> labels_;
  // class_balanced bookkeeping: per-class observed counts.
  std::map<int64_t, int64_t> observed_per_class_;
};

}  // namespace clbench
