#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "clbench/rng.hpp"

namespace clbench {

enum class DatasetId { cifar10, cifar100, synthetic };

std::string to_string(DatasetId id);
DatasetId dataset_id_from_string(const std::string& s);

/// A batch of images in [0,1], shape [n, c, h, w], with int64 labels [n].
struct LabeledBatch {
  torch::Tensor images;
  torch::Tensor labels;

  int64_t size() const { return labels.defined() ? labels.size(0) : 0; }
};

/// Full dataset: train and held-out test splits plus the class count.
struct LabeledDataset {
  torch::Tensor train_images;
  torch::Tensor train_labels;
  torch::Tensor test_images;
  torch::Tensor test_labels;
  int64_t num_classes = 0;
};

/// Pad-then-crop plus horizontal flip, the train-time augmentation.
struct AugmentationPolicy {
  int64_t crop_padding = 4;
  double flip_probability = 0.5;
  bool enabled = true;
};

/// Parameters of the in-memory Gaussian-cluster dataset.
struct SyntheticSpec {
  int64_t num_classes = 10;
  int64_t channels = 1;
  int64_t height = 4;
  int64_t width = 4;
  int64_t train_per_class = 200;
  int64_t test_per_class = 50;
  double cluster_sigma = 0.05;
};

struct StreamConfig {
  DatasetId dataset_id = DatasetId::synthetic;
  int64_t classes_per_task = 1;  // S
  int64_t batch_size = 10;       // B
  bool augment = true;
  uint64_t seed = 0;
  // Permutation of class ids; empty means natural order 0..K-1.
  std::vector<int64_t> class_order;
  std::string data_dir;     // cifar datasets
  SyntheticSpec synthetic;  // synthetic dataset
};

/// Ordered, single-pass sequence of class-partitioned tasks. Each task
/// exposes its train batches (seed-deterministic shuffle, final batch may
/// be short) and its held-out test set.
class TaskStream {
 public:
  TaskStream() = default;

  int64_t num_tasks() const { return static_cast<int64_t>(tasks_.size()); }
  int64_t total_train_batches() const;

  const std::vector<int64_t>& task_classes(int64_t task) const;
  const std::vector<LabeledBatch>& task_batches(int64_t task) const;
  const LabeledBatch& task_test_set(int64_t task) const;

 private:
  friend TaskStream build_stream(const StreamConfig&, const LabeledDataset&);

  struct Task {
    std::vector<int64_t> classes;
    std::vector<LabeledBatch> batches;
    LabeledBatch test_set;
  };
  std::vector<Task> tasks_;
};

/// Partitions the dataset into tasks of S classes each and shuffles samples
/// within each task. Throws if S does not divide the class count or the
/// dataset is empty.
TaskStream build_stream(const StreamConfig& config, const LabeledDataset& dataset);

/// Loads or generates the dataset named by the config and builds the stream.
TaskStream open_stream(const StreamConfig& config);

/// Per-image random crop (zero-pad then crop back to size) followed by a
/// horizontal flip with the given probability. Labels unchanged. With
/// enabled=false the output is a bitwise copy of the input.
LabeledBatch augment(const LabeledBatch& batch, const AugmentationPolicy& policy, Rng& rng);

/// Gaussian clusters with class means drawn from the seed, values in [0,1].
LabeledDataset make_synthetic(const SyntheticSpec& spec, uint64_t seed);

/// Standard CIFAR binary layouts (see README for the expected files).
LabeledDataset load_cifar10(const std::string& dir);
LabeledDataset load_cifar100(const std::string& dir);

/// Seed-derived permutation of 0..num_classes-1, for shuffled class order.
std::vector<int64_t> shuffled_class_order(int64_t num_classes, uint64_t seed);

}  // namespace clbench
