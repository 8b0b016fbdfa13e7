#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clbench/checkpoint.hpp"
#include "clbench/networks.hpp"
#include "clbench/objectives.hpp"
#include "clbench/prototype_store.hpp"
#include "clbench/replay_buffer.hpp"
#include "clbench/stream.hpp"

namespace clbench {

enum class Method { supbyol, ccp, er, finetune };

std::string to_string(Method m);
Method method_from_string(const std::string& s);

struct LearnerConfig {
  Method method = Method::ccp;
  double learning_rate = 0.1;
  int64_t rehearsal_batch_size = 10;
  double temperature = 0.2;
  double ema_rate = 0.99;
  double proto_momentum = 0.9;
  MomentumTargetMode momentum_target = MomentumTargetMode::batch_mean;
  bool supbyol_literal_targets = false;
  Reduction ce_reduction = Reduction::mean;
  AugmentationPolicy augmentation;
  /// Replayed samples train un-augmented unless set.
  bool augment_replay = false;
  NetworkSpec net;
  /// Head width for er/finetune; unseen-class logits stay out of the
  /// softmax at train time and of the argmax at test time.
  int64_t total_classes = 10;
  uint64_t seed = 0;
};

/// Scalars emitted once per training step.
struct StepLog {
  int64_t step = 0;
  double loss_total = 0;
  double loss_incoming = 0;
  double loss_buffer = 0;
  bool replayed = false;
};

/// One method's per-batch training protocol. The stream never reveals
/// task ids; learners track seen classes from observed labels only.
class Learner {
 public:
  virtual ~Learner() = default;

  virtual Method method() const = 0;
  /// Runs one optimizer step on the incoming batch (the online protocol:
  /// each stream batch is trained on exactly once).
  virtual StepLog observe_batch(const LabeledBatch& incoming) = 0;
  /// Predicted class ids over all seen classes; does not mutate training
  /// state.
  virtual torch::Tensor predict(const torch::Tensor& images) = 0;

  virtual int64_t step_count() const = 0;
  virtual std::vector<int64_t> seen_classes() const = 0;

  virtual void save_state(Checkpoint& ckpt, const std::string& prefix) const = 0;
  virtual void load_state(const Checkpoint& ckpt, const std::string& prefix) = 0;
};

class LearnerBase : public Learner {
 public:
  LearnerBase(const LearnerConfig& config, std::shared_ptr<ReplayBuffer> buffer);

  int64_t step_count() const override { return step_; }
  const LearnerConfig& config() const { return cfg_; }
  std::shared_ptr<ReplayBuffer> buffer() { return buffer_; }

 protected:
  /// One augmented view per sample; a bitwise copy when augmentation is
  /// disabled, so positive sets are never empty.
  LabeledBatch make_view(const LabeledBatch& incoming);
  LabeledBatch replay_input(const LabeledBatch& replayed);
  static LabeledBatch concat(const LabeledBatch& a, const LabeledBatch& b);

  void save_base(Checkpoint& ckpt, const std::string& prefix) const;
  void load_base(const Checkpoint& ckpt, const std::string& prefix);

  LearnerConfig cfg_;
  std::shared_ptr<ReplayBuffer> buffer_;
  Rng aug_rng_;
  int64_t step_ = 0;
};

/// Prototype-contrast training: incoming loss with prototype attraction
/// and contrast plus buffer cross-entropy; gradient steps reach theta and
/// incoming-class prototypes only, old prototypes move by momentum.
class CcpLearner : public LearnerBase {
 public:
  CcpLearner(const LearnerConfig& config, std::shared_ptr<ReplayBuffer> buffer);

  Method method() const override { return Method::ccp; }
  StepLog observe_batch(const LabeledBatch& incoming) override;
  torch::Tensor predict(const torch::Tensor& images) override;
  std::vector<int64_t> seen_classes() const override { return store_.registered_ids(); }
  void save_state(Checkpoint& ckpt, const std::string& prefix) const override;
  void load_state(const Checkpoint& ckpt, const std::string& prefix) override;

  PrototypeStore& store() { return store_; }
  Encoder& encoder() { return encoder_; }
  ProjectionMlp& projector() { return projector_; }
  torch::Tensor project(const torch::Tensor& images, bool train_mode);

 private:
  Encoder encoder_{nullptr};
  ProjectionMlp projector_{nullptr};
  PrototypeStore store_;
  std::unique_ptr<torch::optim::SGD> optimizer_;
};

/// Twin-network training: online predictions regress onto EMA-target
/// projections of the positives; prototypes are the cosine classifier
/// trained by the buffer cross-entropy (all classes, no momentum).
class SupByolLearner : public LearnerBase {
 public:
  SupByolLearner(const LearnerConfig& config, std::shared_ptr<ReplayBuffer> buffer);

  Method method() const override { return Method::supbyol; }
  StepLog observe_batch(const LabeledBatch& incoming) override;
  torch::Tensor predict(const torch::Tensor& images) override;
  std::vector<int64_t> seen_classes() const override { return store_.registered_ids(); }
  void save_state(Checkpoint& ckpt, const std::string& prefix) const override;
  void load_state(const Checkpoint& ckpt, const std::string& prefix) override;

  TwinNetwork& twin() { return twin_; }
  PrototypeStore& store() { return store_; }

 private:
  TwinNetwork twin_;
  PrototypeStore store_;
  std::unique_ptr<torch::optim::SGD> optimizer_;
};

/// Cross-entropy learner with a linear head over all dataset classes;
/// ER mixes a rehearsal batch into every step, finetune trains on the
/// incoming batch alone.
class CrossEntropyLearner : public LearnerBase {
 public:
  CrossEntropyLearner(const LearnerConfig& config, std::shared_ptr<ReplayBuffer> buffer,
                      bool use_replay);

  Method method() const override { return use_replay_ ? Method::er : Method::finetune; }
  StepLog observe_batch(const LabeledBatch& incoming) override;
  torch::Tensor predict(const torch::Tensor& images) override;
  std::vector<int64_t> seen_classes() const override {
    return {seen_.begin(), seen_.end()};
  }
  void save_state(Checkpoint& ckpt, const std::string& prefix) const override;
  void load_state(const Checkpoint& ckpt, const std::string& prefix) override;

  Encoder& encoder() { return encoder_; }
  torch::nn::Linear& head() { return head_; }

 private:
  bool use_replay_;
  Encoder encoder_{nullptr};
  torch::nn::Linear head_{nullptr};
  std::set<int64_t> seen_;
  std::unique_ptr<torch::optim::SGD> optimizer_;
};

/// Seeds model initialization from config.seed and constructs the method's
/// learner. `buffer` may be null only for finetune.
std::unique_ptr<Learner> make_learner(const LearnerConfig& config,
                                      std::shared_ptr<ReplayBuffer> buffer);

}  // namespace clbench
