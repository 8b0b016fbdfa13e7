#include "clbench/learners.hpp"

#include <algorithm>
#include <stdexcept>

namespace clbench {

std::string to_string(Method m) {
  switch (m) {
    case Method::supbyol: return "supbyol";
    case Method::ccp: return "ccp";
    case Method::er: return "er";
    case Method::finetune: return "finetune";
  }
  throw std::logic_error("unknown Method");
}

Method method_from_string(const std::string& s) {
  if (s == "supbyol") return Method::supbyol;
  if (s == "ccp") return Method::ccp;
  if (s == "er") return Method::er;
  if (s == "finetune") return Method::finetune;
  throw std::invalid_argument("unknown method: " + s);
}

namespace {

// argmax over columns with ties to the lowest index.
torch::Tensor argmax_lowest(const torch::Tensor& scores) {
  auto s = scores.to(torch::kFloat64).contiguous();
  auto acc = s.accessor<double, 2>();
  auto out = torch::empty({s.size(0)}, torch::kInt64);
  auto out_acc = out.accessor<int64_t, 1>();
  for (int64_t i = 0; i < s.size(0); ++i) {
    int64_t best = 0;
    for (int64_t c = 1; c < s.size(1); ++c)
      if (acc[i][c] > acc[i][best]) best = c;
    out_acc[i] = best;
  }
  return out;
}

torch::Tensor seen_class_tensor(const std::set<int64_t>& seen) {
  std::vector<int64_t> ids(seen.begin(), seen.end());
  return torch::from_blob(ids.data(), {static_cast<int64_t>(ids.size())}, torch::kInt64).clone();
}

// Cross-entropy restricted to the seen classes: unseen logits are out of
// the softmax entirely.
torch::Tensor masked_ce(const torch::Tensor& logits, const torch::Tensor& labels,
                        const std::set<int64_t>& seen, Reduction reduction) {
  auto cols = seen_class_tensor(seen);
  auto sub = logits.index_select(1, cols);
  auto lab = labels.to(torch::kInt64).contiguous();
  auto targets = torch::empty({lab.size(0)}, torch::kInt64);
  auto t = targets.accessor<int64_t, 1>();
  const int64_t* l = lab.data_ptr<int64_t>();
  std::vector<int64_t> ids(seen.begin(), seen.end());
  for (int64_t i = 0; i < lab.size(0); ++i) {
    auto it = std::lower_bound(ids.begin(), ids.end(), l[i]);
    if (it == ids.end() || *it != l[i])
      throw std::logic_error("masked_ce: label " + std::to_string(l[i]) + " not seen");
    t[i] = it - ids.begin();
  }
  auto per_sample = torch::nn::functional::cross_entropy(
      sub, targets, torch::nn::functional::CrossEntropyFuncOptions().reduction(torch::kNone));
  return reduction == Reduction::mean ? per_sample.mean() : per_sample.sum();
}

}  // namespace

LearnerBase::LearnerBase(const LearnerConfig& config, std::shared_ptr<ReplayBuffer> buffer)
    : cfg_(config), buffer_(std::move(buffer)), aug_rng_(derive_seed(config.seed, "augment")) {
  if (cfg_.method != Method::finetune && cfg_.rehearsal_batch_size < 1)
    throw std::invalid_argument("rehearsal_batch_size must be >= 1 for rehearsal methods");
  if (cfg_.method != Method::finetune && !buffer_)
    throw std::invalid_argument("rehearsal methods need a replay buffer");
}

LabeledBatch LearnerBase::make_view(const LabeledBatch& incoming) {
  return augment(incoming, cfg_.augmentation, aug_rng_);
}

LabeledBatch LearnerBase::replay_input(const LabeledBatch& replayed) {
  if (!cfg_.augment_replay) return replayed;
  return augment(replayed, cfg_.augmentation, aug_rng_);
}

LabeledBatch LearnerBase::concat(const LabeledBatch& a, const LabeledBatch& b) {
  return {torch::cat({a.images, b.images}), torch::cat({a.labels, b.labels})};
}

void LearnerBase::save_base(Checkpoint& ckpt, const std::string& prefix) const {
  ckpt.meta[prefix]["step"] = step_;
  ckpt.meta[prefix]["aug_rng"] = rng_state_to_string(aug_rng_);
}

void LearnerBase::load_base(const Checkpoint& ckpt, const std::string& prefix) {
  step_ = ckpt.meta.at(prefix).at("step").get<int64_t>();
  aug_rng_ = rng_from_string(ckpt.meta.at(prefix).at("aug_rng").get<std::string>());
}

// ---------------------------------------------------------------- CCP --

CcpLearner::CcpLearner(const LearnerConfig& config, std::shared_ptr<ReplayBuffer> buffer)
    : LearnerBase(config, std::move(buffer)),
      store_({.dim = config.net.projection_dim,
              .momentum = config.proto_momentum,
              .mask_old_classes = true,
              .seed = derive_seed(config.seed, "prototypes")}) {
  encoder_ = Encoder(cfg_.net);
  projector_ = ProjectionMlp(encoder_->output_dim(), cfg_.net.projector_hidden,
                             cfg_.net.projection_dim);
  std::vector<torch::Tensor> params = encoder_->parameters();
  for (auto& p : projector_->parameters()) params.push_back(p);
  optimizer_ = std::make_unique<torch::optim::SGD>(params, cfg_.learning_rate);
}

torch::Tensor CcpLearner::project(const torch::Tensor& images, bool train_mode) {
  encoder_->train(train_mode);
  projector_->train(train_mode);
  return projector_->forward(encoder_->forward(images));
}

StepLog CcpLearner::observe_batch(const LabeledBatch& incoming) {
  if (incoming.size() == 0) throw std::invalid_argument("observe_batch: empty batch");
  store_.set_incoming(incoming.labels);
  auto replay = buffer_->sample(cfg_.rehearsal_batch_size);

  auto view = make_view(incoming);
  auto extended = concat(incoming, view);
  auto positives = build_positive_sets(extended.labels, incoming.size());

  auto z_ext = project(extended.images, true);
  auto step_protos = store_.begin_step();
  auto incoming_loss = ccp_incoming_loss(z_ext, extended.labels, positives, step_protos.rows,
                                         step_protos.class_ids, cfg_.temperature);

  StepLog log;
  log.loss_incoming = incoming_loss.item<double>();
  auto total = incoming_loss;

  torch::Tensor z_replay;
  LabeledBatch replay_batch;
  if (replay && replay->size() > 0) {
    replay_batch = replay_input(*replay);
    z_replay = project(replay_batch.images, true);
    auto buffer_loss = buffer_ce_loss(z_replay, replay_batch.labels, step_protos.matrix(),
                                      step_protos.class_ids, cfg_.temperature, cfg_.ce_reduction);
    log.loss_buffer = buffer_loss.item<double>();
    log.replayed = true;
    total = total + buffer_loss;
  }

  optimizer_->zero_grad();
  total.backward();
  optimizer_->step();
  store_.apply_gradient_step(step_protos, cfg_.learning_rate);

  if (log.replayed) {
    if (cfg_.momentum_target == MomentumTargetMode::batch_mean) {
      store_.momentum_update(z_replay.detach(), replay_batch.labels);
    } else {
      // buffer_mean: average over every resident sample of each replayed
      // old class, projected without gradient in eval mode.
      torch::NoGradGuard no_grad;
      std::set<int64_t> classes;
      auto lab = replay_batch.labels.to(torch::kInt64);
      for (int64_t i = 0; i < lab.size(0); ++i) classes.insert(lab[i].item<int64_t>());
      std::vector<torch::Tensor> zs;
      std::vector<int64_t> labs;
      for (int64_t c : classes) {
        if (store_.incoming_set().count(c)) continue;
        auto members = buffer_->samples_of_class(c);
        if (members.size() == 0) continue;
        auto z = project(members.images, false);
        for (int64_t i = 0; i < z.size(0); ++i) {
          zs.push_back(z[i]);
          labs.push_back(c);
        }
      }
      if (!zs.empty()) {
        auto labels = torch::from_blob(labs.data(), {static_cast<int64_t>(labs.size())},
                                       torch::kInt64)
                          .clone();
        store_.momentum_update(torch::stack(zs), labels);
      }
    }
  }

  buffer_->observe(incoming);
  ++step_;
  log.step = step_;
  log.loss_total = log.loss_incoming + log.loss_buffer;
  return log;
}

torch::Tensor CcpLearner::predict(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  return store_.classify_batch(project(images, false));
}

void CcpLearner::save_state(Checkpoint& ckpt, const std::string& prefix) const {
  save_base(ckpt, prefix);
  save_module_state(ckpt, prefix + "/encoder", *encoder_);
  save_module_state(ckpt, prefix + "/projector", *projector_);
  auto snap = store_.snapshot();
  ckpt.meta[prefix]["proto_order"] = snap.order;
  ckpt.meta[prefix]["proto_incoming"] = snap.incoming;
  ckpt.meta[prefix]["proto_rng"] = snap.rng_state;
  if (snap.matrix.defined()) ckpt.put(prefix + "/prototypes", snap.matrix);
}

void CcpLearner::load_state(const Checkpoint& ckpt, const std::string& prefix) {
  load_base(ckpt, prefix);
  load_module_state(ckpt, prefix + "/encoder", *encoder_);
  load_module_state(ckpt, prefix + "/projector", *projector_);
  PrototypeStore::Snapshot snap;
  snap.order = ckpt.meta.at(prefix).at("proto_order").get<std::vector<int64_t>>();
  snap.incoming = ckpt.meta.at(prefix).at("proto_incoming").get<std::vector<int64_t>>();
  snap.rng_state = ckpt.meta.at(prefix).at("proto_rng").get<std::string>();
  if (ckpt.has(prefix + "/prototypes")) snap.matrix = ckpt.get(prefix + "/prototypes");
  store_.restore(snap);
}

// ------------------------------------------------------------ SupBYOL --

SupByolLearner::SupByolLearner(const LearnerConfig& config, std::shared_ptr<ReplayBuffer> buffer)
    : LearnerBase(config, std::move(buffer)),
      twin_(config.net, config.ema_rate),
      store_({.dim = config.net.projection_dim,
              .momentum = config.proto_momentum,
              .mask_old_classes = false,
              .seed = derive_seed(config.seed, "prototypes")}) {
  optimizer_ = std::make_unique<torch::optim::SGD>(twin_.online_parameters(), cfg_.learning_rate);
}

StepLog SupByolLearner::observe_batch(const LabeledBatch& incoming) {
  if (incoming.size() == 0) throw std::invalid_argument("observe_batch: empty batch");
  store_.set_incoming(incoming.labels);
  auto replay = buffer_->sample(cfg_.rehearsal_batch_size);

  auto view = make_view(incoming);
  auto extended = concat(incoming, view);
  auto positives = build_positive_sets(extended.labels, incoming.size());

  auto online = twin_.forward_online(incoming.images, true);
  auto targets = twin_.forward_target(extended.images);
  auto step_protos = store_.begin_step();
  auto incoming_loss =
      supbyol_loss(online.prediction, targets, positives,
                   {.temperature = cfg_.temperature,
                    .literal_targets = cfg_.supbyol_literal_targets});

  StepLog log;
  log.loss_incoming = incoming_loss.item<double>();
  auto total = incoming_loss;

  if (replay && replay->size() > 0) {
    auto replay_batch = replay_input(*replay);
    auto z_replay = twin_.project_online(replay_batch.images, true);
    auto buffer_loss = buffer_ce_loss(z_replay, replay_batch.labels, step_protos.matrix(),
                                      step_protos.class_ids, cfg_.temperature, cfg_.ce_reduction);
    log.loss_buffer = buffer_loss.item<double>();
    log.replayed = true;
    total = total + buffer_loss;
  }

  optimizer_->zero_grad();
  total.backward();
  optimizer_->step();
  store_.apply_gradient_step(step_protos, cfg_.learning_rate);
  twin_.ema_update();

  buffer_->observe(incoming);
  ++step_;
  log.step = step_;
  log.loss_total = log.loss_incoming + log.loss_buffer;
  return log;
}

torch::Tensor SupByolLearner::predict(const torch::Tensor& images) {
  torch::NoGradGuard no_grad;
  return store_.classify_batch(twin_.project_online(images, false));
}

void SupByolLearner::save_state(Checkpoint& ckpt, const std::string& prefix) const {
  save_base(ckpt, prefix);
  save_module_state(ckpt, prefix + "/online_encoder", *twin_.online_encoder());
  save_module_state(ckpt, prefix + "/online_projector", *twin_.online_projector());
  save_module_state(ckpt, prefix + "/predictor", *twin_.predictor());
  save_module_state(ckpt, prefix + "/target_encoder", *twin_.target_encoder());
  save_module_state(ckpt, prefix + "/target_projector", *twin_.target_projector());
  auto snap = store_.snapshot();
  ckpt.meta[prefix]["proto_order"] = snap.order;
  ckpt.meta[prefix]["proto_incoming"] = snap.incoming;
  ckpt.meta[prefix]["proto_rng"] = snap.rng_state;
  if (snap.matrix.defined()) ckpt.put(prefix + "/prototypes", snap.matrix);
}

void SupByolLearner::load_state(const Checkpoint& ckpt, const std::string& prefix) {
  load_base(ckpt, prefix);
  load_module_state(ckpt, prefix + "/online_encoder", *twin_.online_encoder());
  load_module_state(ckpt, prefix + "/online_projector", *twin_.online_projector());
  load_module_state(ckpt, prefix + "/predictor", *twin_.predictor());
  load_module_state(ckpt, prefix + "/target_encoder", *twin_.target_encoder());
  load_module_state(ckpt, prefix + "/target_projector", *twin_.target_projector());
  PrototypeStore::Snapshot snap;
  snap.order = ckpt.meta.at(prefix).at("proto_order").get<std::vector<int64_t>>();
  snap.incoming = ckpt.meta.at(prefix).at("proto_incoming").get<std::vector<int64_t>>();
  snap.rng_state = ckpt.meta.at(prefix).at("proto_rng").get<std::string>();
  if (ckpt.has(prefix + "/prototypes")) snap.matrix = ckpt.get(prefix + "/prototypes");
  store_.restore(snap);
}

// -------------------------------------------------------- ER/finetune --

CrossEntropyLearner::CrossEntropyLearner(const LearnerConfig& config,
                                         std::shared_ptr<ReplayBuffer> buffer, bool use_replay)
    : LearnerBase(config, std::move(buffer)), use_replay_(use_replay) {
  encoder_ = Encoder(cfg_.net);
  head_ = torch::nn::Linear(encoder_->output_dim(), cfg_.total_classes);
  std::vector<torch::Tensor> params = encoder_->parameters();
  for (auto& p : head_->parameters()) params.push_back(p);
  optimizer_ = std::make_unique<torch::optim::SGD>(params, cfg_.learning_rate);
}

StepLog CrossEntropyLearner::observe_batch(const LabeledBatch& incoming) {
  if (incoming.size() == 0) throw std::invalid_argument("observe_batch: empty batch");
  {
    auto lab = incoming.labels.to(torch::kInt64);
    for (int64_t i = 0; i < lab.size(0); ++i) {
      int64_t c = lab[i].item<int64_t>();
      if (c < 0 || c >= cfg_.total_classes)
        throw std::invalid_argument("label outside the configured class range");
      seen_.insert(c);
    }
  }

  std::optional<LabeledBatch> replay;
  if (use_replay_) replay = buffer_->sample(cfg_.rehearsal_batch_size);

  LabeledBatch train = make_view(incoming);
  StepLog log;
  if (replay && replay->size() > 0) {
    train = concat(train, replay_input(*replay));
    log.replayed = true;
  }

  encoder_->train(true);
  head_->train(true);
  auto logits = head_(encoder_->forward(train.images));
  auto loss = masked_ce(logits, train.labels, seen_, cfg_.ce_reduction);
  log.loss_incoming = loss.item<double>();
  log.loss_total = log.loss_incoming;

  optimizer_->zero_grad();
  loss.backward();
  optimizer_->step();

  if (use_replay_) buffer_->observe(incoming);
  ++step_;
  log.step = step_;
  return log;
}

torch::Tensor CrossEntropyLearner::predict(const torch::Tensor& images) {
  if (seen_.empty()) throw std::logic_error("predict: no classes seen yet");
  torch::NoGradGuard no_grad;
  encoder_->train(false);
  head_->train(false);
  auto logits = head_(encoder_->forward(images));
  auto cols = seen_class_tensor(seen_);
  auto idx = argmax_lowest(logits.index_select(1, cols));
  return cols.index_select(0, idx);
}

void CrossEntropyLearner::save_state(Checkpoint& ckpt, const std::string& prefix) const {
  save_base(ckpt, prefix);
  save_module_state(ckpt, prefix + "/encoder", *encoder_);
  save_module_state(ckpt, prefix + "/head", *head_);
  ckpt.meta[prefix]["seen"] = std::vector<int64_t>(seen_.begin(), seen_.end());
}

void CrossEntropyLearner::load_state(const Checkpoint& ckpt, const std::string& prefix) {
  load_base(ckpt, prefix);
  load_module_state(ckpt, prefix + "/encoder", *encoder_);
  load_module_state(ckpt, prefix + "/head", *head_);
  auto seen = ckpt.meta.at(prefix).at("seen").get<std::vector<int64_t>>();
  seen_ = {seen.begin(), seen.end()};
}

std::unique_ptr<Learner> make_learner(const LearnerConfig& config,
                                      std::shared_ptr<ReplayBuffer> buffer) {
  torch::manual_seed(derive_seed(config.seed, "model-init"));
  switch (config.method) {
    case Method::ccp: return std::make_unique<CcpLearner>(config, std::move(buffer));
    case Method::supbyol: return std::make_unique<SupByolLearner>(config, std::move(buffer));
    case Method::er: return std::make_unique<CrossEntropyLearner>(config, std::move(buffer), true);
    case Method::finetune:
      return std::make_unique<CrossEntropyLearner>(config, nullptr, false);
  }
  throw std::logic_error("unknown Method");
}

}  // namespace clbench
