#include <doctest.h>
#include <torch/torch.h>

#include <memory>
#include <vector>

#include "clbench/learners.hpp"

using namespace clbench;

namespace {

LearnerConfig tiny_config(Method method, uint64_t seed = 21) {
  LearnerConfig cfg;
  cfg.method = method;
  cfg.learning_rate = 0.05;
  cfg.rehearsal_batch_size = 2;
  cfg.temperature = 0.2;
  cfg.ema_rate = 0.9;
  cfg.proto_momentum = 0.9;
  cfg.augmentation.enabled = false;
  cfg.net.encoder = EncoderKind::mlp;
  cfg.net.in_channels = 1;
  cfg.net.image_height = 4;
  cfg.net.image_width = 4;
  cfg.net.embedding_dim = 16;
  cfg.net.mlp_hidden = 12;
  cfg.net.projector_hidden = 8;
  cfg.net.projection_dim = 6;
  cfg.net.predictor_hidden = 8;
  cfg.total_classes = 10;
  cfg.seed = seed;
  return cfg;
}

LabeledBatch fixed_batch(const std::vector<int64_t>& labels, uint64_t seed) {
  torch::manual_seed(seed);
  const int64_t n = static_cast<int64_t>(labels.size());
  auto images = torch::rand({n, 1, 4, 4});
  auto lab = torch::from_blob(const_cast<int64_t*>(labels.data()), {n}, torch::kInt64).clone();
  return {images, lab};
}

}  // namespace

TEST_CASE("factory builds the requested method and validates its inputs") {
  auto buf = std::make_shared<ReplayBuffer>(20, 1);
  CHECK(make_learner(tiny_config(Method::ccp), buf)->method() == Method::ccp);
  CHECK(make_learner(tiny_config(Method::supbyol), buf)->method() == Method::supbyol);
  CHECK(make_learner(tiny_config(Method::er), buf)->method() == Method::er);
  CHECK(make_learner(tiny_config(Method::finetune), nullptr)->method() == Method::finetune);

  CHECK_THROWS_AS(make_learner(tiny_config(Method::er), nullptr), std::invalid_argument);
  auto bad = tiny_config(Method::ccp);
  bad.rehearsal_batch_size = 0;
  CHECK_THROWS_AS(make_learner(bad, buf), std::invalid_argument);
}

TEST_CASE("first step has no replay and later steps rehearse") {
  auto cfg = tiny_config(Method::ccp);
  auto buf = std::make_shared<ReplayBuffer>(20, 2);
  auto learner = make_learner(cfg, buf);

  auto log1 = learner->observe_batch(fixed_batch({0, 0}, 300));
  CHECK_FALSE(log1.replayed);
  CHECK(log1.loss_buffer == 0.0);
  CHECK(log1.loss_total == log1.loss_incoming);
  CHECK(log1.step == 1);
  CHECK(learner->step_count() == 1);
  CHECK(learner->seen_classes() == std::vector<int64_t>{0});
  CHECK(buf->size() == 2);

  auto log2 = learner->observe_batch(fixed_batch({1, 1}, 301));
  CHECK(log2.replayed);
  CHECK(log2.loss_buffer != 0.0);
  CHECK(log2.loss_total == log2.loss_incoming + log2.loss_buffer);
  CHECK((learner->seen_classes() == std::vector<int64_t>{0, 1}));

  CHECK_THROWS_AS(learner->observe_batch({torch::empty({0, 1, 4, 4}),
                                          torch::empty({0}, torch::kInt64)}),
                  std::invalid_argument);
}

TEST_CASE("prototype-contrast learner matches a straight-line transcript of its step") {
  auto cfg = tiny_config(Method::ccp);
  auto batch1 = fixed_batch({0, 0}, 310);
  auto batch2 = fixed_batch({1, 1}, 311);
  auto probe = fixed_batch({0, 1, 0}, 312);

  auto buf = std::make_shared<ReplayBuffer>(50, 777);
  torch::manual_seed(derive_seed(cfg.seed, "model-init"));
  CcpLearner learner(cfg, buf);

  // Reference: the same protocol written out step by step with its own
  // modules, prototype store and buffer, seeded identically.
  torch::manual_seed(derive_seed(cfg.seed, "model-init"));
  Encoder enc(cfg.net);
  ProjectionMlp proj(enc->output_dim(), cfg.net.projector_hidden, cfg.net.projection_dim);
  PrototypeStore store({.dim = cfg.net.projection_dim,
                        .momentum = cfg.proto_momentum,
                        .mask_old_classes = true,
                        .seed = derive_seed(cfg.seed, "prototypes")});
  std::vector<torch::Tensor> params = enc->parameters();
  for (auto& p : proj->parameters()) params.push_back(p);
  torch::optim::SGD opt(params, cfg.learning_rate);
  ReplayBuffer mirror_buf(50, 777);

  auto mirror_step = [&](const LabeledBatch& incoming) {
    store.set_incoming(incoming.labels);
    auto replay = mirror_buf.sample(cfg.rehearsal_batch_size);
    LabeledBatch extended{torch::cat({incoming.images, incoming.images.clone()}),
                          torch::cat({incoming.labels, incoming.labels})};
    auto positives = build_positive_sets(extended.labels, incoming.size());
    enc->train(true);
    proj->train(true);
    auto z = proj(enc(extended.images));
    auto sp = store.begin_step();
    auto loss = ccp_incoming_loss(z, extended.labels, positives, sp.rows, sp.class_ids,
                                  cfg.temperature);
    double loss_incoming = loss.item<double>();
    double loss_buffer = 0;
    torch::Tensor z_replay;
    if (replay && replay->size() > 0) {
      z_replay = proj(enc(replay->images));
      auto ce = buffer_ce_loss(z_replay, replay->labels, sp.matrix(), sp.class_ids,
                               cfg.temperature, cfg.ce_reduction);
      loss_buffer = ce.item<double>();
      loss = loss + ce;
    }
    opt.zero_grad();
    loss.backward();
    opt.step();
    store.apply_gradient_step(sp, cfg.learning_rate);
    if (replay && replay->size() > 0) store.momentum_update(z_replay.detach(), replay->labels);
    mirror_buf.observe(incoming);
    return std::pair<double, double>{loss_incoming, loss_buffer};
  };

  auto log1 = learner.observe_batch(batch1);
  auto ref1 = mirror_step(batch1);
  CHECK(log1.loss_incoming == doctest::Approx(ref1.first).epsilon(1e-9));
  CHECK(log1.loss_buffer == doctest::Approx(ref1.second).epsilon(1e-9));

  auto log2 = learner.observe_batch(batch2);
  auto ref2 = mirror_step(batch2);
  CHECK(log2.loss_incoming == doctest::Approx(ref2.first).epsilon(1e-9));
  CHECK(log2.loss_buffer == doctest::Approx(ref2.second).epsilon(1e-9));

  for (int64_t id : {0, 1})
    CHECK(torch::allclose(learner.store().prototype(id), store.prototype(id), 1e-7, 1e-9));
  auto got_params = learner.encoder()->parameters();
  auto want_params = enc->parameters();
  REQUIRE(got_params.size() == want_params.size());
  for (size_t i = 0; i < got_params.size(); ++i)
    CHECK(torch::allclose(got_params[i], want_params[i], 1e-7, 1e-9));

  enc->train(false);
  proj->train(false);
  torch::NoGradGuard no_grad;
  auto want_pred = store.classify_batch(proj(enc(probe.images)));
  CHECK(learner.predict(probe.images).equal(want_pred));
}

TEST_CASE("old prototypes move by the momentum rule, incoming ones by gradient") {
  auto cfg = tiny_config(Method::ccp);
  auto buf = std::make_shared<ReplayBuffer>(50, 8);
  torch::manual_seed(derive_seed(cfg.seed, "model-init"));
  CcpLearner learner(cfg, buf);

  learner.observe_batch(fixed_batch({0, 0}, 320));
  auto c0_before = learner.store().prototype(0).clone();

  learner.observe_batch(fixed_batch({1, 1}, 321));
  const auto& targets = learner.store().last_momentum_targets();
  // The buffer held only class 0, so only class 0 gets a momentum target.
  REQUIRE(targets.count(0) == 1);
  CHECK(targets.count(1) == 0);

  const double alpha = cfg.proto_momentum;
  auto mixed = alpha * c0_before + (1.0 - alpha) * targets.at(0);
  auto want = mixed / mixed.norm();
  CHECK(torch::allclose(learner.store().prototype(0), want, 1e-7, 1e-9));
  CHECK_FALSE(learner.store().is_trainable(0));
  CHECK(learner.store().is_trainable(1));
}

TEST_CASE("zero learning rate leaves the network fixed but momentum still acts") {
  auto cfg = tiny_config(Method::ccp);
  cfg.learning_rate = 0.0;
  auto buf = std::make_shared<ReplayBuffer>(50, 9);
  torch::manual_seed(derive_seed(cfg.seed, "model-init"));
  CcpLearner learner(cfg, buf);

  auto w_before = learner.encoder()->parameters()[0].clone();
  learner.observe_batch(fixed_batch({0, 0}, 330));
  auto c0_after_step1 = learner.store().prototype(0).clone();
  learner.observe_batch(fixed_batch({1, 1}, 331));
  CHECK(torch::allclose(learner.encoder()->parameters()[0], w_before, 0.0, 0.0));
  // Gradient scale is zero, so the class-0 move is pure momentum.
  CHECK_FALSE(torch::allclose(learner.store().prototype(0), c0_after_step1, 0.0, 0.0));
}

TEST_CASE("twin learner rehearses without momentum and trains all prototypes") {
  auto cfg = tiny_config(Method::supbyol);
  auto buf = std::make_shared<ReplayBuffer>(50, 10);
  torch::manual_seed(derive_seed(cfg.seed, "model-init"));
  SupByolLearner learner(cfg, buf);

  auto log1 = learner.observe_batch(fixed_batch({0, 0}, 340));
  CHECK_FALSE(log1.replayed);
  auto c0_before = learner.store().prototype(0).clone();

  auto log2 = learner.observe_batch(fixed_batch({1, 1}, 341));
  CHECK(log2.replayed);
  CHECK(learner.store().last_momentum_targets().empty());
  CHECK(learner.store().is_trainable(0));  // no masking in this method
  // The class-0 prototype moved, and only the gradient could have moved it.
  CHECK_FALSE(torch::allclose(learner.store().prototype(0), c0_before, 0.0, 0.0));
}

TEST_CASE("twin learner applies the ema after the optimizer step") {
  auto cfg = tiny_config(Method::supbyol);
  auto buf = std::make_shared<ReplayBuffer>(50, 11);
  torch::manual_seed(derive_seed(cfg.seed, "model-init"));
  SupByolLearner learner(cfg, buf);
  learner.observe_batch(fixed_batch({0, 1}, 350));

  std::vector<torch::Tensor> xi_before;
  for (auto& p : learner.twin().target_parameters()) xi_before.push_back(p.clone());

  learner.observe_batch(fixed_batch({1, 2}, 351));
  auto theta = learner.twin().online_parameters();
  auto xi = learner.twin().target_parameters();
  const double tau = cfg.ema_rate;
  for (size_t i = 0; i < xi.size(); ++i) {
    auto want = tau * xi_before[i] + (1.0 - tau) * theta[i].detach();
    CHECK(torch::allclose(xi[i], want, 1e-6, 1e-8));
  }
}

TEST_CASE("ema rate one keeps the target at its initialization") {
  auto cfg = tiny_config(Method::supbyol);
  cfg.ema_rate = 1.0;
  auto buf = std::make_shared<ReplayBuffer>(50, 12);
  torch::manual_seed(derive_seed(cfg.seed, "model-init"));
  SupByolLearner learner(cfg, buf);

  std::vector<torch::Tensor> before;
  for (auto& p : learner.twin().target_parameters()) before.push_back(p.clone());
  learner.observe_batch(fixed_batch({0, 0}, 360));
  learner.observe_batch(fixed_batch({1, 0}, 361));
  auto after = learner.twin().target_parameters();
  for (size_t i = 0; i < after.size(); ++i)
    CHECK(torch::allclose(after[i], before[i], 0.0, 0.0));
}

TEST_CASE("cross-entropy learners track seen classes and restrict predictions") {
  auto cfg = tiny_config(Method::er);
  auto buf = std::make_shared<ReplayBuffer>(20, 13);
  auto learner = make_learner(cfg, buf);

  CHECK_THROWS_AS(learner->predict(torch::rand({1, 1, 4, 4})), std::logic_error);
  learner->observe_batch(fixed_batch({2, 5, 2}, 370));
  CHECK((learner->seen_classes() == std::vector<int64_t>{2, 5}));
  CHECK(buf->size() == 3);

  auto preds = learner->predict(torch::rand({40, 1, 4, 4}));
  for (int64_t i = 0; i < preds.size(0); ++i) {
    int64_t p = preds[i].item<int64_t>();
    CHECK((p == 2 || p == 5));
  }

  auto bad = fixed_batch({11}, 371);
  CHECK_THROWS_AS(learner->observe_batch(bad), std::invalid_argument);
}

TEST_CASE("finetune trains without any buffer interaction") {
  auto cfg = tiny_config(Method::finetune);
  CrossEntropyLearner learner(cfg, nullptr, false);
  auto log1 = learner.observe_batch(fixed_batch({0, 1}, 380));
  auto log2 = learner.observe_batch(fixed_batch({2, 2}, 381));
  CHECK_FALSE(log1.replayed);
  CHECK_FALSE(log2.replayed);
  CHECK(learner.step_count() == 2);
  CHECK(std::isfinite(log2.loss_total));
  CHECK((learner.seen_classes() == std::vector<int64_t>{0, 1, 2}));
}

TEST_CASE("zero learning rate leaves the cross-entropy network unchanged") {
  auto cfg = tiny_config(Method::er);
  cfg.learning_rate = 0.0;
  auto buf = std::make_shared<ReplayBuffer>(20, 14);
  torch::manual_seed(derive_seed(cfg.seed, "model-init"));
  CrossEntropyLearner learner(cfg, buf, true);
  auto w = learner.encoder()->parameters()[0].clone();
  auto h = learner.head()->weight.clone();
  learner.observe_batch(fixed_batch({0, 1}, 390));
  learner.observe_batch(fixed_batch({1, 2}, 391));
  CHECK(torch::allclose(learner.encoder()->parameters()[0], w, 0.0, 0.0));
  CHECK(torch::allclose(learner.head()->weight, h, 0.0, 0.0));
}

TEST_CASE("predictions do not mutate training state") {
  auto cfg = tiny_config(Method::ccp);
  auto buf = std::make_shared<ReplayBuffer>(20, 15);
  auto learner = make_learner(cfg, buf);
  learner->observe_batch(fixed_batch({0, 1}, 400));

  auto probe = fixed_batch({0, 1}, 401);
  auto first = learner->predict(probe.images);
  auto second = learner->predict(probe.images);
  CHECK(first.equal(second));
  CHECK(learner->step_count() == 1);
  CHECK(buf->size() == 2);  // predict never feeds the buffer
}

TEST_CASE("checkpointed learners continue identically to the original") {
  std::vector<LabeledBatch> batches = {
      fixed_batch({0, 0, 1}, 410), fixed_batch({1, 1, 0}, 411), fixed_batch({2, 0, 1}, 412),
      fixed_batch({2, 2, 0}, 413), fixed_batch({1, 0, 2}, 414)};
  auto probe = fixed_batch({0, 1, 2, 0}, 415);

  for (Method method : {Method::ccp, Method::supbyol, Method::er, Method::finetune}) {
    CAPTURE(to_string(method));
    auto cfg = tiny_config(method);
    cfg.augmentation.enabled = true;  // exercises the augment rng round trip
    cfg.augmentation.crop_padding = 1;

    auto buf_a = std::make_shared<ReplayBuffer>(30, 99);
    auto a = make_learner(cfg, buf_a);
    for (int i = 0; i < 3; ++i) a->observe_batch(batches[i]);

    Checkpoint ckpt;
    a->save_state(ckpt, "learner");
    auto buf_b = std::make_shared<ReplayBuffer>(ReplayBuffer::restore(buf_a->snapshot()));
    auto b = make_learner(cfg, buf_b);
    b->load_state(ckpt, "learner");
    CHECK(b->step_count() == 3);
    CHECK(b->seen_classes() == a->seen_classes());

    for (int i = 3; i < 5; ++i) {
      auto log_a = a->observe_batch(batches[i]);
      auto log_b = b->observe_batch(batches[i]);
      CHECK(log_a.loss_total == doctest::Approx(log_b.loss_total).epsilon(1e-9));
      CHECK(log_a.replayed == log_b.replayed);
    }
    CHECK(a->predict(probe.images).equal(b->predict(probe.images)));
  }
}
