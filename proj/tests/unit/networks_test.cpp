#include <doctest.h>
#include <torch/torch.h>

#include "clbench/networks.hpp"
#include "oracles/oracles.hpp"

using namespace clbench;

namespace {

NetworkSpec tiny_mlp_spec() {
  NetworkSpec spec;
  spec.encoder = EncoderKind::mlp;
  spec.in_channels = 1;
  spec.image_height = 4;
  spec.image_width = 4;
  spec.embedding_dim = 32;
  spec.mlp_hidden = 16;
  spec.projector_hidden = 8;
  spec.projection_dim = 6;
  spec.predictor_hidden = 8;
  return spec;
}

}  // namespace

TEST_CASE("mlp encoder and heads produce the configured shapes") {
  torch::manual_seed(0);
  auto spec = tiny_mlp_spec();
  TwinNetwork twin(spec, 0.99);
  auto x = torch::rand({5, 1, 4, 4});
  auto out = twin.forward_online(x);
  CHECK(out.embedding.sizes() == torch::IntArrayRef({5, 32}));
  CHECK(out.projection.sizes() == torch::IntArrayRef({5, 6}));
  CHECK(out.prediction.sizes() == torch::IntArrayRef({5, 6}));
  CHECK(twin.forward_target(x).sizes() == torch::IntArrayRef({5, 6}));
  CHECK(out.prediction.isfinite().all().item<bool>());

  // Heads compose: projection feeds the predictor, embedding the projector.
  auto proj = twin.online_projector()->forward(out.embedding);
  CHECK(torch::allclose(proj, out.projection));
  auto pred = twin.predictor()->forward(out.projection);
  CHECK(torch::allclose(pred, out.prediction));
}

TEST_CASE("reduced resnet emits 160-wide embeddings and pins embedding_dim") {
  torch::manual_seed(0);
  NetworkSpec spec;  // resnet defaults, 3x32x32
  TwinNetwork twin(spec, 0.99);
  auto x = torch::rand({2, 3, 32, 32});
  auto out = twin.forward_online(x, false);
  CHECK(out.embedding.sizes() == torch::IntArrayRef({2, 160}));
  CHECK(out.embedding.isfinite().all().item<bool>());

  NetworkSpec bad = spec;
  bad.embedding_dim = 128;
  CHECK_THROWS_AS((Encoder(bad)), std::invalid_argument);
}

TEST_CASE("eval-mode forwards are deterministic") {
  torch::manual_seed(1);
  TwinNetwork twin(tiny_mlp_spec(), 0.9);
  auto x = torch::rand({4, 1, 4, 4});
  auto a = twin.forward_online(x, false);
  auto b = twin.forward_online(x, false);
  CHECK(a.prediction.equal(b.prediction));
  CHECK(twin.forward_target(x).equal(twin.forward_target(x)));
}

TEST_CASE("target starts as a copy of the online encoder and projector") {
  torch::manual_seed(2);
  TwinNetwork twin(tiny_mlp_spec(), 0.99);
  auto x = torch::rand({3, 1, 4, 4});
  CHECK(twin.forward_target(x).equal(twin.project_online(x, false)));
}

TEST_CASE("target network receives no gradients and stays frozen") {
  torch::manual_seed(3);
  TwinNetwork twin(tiny_mlp_spec(), 0.99);
  auto x = torch::rand({4, 1, 4, 4});
  auto out = twin.forward_online(x);
  auto tgt = twin.forward_target(x);
  CHECK_FALSE(tgt.requires_grad());

  std::vector<torch::Tensor> before;
  for (auto& p : twin.target_parameters()) before.push_back(p.clone());

  auto loss = (out.prediction - tgt).pow(2).sum();
  loss.backward();
  for (auto& p : twin.online_parameters()) CHECK(p.grad().defined());
  auto target = twin.target_parameters();
  for (size_t i = 0; i < target.size(); ++i) {
    CHECK_FALSE(target[i].requires_grad());
    CHECK_FALSE(target[i].grad().defined());
    CHECK(target[i].equal(before[i]));
  }
}

TEST_CASE("online parameter list spans encoder, projector and predictor") {
  TwinNetwork twin(tiny_mlp_spec(), 0.99);
  auto f = twin.online_encoder()->parameters().size();
  auto g = twin.online_projector()->parameters().size();
  auto q = twin.predictor()->parameters().size();
  CHECK(twin.online_parameters().size() == f + g + q);
  CHECK(twin.target_parameters().size() == f + g);
}

TEST_CASE("one ema step mixes target and online at the configured rate") {
  torch::manual_seed(4);
  TwinNetwork twin(tiny_mlp_spec(), 0.75);
  auto online_w = twin.online_encoder()->parameters()[0];
  auto target_w = twin.target_encoder()->parameters()[0];
  auto xi_before = target_w.clone();
  {
    torch::NoGradGuard guard;
    online_w.add_(1.0);
  }
  auto pred_before = twin.predictor()->parameters()[0].clone();
  twin.ema_update();
  auto expect = 0.75 * xi_before + 0.25 * online_w.detach();
  CHECK(torch::allclose(target_w, expect, 1e-6, 1e-7));
  // The predictor has no target copy and is untouched.
  CHECK(twin.predictor()->parameters()[0].equal(pred_before));
}

TEST_CASE("ema rate one freezes the target and rate zero copies the online net") {
  torch::manual_seed(5);
  TwinNetwork frozen(tiny_mlp_spec(), 1.0);
  auto before = frozen.target_encoder()->parameters()[0].clone();
  {
    torch::NoGradGuard guard;
    frozen.online_encoder()->parameters()[0].add_(2.0);
  }
  frozen.ema_update();
  CHECK(torch::allclose(frozen.target_encoder()->parameters()[0], before));

  TwinNetwork copier(tiny_mlp_spec(), 0.0);
  {
    torch::NoGradGuard guard;
    copier.online_encoder()->parameters()[0].add_(2.0);
  }
  copier.ema_update();
  CHECK(torch::allclose(copier.target_encoder()->parameters()[0],
                        copier.online_encoder()->parameters()[0].detach()));

  CHECK_THROWS_AS(TwinNetwork(tiny_mlp_spec(), 1.9), std::invalid_argument);
  CHECK_THROWS_AS(TwinNetwork(tiny_mlp_spec(), -0.1), std::invalid_argument);
}

TEST_CASE("iterated ema follows the geometric recurrence") {
  torch::manual_seed(6);
  auto src = torch::nn::Linear(3, 2);
  auto dst = torch::nn::Linear(3, 2);
  src->to(torch::kFloat64);
  dst->to(torch::kFloat64);
  const double rate = 0.9;
  const int k = 50;

  auto xi0 = dst->weight.detach().clone();
  auto theta = src->weight.detach().clone();
  for (int i = 0; i < k; ++i) ema_module_update(*src, *dst, rate);

  auto got = dst->weight.detach();
  for (int64_t r = 0; r < 2; ++r)
    for (int64_t c = 0; c < 3; ++c) {
      double want = oracles::ema_after(xi0[r][c].item<double>(), theta[r][c].item<double>(),
                                       rate, k);
      CHECK(got[r][c].item<double>() == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("ema blends float buffers and copies integral buffers") {
  auto src = torch::nn::BatchNorm2d(4);
  auto dst = torch::nn::BatchNorm2d(4);
  {
    torch::NoGradGuard guard;
    src->running_mean.fill_(2.0);
    src->num_batches_tracked.fill_(7);
    dst->running_mean.fill_(1.0);
  }
  ema_module_update(*src, *dst, 0.5);
  CHECK(torch::allclose(dst->running_mean, torch::full({4}, 1.5)));
  CHECK(dst->num_batches_tracked.item<int64_t>() == 7);
}

TEST_CASE("init_target_from_online re-synchronizes after drift") {
  torch::manual_seed(7);
  TwinNetwork twin(tiny_mlp_spec(), 0.99);
  {
    torch::NoGradGuard guard;
    for (auto& p : twin.online_parameters()) p.add_(0.3);
  }
  auto x = torch::rand({2, 1, 4, 4});
  CHECK_FALSE(twin.forward_target(x).equal(twin.project_online(x, false)));
  twin.init_target_from_online();
  CHECK(twin.forward_target(x).equal(twin.project_online(x, false)));
}
