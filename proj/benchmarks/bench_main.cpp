// Microbenchmarks for the training-loop hot paths: the three losses,
// buffer insertion and sampling, encoder forwards and the target-network
// update. Shapes mirror the cifar10 configuration (batch 10, rehearsal
// 10, projection dim 128).

#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "clbench/networks.hpp"
#include "clbench/objectives.hpp"
#include "clbench/replay_buffer.hpp"

namespace {

using namespace clbench;

constexpr int64_t kBatch = 10;
constexpr int64_t kProjDim = 128;
constexpr int64_t kClasses = 10;

PositiveSets bench_positives(const torch::Tensor& labels) {
  return build_positive_sets(torch::cat({labels, labels}), labels.size(0));
}

void BM_SupByolLossForward(benchmark::State& state) {
  torch::manual_seed(0);
  auto labels = torch::randint(0, kClasses, {kBatch}, torch::kInt64);
  auto positives = bench_positives(labels);
  auto predictions = torch::randn({kBatch, kProjDim});
  auto targets = torch::randn({2 * kBatch, kProjDim});
  for (auto _ : state)
    benchmark::DoNotOptimize(supbyol_loss(predictions, targets, positives, {0.2, false}));
}
BENCHMARK(BM_SupByolLossForward);

void BM_SupByolLossBackward(benchmark::State& state) {
  torch::manual_seed(0);
  auto labels = torch::randint(0, kClasses, {kBatch}, torch::kInt64);
  auto positives = bench_positives(labels);
  auto predictions = torch::randn({kBatch, kProjDim}).requires_grad_(true);
  auto targets = torch::randn({2 * kBatch, kProjDim});
  for (auto _ : state) {
    if (predictions.grad().defined()) predictions.mutable_grad() = torch::Tensor();
    supbyol_loss(predictions, targets, positives, {0.2, false}).backward();
    benchmark::DoNotOptimize(predictions.grad());
  }
}
BENCHMARK(BM_SupByolLossBackward);

void BM_CcpIncomingLossForward(benchmark::State& state) {
  torch::manual_seed(0);
  auto labels = torch::randint(0, kClasses, {kBatch}, torch::kInt64);
  auto positives = bench_positives(labels);
  auto projections = torch::randn({2 * kBatch, kProjDim});
  std::vector<torch::Tensor> prototypes;
  std::vector<int64_t> ids;
  for (int64_t c = 0; c < kClasses; ++c) {
    prototypes.push_back(torch::randn({kProjDim}));
    ids.push_back(c);
  }
  auto labels_extended = torch::cat({labels, labels});
  for (auto _ : state)
    benchmark::DoNotOptimize(
        ccp_incoming_loss(projections, labels_extended, positives, prototypes, ids, 0.2));
}
BENCHMARK(BM_CcpIncomingLossForward);

void BM_BufferCeLossForward(benchmark::State& state) {
  torch::manual_seed(0);
  auto projections = torch::randn({kBatch, kProjDim});
  auto labels = torch::randint(0, kClasses, {kBatch}, torch::kInt64);
  auto prototypes = torch::randn({kClasses, kProjDim});
  std::vector<int64_t> ids;
  for (int64_t c = 0; c < kClasses; ++c) ids.push_back(c);
  for (auto _ : state)
    benchmark::DoNotOptimize(buffer_ce_loss(projections, labels, prototypes, ids, 0.2));
}
BENCHMARK(BM_BufferCeLossForward);

void BM_BufferObserve(benchmark::State& state) {
  torch::manual_seed(0);
  auto images = torch::rand({kBatch, 3, 32, 32});
  auto labels = torch::randint(0, kClasses, {kBatch}, torch::kInt64);
  LabeledBatch batch{images, labels};
  ReplayBuffer buffer(1000, 7);
  for (int i = 0; i < 200; ++i) buffer.observe(batch);  // fill past capacity
  for (auto _ : state) buffer.observe(batch);
}
BENCHMARK(BM_BufferObserve);

void BM_BufferSample(benchmark::State& state) {
  torch::manual_seed(0);
  auto images = torch::rand({kBatch, 3, 32, 32});
  auto labels = torch::randint(0, kClasses, {kBatch}, torch::kInt64);
  LabeledBatch batch{images, labels};
  ReplayBuffer buffer(1000, 7);
  for (int i = 0; i < 200; ++i) buffer.observe(batch);
  for (auto _ : state) benchmark::DoNotOptimize(buffer.sample(kBatch));
}
BENCHMARK(BM_BufferSample);

void BM_ReducedResNetForward(benchmark::State& state) {
  torch::manual_seed(0);
  NetworkSpec spec;
  Encoder encoder(spec);
  encoder->eval();
  auto images = torch::rand({kBatch, 3, 32, 32});
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(encoder->forward(images));
}
BENCHMARK(BM_ReducedResNetForward);

void BM_MlpEncoderForward(benchmark::State& state) {
  torch::manual_seed(0);
  NetworkSpec spec;
  spec.encoder = EncoderKind::mlp;
  spec.in_channels = 1;
  spec.image_height = 4;
  spec.image_width = 4;
  spec.embedding_dim = 32;
  Encoder encoder(spec);
  encoder->eval();
  auto images = torch::rand({kBatch, 1, 4, 4});
  torch::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(encoder->forward(images));
}
BENCHMARK(BM_MlpEncoderForward);

void BM_EmaUpdate(benchmark::State& state) {
  torch::manual_seed(0);
  NetworkSpec spec;
  TwinNetwork twin(spec, 0.99);
  for (auto _ : state) twin.ema_update();
}
BENCHMARK(BM_EmaUpdate);

}  // namespace

BENCHMARK_MAIN();
