#include <doctest.h>
#include <torch/torch.h>

#include <vector>

#include "clbench/evaluation.hpp"
#include "helpers.hpp"
#include "oracles/oracles.hpp"

using namespace clbench;

namespace {

EvalMatrix matrix_of(const oracles::Mat& rows) {
  EvalMatrix m;
  for (const auto& row : rows) m.append_row(row);
  return m;
}

std::vector<LabeledBatch> balanced_test_sets(int64_t tasks, int64_t per_class) {
  std::vector<LabeledBatch> sets;
  for (int64_t t = 0; t < tasks; ++t) {
    auto images = torch::full({per_class, 1, 2, 2}, static_cast<float>(t));
    auto labels = torch::full({per_class}, t, torch::kInt64);
    sets.push_back({images, labels});
  }
  return sets;
}

}  // namespace

TEST_CASE("accuracy matrix validates entries and indexing") {
  EvalMatrix m;
  m.append_row({50.0});
  m.append_row({60.0, 70.0});
  CHECK(m.num_phases() == 2);
  CHECK(m.at(1, 0) == 60.0);
  CHECK_THROWS_AS(m.at(0, 1), std::out_of_range);
  CHECK_THROWS_AS(m.append_row({-1.0}), std::invalid_argument);
  CHECK_THROWS_AS(m.append_row({100.5}), std::invalid_argument);
}

TEST_CASE("a perfect predictor scores 100 on every task") {
  auto sets = balanced_test_sets(3, 7);
  auto perfect = [](const torch::Tensor& images) {
    // The fabricated pixel value encodes the label.
    return images.reshape({images.size(0), -1}).select(1, 0).to(torch::kInt64);
  };
  auto acc = evaluate_seen(perfect, sets);
  REQUIRE(acc.size() == 3);
  for (double a : acc) CHECK(a == doctest::Approx(100.0));
}

TEST_CASE("a constant predictor scores 100 over K on a balanced mixture") {
  // One combined test set holding 4 classes in equal measure.
  auto sets = balanced_test_sets(4, 5);
  LabeledBatch mixed{torch::cat({sets[0].images, sets[1].images, sets[2].images, sets[3].images}),
                     torch::cat({sets[0].labels, sets[1].labels, sets[2].labels, sets[3].labels})};
  auto constant = [](const torch::Tensor& images) {
    return torch::full({images.size(0)}, 2, torch::kInt64);
  };
  auto acc = evaluate_seen(constant, {mixed});
  CHECK(acc[0] == doctest::Approx(25.0));
  // Per-task view: only the matching task scores.
  auto per_task = evaluate_seen(constant, sets);
  CHECK(per_task[0] == doctest::Approx(0.0));
  CHECK(per_task[2] == doctest::Approx(100.0));
}

TEST_CASE("chunked prediction covers every sample exactly once") {
  auto sets = balanced_test_sets(1, 10);
  std::vector<int64_t> chunk_sizes;
  auto counting = [&](const torch::Tensor& images) {
    chunk_sizes.push_back(images.size(0));
    return torch::zeros({images.size(0)}, torch::kInt64);
  };
  auto small = evaluate_seen(counting, sets, 3);
  CHECK((chunk_sizes == std::vector<int64_t>{3, 3, 3, 1}));
  chunk_sizes.clear();
  auto big = evaluate_seen(counting, sets, 256);
  CHECK(chunk_sizes == std::vector<int64_t>{10});
  CHECK(small == big);
}

TEST_CASE("evaluate_seen rejects empty input") {
  CHECK_THROWS_AS(evaluate_seen([](const torch::Tensor& t) { return t; }, {}),
                  std::invalid_argument);
  std::vector<LabeledBatch> with_empty = {{torch::empty({0, 1, 2, 2}),
                                           torch::empty({0}, torch::kInt64)}};
  CHECK_THROWS_AS(evaluate_seen([](const torch::Tensor& t) { return t; }, with_empty),
                  std::invalid_argument);
}

TEST_CASE("nearest-mean prediction solves the synthetic clusters") {
  SyntheticSpec spec;
  spec.num_classes = 5;
  spec.train_per_class = 30;
  spec.test_per_class = 20;
  auto ds = make_synthetic(spec, 99);

  // Class means estimated from the train split.
  std::vector<torch::Tensor> means;
  for (int64_t c = 0; c < 5; ++c) {
    auto mask = ds.train_labels == c;
    means.push_back(ds.train_images.index({mask}).mean(0).flatten());
  }
  auto nearest = [&](const torch::Tensor& images) {
    auto flat = images.reshape({images.size(0), -1});
    auto out = torch::empty({images.size(0)}, torch::kInt64);
    for (int64_t i = 0; i < flat.size(0); ++i) {
      int64_t best = 0;
      double best_d = 1e300;
      for (int64_t c = 0; c < 5; ++c) {
        double d = (flat[i] - means[c]).norm().item<double>();
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      out[i] = best;
    }
    return out;
  };

  std::vector<LabeledBatch> sets;
  for (int64_t c = 0; c < 5; ++c) {
    auto mask = ds.test_labels == c;
    sets.push_back({ds.test_images.index({mask}), ds.test_labels.index({mask})});
  }
  auto acc = evaluate_seen(nearest, sets);
  for (double a : acc) CHECK(a > 95.0);
}

TEST_CASE("forgetting hand cases") {
  CHECK_FALSE(forgetting(matrix_of({{80.0}})).has_value());

  auto total_loss = forgetting(matrix_of({{100.0}, {0.0, 100.0}}));
  REQUIRE(total_loss.has_value());
  CHECK(*total_loss == doctest::Approx(100.0));

  // Task 0 peaks at 90 and ends at 60, task 1 peaks at 70 and ends at 50.
  auto mixed = forgetting(matrix_of({{90.0}, {80.0, 70.0}, {60.0, 50.0, 95.0}}));
  REQUIRE(mixed.has_value());
  CHECK(*mixed == doctest::Approx(25.0));
}

TEST_CASE("forgetting clips improvement at zero") {
  auto improved = forgetting(matrix_of({{50.0}, {80.0, 60.0}}));
  REQUIRE(improved.has_value());
  CHECK(*improved == doctest::Approx(0.0));

  auto monotone = forgetting(matrix_of({{40.0}, {45.0, 50.0}, {50.0, 55.0, 60.0}}));
  CHECK(*monotone == doctest::Approx(0.0));
}

TEST_CASE("forgetting matches the naive oracle on random triangles") {
  Rng rng(derive_seed(12, "forgetting-cases"));
  for (int rep = 0; rep < 20; ++rep) {
    int phases = 2 + static_cast<int>(rand_below(rng, 5));
    oracles::Mat rows;
    for (int p = 0; p < phases; ++p) {
      oracles::Vec row(p + 1);
      for (auto& v : row) v = 100.0 * rand_unit(rng);
      rows.push_back(row);
    }
    auto want = oracles::forgetting(rows);
    auto got = forgetting(matrix_of(rows));
    REQUIRE(got.has_value() == want.has_value());
    CHECK(*got == doctest::Approx(*want).epsilon(1e-12));
  }
}

TEST_CASE("forgetting rejects matrices missing required entries") {
  CHECK_THROWS_AS(forgetting(matrix_of({{}, {50.0}})), std::invalid_argument);
  CHECK_THROWS_AS(forgetting(matrix_of({{50.0}, {60.0, 70.0}, {80.0}})),
                  std::invalid_argument);
}

TEST_CASE("anytime schedule spaces evaluations evenly and ends at the stream length") {
  CHECK((anytime_schedule(5000, 5) == std::vector<int64_t>{1000, 2000, 3000, 4000, 5000}));
  CHECK((anytime_schedule(10, 3) == std::vector<int64_t>{3, 6, 10}));
  CHECK((anytime_schedule(3, 10) == std::vector<int64_t>{1, 2, 3}));
  CHECK(anytime_schedule(7, 1) == std::vector<int64_t>{7});
  CHECK(anytime_schedule(1, 4) == std::vector<int64_t>{1});

  for (int64_t length : {17, 100, 999}) {
    auto steps = anytime_schedule(length, 10);
    CHECK(steps.back() == length);
    for (size_t i = 1; i < steps.size(); ++i) CHECK(steps[i] > steps[i - 1]);
  }
  CHECK_THROWS_AS(anytime_schedule(10, 0), std::invalid_argument);
  CHECK_THROWS_AS(anytime_schedule(0, 3), std::invalid_argument);
}
