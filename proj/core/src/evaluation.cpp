#include "clbench/evaluation.hpp"

#include <algorithm>
#include <stdexcept>

namespace clbench {

void EvalMatrix::append_row(std::vector<double> accuracies) {
  for (double a : accuracies)
    if (a < 0 || a > 100) throw std::invalid_argument("accuracy must lie in [0,100]");
  rows_.push_back(std::move(accuracies));
}

double EvalMatrix::at(int64_t phase, int64_t task) const {
  const auto& row = rows_.at(phase);
  if (task < 0 || task >= static_cast<int64_t>(row.size()))
    throw std::out_of_range("EvalMatrix: task not evaluated in this phase");
  return row[task];
}

std::vector<double> evaluate_seen(const Predictor& predict,
                                  const std::vector<LabeledBatch>& task_test_sets,
                                  int64_t chunk_size) {
  if (task_test_sets.empty()) throw std::invalid_argument("evaluate_seen: no test sets");
  std::vector<double> accuracies;
  accuracies.reserve(task_test_sets.size());
  torch::NoGradGuard no_grad;
  for (const auto& test : task_test_sets) {
    const int64_t n = test.size();
    if (n == 0) throw std::invalid_argument("evaluate_seen: missing test split");
    int64_t correct = 0;
    auto labels = test.labels.to(torch::kInt64);
    for (int64_t start = 0; start < n; start += chunk_size) {
      int64_t stop = std::min(start + chunk_size, n);
      auto preds = predict(test.images.slice(0, start, stop));
      correct += (preds.to(torch::kInt64) == labels.slice(0, start, stop)).sum().item<int64_t>();
    }
    accuracies.push_back(100.0 * static_cast<double>(correct) / static_cast<double>(n));
  }
  return accuracies;
}

std::optional<double> forgetting(const EvalMatrix& matrix) {
  const int64_t t = matrix.num_phases();
  if (t < 2) return std::nullopt;
  const auto& rows = matrix.rows();
  const auto& final_row = rows[t - 1];
  double total = 0;
  for (int64_t j = 0; j <= t - 2; ++j) {
    double best = 0;
    bool seen = false;
    for (int64_t l = j; l <= t - 2; ++l) {
      if (j < static_cast<int64_t>(rows[l].size())) {
        best = seen ? std::max(best, rows[l][j]) : rows[l][j];
        seen = true;
      }
    }
    if (!seen || j >= static_cast<int64_t>(final_row.size()))
      throw std::invalid_argument("forgetting: matrix is not lower-triangular");
    total += std::max(0.0, best - final_row[j]);
  }
  return total / static_cast<double>(t - 1);
}

std::vector<int64_t> anytime_schedule(int64_t stream_length, int64_t k) {
  if (k < 1) throw std::invalid_argument("anytime_schedule: k must be >= 1");
  if (stream_length < 1) throw std::invalid_argument("anytime_schedule: empty stream");
  std::vector<int64_t> steps;
  steps.reserve(k);
  for (int64_t i = 1; i <= k; ++i) {
    int64_t s = std::max<int64_t>(1, (i * stream_length) / k);
    if (steps.empty() || steps.back() != s) steps.push_back(s);
  }
  if (steps.back() != stream_length) steps.push_back(stream_length);
  return steps;
}

}  // namespace clbench
