#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "clbench/stream.hpp"

namespace clbench {

/// Maps a batch of images to predicted class ids (int64 [n]). Must not
/// mutate the model it closes over.
using Predictor = std::function<torch::Tensor(const torch::Tensor&)>;

/// Lower-triangular accuracy record: rows()[t][j] is the accuracy in
/// percent on task j's test set after evaluation phase t, j <= t.
class EvalMatrix {
 public:
  void append_row(std::vector<double> accuracies);
  int64_t num_phases() const { return static_cast<int64_t>(rows_.size()); }
  const std::vector<std::vector<double>>& rows() const { return rows_; }
  double at(int64_t phase, int64_t task) const;

 private:
  std::vector<std::vector<double>> rows_;
};

/// Percent of test samples of each task whose prediction over all seen
/// classes equals the true label. One entry per provided task test set.
/// No augmentation is applied; prediction runs in chunks.
std::vector<double> evaluate_seen(const Predictor& predict,
                                  const std::vector<LabeledBatch>& task_test_sets,
                                  int64_t chunk_size = 256);

/// Mean over tasks 0..T-2 of the drop from best historical accuracy to
/// final accuracy, clipped below at zero per task. nullopt (N/A) when the
/// matrix has fewer than two phases.
std::optional<double> forgetting(const EvalMatrix& matrix);

/// k evenly spaced 1-based step indices ending at stream_length. The
/// boundary-triggered schedule (default in the runner) does not use this.
std::vector<int64_t> anytime_schedule(int64_t stream_length, int64_t k);

}  // namespace clbench
