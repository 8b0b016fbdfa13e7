#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <vector>

namespace clbench {

enum class Reduction { mean, sum };

/// For each raw index i of an extended batch (n_raw raw samples followed
/// by their augmented views), positives[i] lists the indices of the other
/// raw samples with the same label plus i's own view index n_raw + i.
struct PositiveSets {
  int64_t n_raw = 0;
  std::vector<std::vector<int64_t>> positives;
};

/// Temperature-scaled cosine similarity a.b / (t * |a| * |b|) for 1-D
/// vectors. Throws on a zero-norm input rather than epsilon-patching it.
torch::Tensor cosine_sim(const torch::Tensor& a, const torch::Tensor& b, double temperature);

/// Row-wise similarity matrix: out[i][j] = cosine_sim(A[i], B[j], t).
torch::Tensor cosine_sim_matrix(const torch::Tensor& a, const torch::Tensor& b,
                                double temperature);

/// Builds positive sets from the extended-batch labels. Checks that the
/// extended batch has 2*n_raw entries and view labels match their raw
/// sample.
PositiveSets build_positive_sets(const torch::Tensor& labels_extended, int64_t n_raw);

struct SupByolOptions {
  double temperature = 0.2;
  /// When true, every positive contributes sim(q_i, target_i) instead of
  /// sim(q_i, target_p): the target projection is taken from the anchor
  /// sample itself. Ablation mode; the default pairs with the positive.
  bool literal_targets = false;
};

/// Asymmetric incoming-batch loss: the online prediction of each raw
/// sample is pulled toward the (gradient-free) target projections of its
/// positives, averaged per positive set and over the batch, negated.
/// predictions: [N, d] for raw samples; target_projections: [2N, d] for
/// the extended batch. Targets are detached internally.
torch::Tensor supbyol_loss(const torch::Tensor& predictions,
                           const torch::Tensor& target_projections, const PositiveSets& positives,
                           const SupByolOptions& opts = {});

/// Softmax cross-entropy over temperature-scaled cosine logits between
/// each projection and all registered class prototypes. prototypes: [K, d]
/// with rows ordered by proto_class_ids; every label must appear in
/// proto_class_ids.
torch::Tensor buffer_ce_loss(const torch::Tensor& projections, const torch::Tensor& labels,
                             const torch::Tensor& prototypes,
                             const std::vector<int64_t>& proto_class_ids, double temperature,
                             Reduction reduction = Reduction::mean);

/// Sum over ordered pairs i != j of sim(c_i, c_j), scaled by 1/|C|.
/// Rows that should not receive gradients must be detached by the caller.
torch::Tensor prototype_contrast_term(const std::vector<torch::Tensor>& prototypes,
                                      double temperature);

/// Incoming-batch loss with prototype attraction, batch positives and the
/// prototype contrast term. projections: [2N, d] for the extended batch;
/// prototypes are per-class rows aligned with proto_class_ids (old-class
/// rows detached by the caller enter the contrast term as constants).
torch::Tensor ccp_incoming_loss(const torch::Tensor& projections,
                                const torch::Tensor& labels_extended,
                                const PositiveSets& positives,
                                const std::vector<torch::Tensor>& prototypes,
                                const std::vector<int64_t>& proto_class_ids, double temperature);

}  // namespace clbench
