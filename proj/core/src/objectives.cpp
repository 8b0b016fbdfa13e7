#include "clbench/objectives.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace clbench {

namespace {

void check_temperature(double t) {
  if (!(t > 0)) throw std::invalid_argument("temperature must be positive");
}

torch::Tensor checked_norms(const torch::Tensor& m, const char* what) {
  auto norms = m.norm(2, /*dim=*/-1);
  if (!torch::all(norms > 0).item<bool>())
    throw std::domain_error(std::string(what) + ": zero-norm (degenerate) vector");
  return norms;
}

int64_t proto_row(const std::vector<int64_t>& ids, int64_t label, const char* what) {
  auto it = std::find(ids.begin(), ids.end(), label);
  if (it == ids.end())
    throw std::invalid_argument(std::string(what) + ": no prototype registered for class " +
                                std::to_string(label));
  return it - ids.begin();
}

}  // namespace

torch::Tensor cosine_sim(const torch::Tensor& a, const torch::Tensor& b, double temperature) {
  check_temperature(temperature);
  if (a.dim() != 1 || b.dim() != 1 || a.size(0) != b.size(0))
    throw std::invalid_argument("cosine_sim expects 1-D vectors of equal length");
  auto na = checked_norms(a, "cosine_sim");
  auto nb = checked_norms(b, "cosine_sim");
  return a.dot(b) / (temperature * na * nb);
}

torch::Tensor cosine_sim_matrix(const torch::Tensor& a, const torch::Tensor& b,
                                double temperature) {
  check_temperature(temperature);
  if (a.dim() != 2 || b.dim() != 2 || a.size(1) != b.size(1))
    throw std::invalid_argument("cosine_sim_matrix expects [n,d] and [m,d]");
  auto na = checked_norms(a, "cosine_sim_matrix");
  auto nb = checked_norms(b, "cosine_sim_matrix");
  return a.matmul(b.t()) / (temperature * na.unsqueeze(1) * nb.unsqueeze(0));
}

PositiveSets build_positive_sets(const torch::Tensor& labels_extended, int64_t n_raw) {
  if (n_raw < 1) throw std::invalid_argument("positive sets need at least one raw sample");
  if (labels_extended.dim() != 1 || labels_extended.size(0) != 2 * n_raw)
    throw std::invalid_argument("extended batch must hold n_raw raw samples plus their views");
  auto labels = labels_extended.to(torch::kInt64).contiguous();
  const int64_t* lab = labels.data_ptr<int64_t>();
  for (int64_t i = 0; i < n_raw; ++i)
    if (lab[i] != lab[n_raw + i])
      throw std::invalid_argument("view label does not match its raw sample");

  PositiveSets out;
  out.n_raw = n_raw;
  out.positives.resize(n_raw);
  for (int64_t i = 0; i < n_raw; ++i) {
    for (int64_t j = 0; j < n_raw; ++j)
      if (j != i && lab[j] == lab[i]) out.positives[i].push_back(j);
    out.positives[i].push_back(n_raw + i);
  }
  return out;
}

torch::Tensor supbyol_loss(const torch::Tensor& predictions,
                           const torch::Tensor& target_projections, const PositiveSets& positives,
                           const SupByolOptions& opts) {
  const int64_t n = positives.n_raw;
  if (n == 0) throw std::invalid_argument("supbyol_loss: empty batch");
  if (predictions.size(0) != n || target_projections.size(0) != 2 * n)
    throw std::invalid_argument("supbyol_loss: prediction/target row counts do not match");

  auto targets = target_projections.detach();
  auto sims = cosine_sim_matrix(predictions, targets, opts.temperature);  // [N, 2N]

  auto total = torch::zeros({}, predictions.options());
  for (int64_t i = 0; i < n; ++i) {
    const auto& pos = positives.positives[i];
    auto acc = torch::zeros({}, predictions.options());
    for (int64_t p : pos) acc = acc + sims[i][opts.literal_targets ? i : p];
    total = total + acc / static_cast<double>(pos.size());
  }
  return -total / static_cast<double>(n);
}

torch::Tensor buffer_ce_loss(const torch::Tensor& projections, const torch::Tensor& labels,
                             const torch::Tensor& prototypes,
                             const std::vector<int64_t>& proto_class_ids, double temperature,
                             Reduction reduction) {
  if (projections.size(0) == 0) throw std::invalid_argument("buffer_ce_loss: empty batch");
  if (prototypes.size(0) == 0 ||
      prototypes.size(0) != static_cast<int64_t>(proto_class_ids.size()))
    throw std::invalid_argument("buffer_ce_loss: prototype rows must match class ids");

  const int64_t b = projections.size(0);
  auto lab = labels.to(torch::kInt64).contiguous();
  torch::Tensor targets = torch::empty({b}, torch::kInt64);
  for (int64_t i = 0; i < b; ++i)
    targets[i] = proto_row(proto_class_ids, lab[i].item<int64_t>(), "buffer_ce_loss");

  auto logits = cosine_sim_matrix(projections, prototypes, temperature);  // [B, K]
  auto per_sample = torch::nn::functional::cross_entropy(
      logits, targets,
      torch::nn::functional::CrossEntropyFuncOptions().reduction(torch::kNone));
  return reduction == Reduction::mean ? per_sample.mean() : per_sample.sum();
}

torch::Tensor prototype_contrast_term(const std::vector<torch::Tensor>& prototypes,
                                      double temperature) {
  const int64_t k = static_cast<int64_t>(prototypes.size());
  if (k == 0) throw std::invalid_argument("prototype_contrast_term: no prototypes");
  auto total = torch::zeros({}, prototypes[0].options());
  if (k == 1) return total;
  auto stacked = torch::stack(prototypes);  // keeps per-row autograd edges
  auto sims = cosine_sim_matrix(stacked, stacked, temperature);
  // Ordered pairs i != j, so each unordered pair counts twice.
  total = sims.sum() - sims.diagonal().sum();
  return total / static_cast<double>(k);
}

torch::Tensor ccp_incoming_loss(const torch::Tensor& projections,
                                const torch::Tensor& labels_extended,
                                const PositiveSets& positives,
                                const std::vector<torch::Tensor>& prototypes,
                                const std::vector<int64_t>& proto_class_ids, double temperature) {
  const int64_t n = positives.n_raw;
  if (n == 0) throw std::invalid_argument("ccp_incoming_loss: empty batch");
  if (projections.size(0) != 2 * n)
    throw std::invalid_argument("ccp_incoming_loss: projections must cover the extended batch");
  if (prototypes.empty() || prototypes.size() != proto_class_ids.size())
    throw std::invalid_argument("ccp_incoming_loss: prototype rows must match class ids");

  auto lab = labels_extended.to(torch::kInt64).contiguous();
  auto proto_matrix = torch::stack(prototypes);
  auto proto_sims = cosine_sim_matrix(projections, proto_matrix, temperature);  // [2N, K]
  auto self_sims = cosine_sim_matrix(projections, projections, temperature);    // [2N, 2N]

  auto attract = torch::zeros({}, projections.options());
  for (int64_t i = 0; i < n; ++i) {
    int64_t row = proto_row(proto_class_ids, lab[i].item<int64_t>(), "ccp_incoming_loss");
    auto acc = torch::zeros({}, projections.options());
    for (int64_t p : positives.positives[i]) acc = acc + self_sims[i][p];
    attract = attract + proto_sims[i][row] + acc / static_cast<double>(positives.positives[i].size());
  }
  return -attract / static_cast<double>(n) + prototype_contrast_term(prototypes, temperature);
}

}  // namespace clbench
