#include "clbench/prototype_store.hpp"

#include <stdexcept>

#include "clbench/objectives.hpp"

namespace clbench {

PrototypeStore::PrototypeStore(const PrototypeStoreOptions& opts)
    : opts_(opts), rng_(opts.seed) {
  if (opts.dim < 1) throw std::invalid_argument("prototype dim must be >= 1");
  if (opts.momentum < 0 || opts.momentum > 1)
    throw std::invalid_argument("momentum must lie in [0,1]");
}

torch::Tensor PrototypeStore::normalized(const torch::Tensor& v, const char* what) const {
  auto norm = v.norm();
  if (!(norm.item<double>() > 0))
    throw std::domain_error(std::string(what) + ": zero-norm prototype");
  return v / norm;
}

torch::Tensor PrototypeStore::register_class(int64_t class_id) {
  if (prototypes_.count(class_id))
    throw std::invalid_argument("class " + std::to_string(class_id) + " already registered");
  torch::Tensor v = torch::empty({opts_.dim}, torch::TensorOptions().dtype(opts_.dtype));
  {
    torch::NoGradGuard no_grad;
    auto host = torch::empty({opts_.dim}, torch::kFloat64);
    auto acc = host.accessor<double, 1>();
    for (int64_t d = 0; d < opts_.dim; ++d) acc[d] = rand_normal(rng_);
    v.copy_(host);
  }
  auto proto = normalized(v, "register_class");
  prototypes_[class_id] = proto;
  order_.push_back(class_id);
  return proto;
}

void PrototypeStore::set_incoming(const torch::Tensor& labels) {
  auto lab = labels.to(torch::kInt64).contiguous();
  incoming_.clear();
  const int64_t* p = lab.numel() > 0 ? lab.data_ptr<int64_t>() : nullptr;
  for (int64_t i = 0; i < lab.numel(); ++i) {
    if (!prototypes_.count(p[i])) register_class(p[i]);
    incoming_.insert(p[i]);
  }
}

torch::Tensor PrototypeStore::prototype(int64_t id) const {
  auto it = prototypes_.find(id);
  if (it == prototypes_.end())
    throw std::invalid_argument("class " + std::to_string(id) + " not registered");
  return it->second;
}

std::vector<int64_t> PrototypeStore::registered_ids() const {
  std::vector<int64_t> ids;
  ids.reserve(prototypes_.size());
  for (const auto& [id, _] : prototypes_) ids.push_back(id);
  return ids;
}

bool PrototypeStore::is_trainable(int64_t id) const {
  if (!prototypes_.count(id)) return false;
  return !opts_.mask_old_classes || incoming_.count(id) > 0;
}

ProtoStepTensors PrototypeStore::begin_step() const {
  ProtoStepTensors step;
  for (const auto& [id, proto] : prototypes_) {
    step.class_ids.push_back(id);
    bool trainable = is_trainable(id);
    step.trainable.push_back(trainable);
    step.rows.push_back(trainable ? proto.clone().requires_grad_(true) : proto);
  }
  return step;
}

void PrototypeStore::apply_gradient_step(const ProtoStepTensors& step, double learning_rate) {
  torch::NoGradGuard no_grad;
  for (size_t i = 0; i < step.class_ids.size(); ++i) {
    if (!step.trainable[i]) continue;
    const auto& row = step.rows[i];
    if (!row.grad().defined()) continue;  // loss did not touch this prototype
    auto updated = row.detach() - learning_rate * row.grad();
    prototypes_[step.class_ids[i]] = normalized(updated, "apply_gradient_step");
  }
}

void PrototypeStore::momentum_update(const torch::Tensor& projections,
                                     const torch::Tensor& labels) {
  torch::NoGradGuard no_grad;
  auto lab = labels.to(torch::kInt64).contiguous();
  const int64_t n = lab.numel();
  auto z = projections.detach();
  last_cbar_.clear();

  std::map<int64_t, std::vector<int64_t>> rows_by_class;
  const int64_t* p = n > 0 ? lab.data_ptr<int64_t>() : nullptr;
  for (int64_t i = 0; i < n; ++i) {
    if (!prototypes_.count(p[i]))
      throw std::invalid_argument("momentum_update: class " + std::to_string(p[i]) +
                                  " not registered");
    rows_by_class[p[i]].push_back(i);
  }

  const double alpha = opts_.momentum;
  for (const auto& [id, rows] : rows_by_class) {
    if (incoming_.count(id)) continue;  // incoming classes train by gradient
    std::vector<torch::Tensor> zs;
    zs.reserve(rows.size());
    for (int64_t r : rows) zs.push_back(z[r]);
    auto cbar = normalized(torch::stack(zs).mean(0), "momentum_update");
    last_cbar_[id] = cbar;
    auto mixed = alpha * prototypes_[id] + (1.0 - alpha) * cbar;
    prototypes_[id] = normalized(mixed, "momentum_update");
  }
}

int64_t PrototypeStore::classify(const torch::Tensor& projection) const {
  if (prototypes_.empty()) throw std::logic_error("classify: empty prototype store");
  int64_t best_id = -1;
  double best = 0;
  // std::map iterates ids ascending, so strict > breaks ties to lowest id.
  for (const auto& [id, proto] : prototypes_) {
    double s = cosine_sim(projection, proto, 1.0).item<double>();
    if (best_id < 0 || s > best) {
      best = s;
      best_id = id;
    }
  }
  return best_id;
}

torch::Tensor PrototypeStore::classify_batch(const torch::Tensor& projections) const {
  if (prototypes_.empty()) throw std::logic_error("classify_batch: empty prototype store");
  std::vector<torch::Tensor> rows;
  std::vector<int64_t> ids;
  for (const auto& [id, proto] : prototypes_) {
    ids.push_back(id);
    rows.push_back(proto);
  }
  auto sims = cosine_sim_matrix(projections.to(rows[0].dtype()), torch::stack(rows), 1.0)
                  .to(torch::kFloat64)
                  .contiguous();
  auto out = torch::empty({projections.size(0)}, torch::kInt64);
  auto out_acc = out.accessor<int64_t, 1>();
  auto sim_acc = sims.accessor<double, 2>();
  const int64_t k = static_cast<int64_t>(ids.size());
  for (int64_t i = 0; i < out.size(0); ++i) {
    int64_t best = 0;
    // ids ascend, so strict > breaks ties to the lowest class id
    for (int64_t c = 1; c < k; ++c)
      if (sim_acc[i][c] > sim_acc[i][best]) best = c;
    out_acc[i] = ids[best];
  }
  return out;
}

PrototypeStore::Snapshot PrototypeStore::snapshot() const {
  Snapshot snap;
  snap.order = order_;
  snap.incoming.assign(incoming_.begin(), incoming_.end());
  snap.rng_state = rng_state_to_string(rng_);
  if (!order_.empty()) {
    std::vector<torch::Tensor> rows;
    for (int64_t id : order_) rows.push_back(prototypes_.at(id));
    snap.matrix = torch::stack(rows);
  }
  return snap;
}

void PrototypeStore::restore(const Snapshot& snap) {
  prototypes_.clear();
  order_ = snap.order;
  incoming_.clear();
  incoming_.insert(snap.incoming.begin(), snap.incoming.end());
  rng_ = rng_from_string(snap.rng_state);
  last_cbar_.clear();
  for (size_t i = 0; i < order_.size(); ++i) prototypes_[order_[i]] = snap.matrix[i].clone();
}

}  // namespace clbench
