#include "clbench/replay_buffer.hpp"

#include <algorithm>
#include <stdexcept>

namespace clbench {

ReplayBuffer::ReplayBuffer(int64_t capacity, uint64_t seed, InsertionPolicy policy)
    : capacity_(capacity), policy_(policy), rng_(seed) {
  if (capacity < 1) throw std::invalid_argument("buffer capacity must be >= 1");
}

void ReplayBuffer::observe(const LabeledBatch& batch) {
  const int64_t n = batch.size();
  auto labels = batch.labels.to(torch::kInt64).contiguous();
  const int64_t* lab = n > 0 ? labels.data_ptr<int64_t>() : nullptr;
  for (int64_t i = 0; i < n; ++i) {
    auto image = batch.images[i].clone();
    ++observed_;
    ++observed_per_class_[lab[i]];
    if (policy_ == InsertionPolicy::reservoir)
      insert_reservoir(image, lab[i]);
    else
      insert_balanced(image, lab[i]);
  }
}

void ReplayBuffer::insert_reservoir(const torch::Tensor& image, int64_t label) {
  if (size() < capacity_) {
    images_.push_back(image);
    labels_.push_back(label);
    return;
  }
  // observed_ already counts this sample; j ~ Uniform{0..observed_-1}.
  uint64_t j = rand_below(rng_, static_cast<uint64_t>(observed_));
  if (j < static_cast<uint64_t>(capacity_)) {
    images_[j] = image;
    labels_[j] = label;
  }
}

void ReplayBuffer::insert_balanced(const torch::Tensor& image, int64_t label) {
  if (size() < capacity_) {
    images_.push_back(image);
    labels_.push_back(label);
    return;
  }
  std::map<int64_t, std::vector<int64_t>> slots_by_class;
  for (int64_t i = 0; i < size(); ++i) slots_by_class[labels_[i]].push_back(i);

  int64_t largest = slots_by_class.begin()->first;
  for (const auto& [c, v] : slots_by_class)
    if (v.size() > slots_by_class[largest].size()) largest = c;

  const int64_t own = slots_by_class.count(label) ? slots_by_class[label].size() : 0;
  if (own < static_cast<int64_t>(slots_by_class[largest].size())) {
    // Evict from the most represented class.
    const auto& victims = slots_by_class[largest];
    int64_t v = victims[rand_below(rng_, victims.size())];
    images_[v] = image;
    labels_[v] = label;
  } else {
    // Own class is (one of) the largest: reservoir within the class.
    uint64_t j = rand_below(rng_, static_cast<uint64_t>(observed_per_class_[label]));
    if (j < static_cast<uint64_t>(own)) {
      const auto& mine = slots_by_class[label];
      int64_t v = mine[rand_below(rng_, mine.size())];
      images_[v] = image;
      labels_[v] = label;
    }
  }
}

std::optional<LabeledBatch> ReplayBuffer::sample(int64_t n) {
  if (empty()) return std::nullopt;
  if (n < 0) throw std::invalid_argument("sample: n must be >= 0");

  std::vector<int64_t> picks(n);
  if (n <= size()) {
    // Without replacement: partial Fisher-Yates over slot indices.
    std::vector<int64_t> idx(size());
    for (int64_t i = 0; i < size(); ++i) idx[i] = i;
    for (int64_t i = 0; i < n; ++i) {
      int64_t j = i + static_cast<int64_t>(rand_below(rng_, static_cast<uint64_t>(size() - i)));
      std::swap(idx[i], idx[j]);
      picks[i] = idx[i];
    }
  } else {
    for (int64_t i = 0; i < n; ++i)
      picks[i] = static_cast<int64_t>(rand_below(rng_, static_cast<uint64_t>(size())));
  }

  std::vector<torch::Tensor> ims;
  torch::Tensor labels = torch::empty({n}, torch::kInt64);
  auto lab = labels.accessor<int64_t, 1>();
  ims.reserve(n);
  for (int64_t i = 0; i < n; ++i) {
    ims.push_back(images_[picks[i]]);
    lab[i] = labels_[picks[i]];
  }
  torch::Tensor images = n > 0 ? torch::stack(ims)
                               : torch::empty({0}, torch::kFloat32);
  return LabeledBatch{images, labels};
}

LabeledBatch ReplayBuffer::samples_of_class(int64_t label) const {
  std::vector<torch::Tensor> ims;
  std::vector<int64_t> labs;
  for (int64_t i = 0; i < size(); ++i) {
    if (labels_[i] == label) {
      ims.push_back(images_[i]);
      labs.push_back(label);
    }
  }
  if (ims.empty()) return {torch::empty({0}), torch::empty({0}, torch::kInt64)};
  auto labels =
      torch::from_blob(labs.data(), {static_cast<int64_t>(labs.size())}, torch::kInt64).clone();
  return {torch::stack(ims), labels};
}

ReplayBuffer::Snapshot ReplayBuffer::snapshot() const {
  Snapshot snap;
  snap.capacity = capacity_;
  snap.observed = observed_;
  snap.rng_state = rng_state_to_string(rng_);
  snap.policy = policy_;
  snap.observed_per_class = observed_per_class_;
  if (!labels_.empty()) {
    snap.images = torch::stack(images_);
    snap.labels = torch::from_blob(const_cast<int64_t*>(labels_.data()),
                                   {static_cast<int64_t>(labels_.size())}, torch::kInt64)
                      .clone();
  }
  return snap;
}

ReplayBuffer ReplayBuffer::restore(const Snapshot& snap) {
  ReplayBuffer buf(snap.capacity, 0, snap.policy);
  buf.observed_ = snap.observed;
  buf.rng_ = rng_from_string(snap.rng_state);
  buf.observed_per_class_ = snap.observed_per_class;
  if (snap.labels.defined() && snap.labels.numel() > 0) {
    auto lab = snap.labels.accessor<int64_t, 1>();
    for (int64_t i = 0; i < snap.labels.size(0); ++i) {
      buf.images_.push_back(snap.images[i].clone());
      buf.labels_.push_back(lab[i]);
    }
  }
  return buf;
}

}  // namespace clbench
