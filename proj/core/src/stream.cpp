#include "clbench/stream.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <stdexcept>

namespace clbench {

std::string to_string(DatasetId id) {
  switch (id) {
    case DatasetId::cifar10: return "cifar10";
    case DatasetId::cifar100: return "cifar100";
    case DatasetId::synthetic: return "synthetic";
  }
  throw std::logic_error("unknown DatasetId");
}

DatasetId dataset_id_from_string(const std::string& s) {
  if (s == "cifar10") return DatasetId::cifar10;
  if (s == "cifar100") return DatasetId::cifar100;
  if (s == "synthetic") return DatasetId::synthetic;
  throw std::invalid_argument("unknown dataset: " + s);
}

int64_t TaskStream::total_train_batches() const {
  int64_t n = 0;
  for (const auto& t : tasks_) n += static_cast<int64_t>(t.batches.size());
  return n;
}

const std::vector<int64_t>& TaskStream::task_classes(int64_t task) const {
  return tasks_.at(task).classes;
}

const std::vector<LabeledBatch>& TaskStream::task_batches(int64_t task) const {
  return tasks_.at(task).batches;
}

const LabeledBatch& TaskStream::task_test_set(int64_t task) const {
  return tasks_.at(task).test_set;
}

namespace {

torch::Tensor index_rows(const torch::Tensor& t, const std::vector<int64_t>& idx) {
  auto index = torch::from_blob(const_cast<int64_t*>(idx.data()),
                                {static_cast<int64_t>(idx.size())}, torch::kInt64)
                   .clone();
  return t.index_select(0, index);
}

}  // namespace

TaskStream build_stream(const StreamConfig& config, const LabeledDataset& dataset) {
  if (config.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const int64_t k = dataset.num_classes;
  if (k <= 0 || dataset.train_labels.numel() == 0)
    throw std::invalid_argument("build_stream: empty dataset");
  if (config.classes_per_task < 1 || k % config.classes_per_task != 0)
    throw std::invalid_argument("classes_per_task must divide the class count (" +
                                std::to_string(k) + ")");

  std::vector<int64_t> order = config.class_order;
  if (order.empty()) {
    order.resize(k);
    for (int64_t c = 0; c < k; ++c) order[c] = c;
  } else {
    std::vector<int64_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    bool ok = static_cast<int64_t>(sorted.size()) == k;
    for (int64_t c = 0; ok && c < k; ++c) ok = sorted[c] == c;
    if (!ok)
      throw std::invalid_argument("class_order must be a permutation of 0.." +
                                  std::to_string(k - 1));
  }

  // Train labels must cover exactly the class set 0..k-1.
  auto labels = dataset.train_labels.to(torch::kInt64).contiguous();
  const int64_t n_train = labels.size(0);
  std::vector<std::vector<int64_t>> by_class(k);
  {
    const int64_t* lab = labels.data_ptr<int64_t>();
    for (int64_t i = 0; i < n_train; ++i) {
      if (lab[i] < 0 || lab[i] >= k)
        throw std::invalid_argument("train label out of range: " + std::to_string(lab[i]));
      by_class[lab[i]].push_back(i);
    }
  }
  for (int64_t c = 0; c < k; ++c)
    if (by_class[c].empty())
      throw std::invalid_argument("class " + std::to_string(c) + " has no train samples");

  auto test_labels = dataset.test_labels.to(torch::kInt64).contiguous();
  std::vector<std::vector<int64_t>> test_by_class(k);
  {
    const int64_t* lab = test_labels.data_ptr<int64_t>();
    for (int64_t i = 0; i < test_labels.size(0); ++i) {
      if (lab[i] < 0 || lab[i] >= k)
        throw std::invalid_argument("test label out of range: " + std::to_string(lab[i]));
      test_by_class[lab[i]].push_back(i);
    }
  }

  Rng rng(derive_seed(config.seed, "stream-shuffle"));
  const int64_t num_tasks = k / config.classes_per_task;
  TaskStream stream;
  stream.tasks_.resize(num_tasks);

  auto train_images = dataset.train_images.to(torch::kFloat32);
  auto test_images = dataset.test_images.to(torch::kFloat32);

  for (int64_t t = 0; t < num_tasks; ++t) {
    auto& task = stream.tasks_[t];
    std::vector<int64_t> train_idx, test_idx;
    for (int64_t s = 0; s < config.classes_per_task; ++s) {
      int64_t c = order[t * config.classes_per_task + s];
      task.classes.push_back(c);
      train_idx.insert(train_idx.end(), by_class[c].begin(), by_class[c].end());
      test_idx.insert(test_idx.end(), test_by_class[c].begin(), test_by_class[c].end());
    }
    shuffle_indices(train_idx, rng);

    const int64_t n = static_cast<int64_t>(train_idx.size());
    for (int64_t start = 0; start < n; start += config.batch_size) {
      int64_t stop = std::min(start + config.batch_size, n);
      std::vector<int64_t> chunk(train_idx.begin() + start, train_idx.begin() + stop);
      task.batches.push_back({index_rows(train_images, chunk), index_rows(labels, chunk)});
    }
    task.test_set = {index_rows(test_images, test_idx), index_rows(test_labels, test_idx)};
  }
  return stream;
}

TaskStream open_stream(const StreamConfig& config) {
  switch (config.dataset_id) {
    case DatasetId::cifar10: return build_stream(config, load_cifar10(config.data_dir));
    case DatasetId::cifar100: return build_stream(config, load_cifar100(config.data_dir));
    case DatasetId::synthetic:
      return build_stream(config,
                          make_synthetic(config.synthetic, derive_seed(config.seed, "synthetic")));
  }
  throw std::logic_error("unknown DatasetId");
}

LabeledBatch augment(const LabeledBatch& batch, const AugmentationPolicy& policy, Rng& rng) {
  if (batch.size() == 0) throw std::invalid_argument("augment: empty batch");
  if (!policy.enabled) return {batch.images.clone(), batch.labels.clone()};

  auto images = batch.images.contiguous();
  const int64_t n = images.size(0), h = images.size(2), w = images.size(3);
  const int64_t p = policy.crop_padding;

  torch::Tensor out = torch::empty_like(images);
  torch::Tensor padded =
      p > 0 ? torch::constant_pad_nd(images, {p, p, p, p}, 0.0) : images;

  for (int64_t i = 0; i < n; ++i) {
    int64_t top = 0, left = 0;
    if (p > 0) {
      top = static_cast<int64_t>(rand_below(rng, 2 * p + 1));
      left = static_cast<int64_t>(rand_below(rng, 2 * p + 1));
    }
    auto view = padded[i].slice(1, top, top + h).slice(2, left, left + w);
    bool flip = rand_unit(rng) < policy.flip_probability;
    out[i].copy_(flip ? view.flip(2) : view);
  }
  return {out, batch.labels.clone()};
}

LabeledDataset make_synthetic(const SyntheticSpec& spec, uint64_t seed) {
  if (spec.num_classes < 1) throw std::invalid_argument("synthetic: num_classes must be >= 1");
  const int64_t dim = spec.channels * spec.height * spec.width;
  Rng rng(seed);

  // Class means sit inside [0.2, 0.8] so sigma-noise rarely clips.
  torch::Tensor means = torch::empty({spec.num_classes, dim}, torch::kFloat32);
  {
    auto m = means.accessor<float, 2>();
    for (int64_t c = 0; c < spec.num_classes; ++c)
      for (int64_t d = 0; d < dim; ++d)
        m[c][d] = static_cast<float>(0.2 + 0.6 * rand_unit(rng));
  }

  auto sample_split = [&](int64_t per_class) {
    const int64_t n = spec.num_classes * per_class;
    torch::Tensor images = torch::empty({n, dim}, torch::kFloat32);
    torch::Tensor labels = torch::empty({n}, torch::kInt64);
    auto im = images.accessor<float, 2>();
    auto lab = labels.accessor<int64_t, 1>();
    auto mn = means.accessor<float, 2>();
    int64_t row = 0;
    for (int64_t c = 0; c < spec.num_classes; ++c) {
      for (int64_t s = 0; s < per_class; ++s, ++row) {
        lab[row] = c;
        for (int64_t d = 0; d < dim; ++d) {
          double v = mn[c][d] + spec.cluster_sigma * rand_normal(rng);
          im[row][d] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }
    return std::pair{images.view({n, spec.channels, spec.height, spec.width}), labels};
  };

  LabeledDataset ds;
  std::tie(ds.train_images, ds.train_labels) = sample_split(spec.train_per_class);
  std::tie(ds.test_images, ds.test_labels) = sample_split(spec.test_per_class);
  ds.num_classes = spec.num_classes;
  return ds;
}

std::vector<int64_t> shuffled_class_order(int64_t num_classes, uint64_t seed) {
  std::vector<int64_t> order(num_classes);
  for (int64_t c = 0; c < num_classes; ++c) order[c] = c;
  Rng rng(derive_seed(seed, "class-order"));
  shuffle_indices(order, rng);
  return order;
}

}  // namespace clbench
