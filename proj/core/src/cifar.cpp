#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <vector>

#include "clbench/stream.hpp"

namespace clbench {

namespace {

constexpr int64_t kImageBytes = 3 * 32 * 32;

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Parses fixed-size records of [label bytes | image bytes] and appends to
// the output vectors. CIFAR-10 has 1 label byte, CIFAR-100 has 2 (coarse,
// fine) and we keep the one at label_offset.
void parse_records(const std::vector<uint8_t>& raw, int64_t label_bytes, int64_t label_offset,
                   std::vector<float>& images, std::vector<int64_t>& labels,
                   const std::string& path) {
  const int64_t record = label_bytes + kImageBytes;
  if (raw.empty() || static_cast<int64_t>(raw.size()) % record != 0)
    throw std::runtime_error(path + ": size is not a multiple of " + std::to_string(record));
  const int64_t n = static_cast<int64_t>(raw.size()) / record;
  images.reserve(images.size() + n * kImageBytes);
  labels.reserve(labels.size() + n);
  for (int64_t i = 0; i < n; ++i) {
    const uint8_t* rec = raw.data() + i * record;
    labels.push_back(rec[label_offset]);
    for (int64_t b = 0; b < kImageBytes; ++b)
      images.push_back(static_cast<float>(rec[label_bytes + b]) / 255.0f);
  }
}

LabeledBatch to_tensors(std::vector<float>& images, std::vector<int64_t>& labels) {
  const int64_t n = static_cast<int64_t>(labels.size());
  auto im = torch::from_blob(images.data(), {n, 3, 32, 32}, torch::kFloat32).clone();
  auto lab = torch::from_blob(labels.data(), {n}, torch::kInt64).clone();
  return {im, lab};
}

}  // namespace

LabeledDataset load_cifar10(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<float> train_im, test_im;
  std::vector<int64_t> train_lab, test_lab;
  for (int i = 1; i <= 5; ++i) {
    auto path = (fs::path(dir) / ("data_batch_" + std::to_string(i) + ".bin")).string();
    parse_records(read_file(path), 1, 0, train_im, train_lab, path);
  }
  auto test_path = (fs::path(dir) / "test_batch.bin").string();
  parse_records(read_file(test_path), 1, 0, test_im, test_lab, test_path);

  LabeledDataset ds;
  auto train = to_tensors(train_im, train_lab);
  auto test = to_tensors(test_im, test_lab);
  ds.train_images = train.images;
  ds.train_labels = train.labels;
  ds.test_images = test.images;
  ds.test_labels = test.labels;
  ds.num_classes = 10;
  return ds;
}

LabeledDataset load_cifar100(const std::string& dir) {
  namespace fs = std::filesystem;
  std::vector<float> train_im, test_im;
  std::vector<int64_t> train_lab, test_lab;
  auto train_path = (fs::path(dir) / "train.bin").string();
  auto test_path = (fs::path(dir) / "test.bin").string();
  // Record: coarse label, fine label, image. We train on fine labels.
  parse_records(read_file(train_path), 2, 1, train_im, train_lab, train_path);
  parse_records(read_file(test_path), 2, 1, test_im, test_lab, test_path);

  LabeledDataset ds;
  auto train = to_tensors(train_im, train_lab);
  auto test = to_tensors(test_im, test_lab);
  ds.train_images = train.images;
  ds.train_labels = train.labels;
  ds.test_images = test.images;
  ds.test_labels = test.labels;
  ds.num_classes = 100;
  return ds;
}

}  // namespace clbench
