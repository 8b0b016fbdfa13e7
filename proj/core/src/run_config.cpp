#include "clbench/run_config.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace clbench {

std::string to_string(EvalSchedule s) {
  return s == EvalSchedule::boundary ? "boundary" : "even";
}

EvalSchedule eval_schedule_from_string(const std::string& s) {
  if (s == "boundary") return EvalSchedule::boundary;
  if (s == "even") return EvalSchedule::even;
  throw std::invalid_argument("unknown eval schedule: " + s);
}

std::string to_string(InsertionPolicy p) {
  return p == InsertionPolicy::reservoir ? "reservoir" : "class_balanced";
}

InsertionPolicy insertion_policy_from_string(const std::string& s) {
  if (s == "reservoir") return InsertionPolicy::reservoir;
  if (s == "class_balanced") return InsertionPolicy::class_balanced;
  throw std::invalid_argument("unknown insertion policy: " + s);
}

std::string to_string(MomentumTargetMode m) {
  return m == MomentumTargetMode::batch_mean ? "batch_mean" : "buffer_mean";
}

MomentumTargetMode momentum_target_from_string(const std::string& s) {
  if (s == "batch_mean") return MomentumTargetMode::batch_mean;
  if (s == "buffer_mean") return MomentumTargetMode::buffer_mean;
  throw std::invalid_argument("unknown momentum target mode: " + s);
}

std::string to_string(Reduction r) { return r == Reduction::mean ? "mean" : "sum"; }

Reduction reduction_from_string(const std::string& s) {
  if (s == "mean") return Reduction::mean;
  if (s == "sum") return Reduction::sum;
  throw std::invalid_argument("unknown reduction: " + s);
}

nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json doc;
  doc["method"] = to_string(c.method);
  doc["dataset"] = to_string(c.dataset);
  doc["data_dir"] = c.data_dir;
  doc["classes_per_task"] = c.classes_per_task;
  doc["batch_size"] = c.batch_size;
  doc["augment"] = c.augment;
  doc["shuffle_class_order"] = c.shuffle_class_order;
  doc["memory_size"] = c.memory_size;
  doc["memory_is_total"] = c.memory_is_total;
  doc["insertion_policy"] = to_string(c.insertion_policy);
  doc["learning_rate"] = c.learning_rate;
  doc["rehearsal_batch_size"] = c.rehearsal_batch_size;
  doc["temperature"] = c.temperature;
  doc["ema_rate"] = c.ema_rate;
  doc["prototype_momentum"] = c.prototype_momentum;
  doc["momentum_target"] = to_string(c.momentum_target);
  doc["supbyol_literal_targets"] = c.supbyol_literal_targets;
  doc["ce_reduction"] = to_string(c.ce_reduction);
  doc["augment_replay"] = c.augment_replay;
  doc["encoder"] = to_string(c.encoder);
  doc["embedding_dim"] = c.embedding_dim;
  doc["mlp_hidden"] = c.mlp_hidden;
  doc["projector_hidden"] = c.projector_hidden;
  doc["projection_dim"] = c.projection_dim;
  doc["predictor_hidden"] = c.predictor_hidden;
  doc["seeds"] = c.seeds;
  doc["output_dir"] = c.output_dir;
  doc["eval_schedule"] = to_string(c.eval_schedule);
  doc["eval_points"] = c.eval_points;
  doc["checkpoint_every_steps"] = c.checkpoint_every_steps;
  doc["synthetic_classes"] = c.synthetic_classes;
  doc["synthetic_channels"] = c.synthetic_channels;
  doc["synthetic_image_size"] = c.synthetic_image_size;
  doc["synthetic_train_per_class"] = c.synthetic_train_per_class;
  doc["synthetic_test_per_class"] = c.synthetic_test_per_class;
  doc["synthetic_sigma"] = c.synthetic_sigma;
  return doc;
}

namespace {

int64_t get_int(const nlohmann::json& doc, const char* key) {
  const auto& v = doc.at(key);
  if (!v.is_number_integer())
    throw std::invalid_argument(std::string("config key '") + key + "' must be an integer");
  return v.get<int64_t>();
}

double get_double(const nlohmann::json& doc, const char* key) {
  const auto& v = doc.at(key);
  if (!v.is_number())
    throw std::invalid_argument(std::string("config key '") + key + "' must be a number");
  return v.get<double>();
}

bool get_bool(const nlohmann::json& doc, const char* key) {
  const auto& v = doc.at(key);
  if (!v.is_boolean())
    throw std::invalid_argument(std::string("config key '") + key + "' must be a boolean");
  return v.get<bool>();
}

std::string get_string(const nlohmann::json& doc, const char* key) {
  const auto& v = doc.at(key);
  if (!v.is_string())
    throw std::invalid_argument(std::string("config key '") + key + "' must be a string");
  return v.get<std::string>();
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("invalid config: " + what);
}

}  // namespace

RunConfig parse_run_config(const nlohmann::json& doc) {
  if (!doc.is_object()) throw std::invalid_argument("config must be a JSON object");
  nlohmann::json merged = to_json(RunConfig{});
  for (const auto& [key, value] : doc.items()) {
    if (!merged.contains(key)) throw std::invalid_argument("unknown config key: " + key);
    merged[key] = value;
  }

  RunConfig c;
  c.method = method_from_string(get_string(merged, "method"));
  c.dataset = dataset_id_from_string(get_string(merged, "dataset"));
  c.data_dir = get_string(merged, "data_dir");
  c.classes_per_task = get_int(merged, "classes_per_task");
  c.batch_size = get_int(merged, "batch_size");
  c.augment = get_bool(merged, "augment");
  c.shuffle_class_order = get_bool(merged, "shuffle_class_order");
  c.memory_size = get_int(merged, "memory_size");
  c.memory_is_total = get_bool(merged, "memory_is_total");
  c.insertion_policy = insertion_policy_from_string(get_string(merged, "insertion_policy"));
  c.learning_rate = get_double(merged, "learning_rate");
  c.rehearsal_batch_size = get_int(merged, "rehearsal_batch_size");
  c.temperature = get_double(merged, "temperature");
  c.ema_rate = get_double(merged, "ema_rate");
  c.prototype_momentum = get_double(merged, "prototype_momentum");
  c.momentum_target = momentum_target_from_string(get_string(merged, "momentum_target"));
  c.supbyol_literal_targets = get_bool(merged, "supbyol_literal_targets");
  c.ce_reduction = reduction_from_string(get_string(merged, "ce_reduction"));
  c.augment_replay = get_bool(merged, "augment_replay");
  c.encoder = encoder_kind_from_string(get_string(merged, "encoder"));
  c.embedding_dim = get_int(merged, "embedding_dim");
  c.mlp_hidden = get_int(merged, "mlp_hidden");
  c.projector_hidden = get_int(merged, "projector_hidden");
  c.projection_dim = get_int(merged, "projection_dim");
  c.predictor_hidden = get_int(merged, "predictor_hidden");
  {
    const auto& seeds = merged.at("seeds");
    if (!seeds.is_array() || seeds.empty())
      throw std::invalid_argument("config key 'seeds' must be a nonempty array");
    c.seeds.clear();
    for (const auto& s : seeds) {
      if (!s.is_number_integer() || s.get<int64_t>() < 0)
        throw std::invalid_argument("seeds must be non-negative integers");
      c.seeds.push_back(s.get<uint64_t>());
    }
  }
  c.output_dir = get_string(merged, "output_dir");
  c.eval_schedule = eval_schedule_from_string(get_string(merged, "eval_schedule"));
  c.eval_points = get_int(merged, "eval_points");
  c.checkpoint_every_steps = get_int(merged, "checkpoint_every_steps");
  c.synthetic_classes = get_int(merged, "synthetic_classes");
  c.synthetic_channels = get_int(merged, "synthetic_channels");
  c.synthetic_image_size = get_int(merged, "synthetic_image_size");
  c.synthetic_train_per_class = get_int(merged, "synthetic_train_per_class");
  c.synthetic_test_per_class = get_int(merged, "synthetic_test_per_class");
  c.synthetic_sigma = get_double(merged, "synthetic_sigma");

  require(c.classes_per_task >= 1, "classes_per_task must be >= 1");
  require(c.batch_size >= 1, "batch_size must be >= 1");
  require(total_classes(c) % c.classes_per_task == 0,
          "classes_per_task must divide the class count");
  require(c.memory_size >= 1, "memory_size must be >= 1");
  require(c.learning_rate >= 0, "learning_rate must be >= 0");
  require(c.rehearsal_batch_size >= 1, "rehearsal_batch_size must be >= 1");
  require(c.temperature > 0, "temperature must be > 0");
  require(c.ema_rate >= 0 && c.ema_rate <= 1, "ema_rate must lie in [0,1]");
  require(c.prototype_momentum >= 0 && c.prototype_momentum <= 1,
          "prototype_momentum must lie in [0,1]");
  require(c.embedding_dim >= 1 && c.mlp_hidden >= 1 && c.projector_hidden >= 1 &&
              c.projection_dim >= 1 && c.predictor_hidden >= 1,
          "network widths must be >= 1");
  if (c.encoder == EncoderKind::reduced_resnet18)
    require(c.embedding_dim == 160, "reduced_resnet18 fixes embedding_dim at 160");
  require(c.eval_points >= 1, "eval_points must be >= 1");
  require(c.checkpoint_every_steps >= 0, "checkpoint_every_steps must be >= 0");
  require(c.synthetic_classes >= 1 && c.synthetic_channels >= 1 && c.synthetic_image_size >= 1 &&
              c.synthetic_train_per_class >= 1 && c.synthetic_test_per_class >= 1,
          "synthetic dataset dimensions must be >= 1");
  require(c.synthetic_sigma >= 0, "synthetic_sigma must be >= 0");
  return c;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  nlohmann::json doc;
  in >> doc;
  return parse_run_config(doc);
}

void apply_override(nlohmann::json& doc, const std::string& assignment) {
  auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw std::invalid_argument("override must look like key=value: " + assignment);
  std::string key = assignment.substr(0, eq);
  std::string value = assignment.substr(eq + 1);
  auto parsed = nlohmann::json::parse(value, nullptr, false);
  doc[key] = parsed.is_discarded() ? nlohmann::json(value) : parsed;
}

std::string config_hash(const RunConfig& config) {
  std::string canon = to_json(config).dump();
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : canon) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

int64_t total_classes(const RunConfig& config) {
  switch (config.dataset) {
    case DatasetId::cifar10: return 10;
    case DatasetId::cifar100: return 100;
    case DatasetId::synthetic: return config.synthetic_classes;
  }
  throw std::logic_error("unknown DatasetId");
}

int64_t buffer_capacity(const RunConfig& config) {
  return config.memory_is_total ? config.memory_size
                                : config.memory_size * total_classes(config);
}

StreamConfig make_stream_config(const RunConfig& config, uint64_t seed) {
  StreamConfig sc;
  sc.dataset_id = config.dataset;
  sc.classes_per_task = config.classes_per_task;
  sc.batch_size = config.batch_size;
  sc.augment = config.augment;
  sc.seed = seed;
  if (config.shuffle_class_order)
    sc.class_order = shuffled_class_order(total_classes(config), seed);
  sc.data_dir = config.data_dir;
  sc.synthetic.num_classes = config.synthetic_classes;
  sc.synthetic.channels = config.synthetic_channels;
  sc.synthetic.height = config.synthetic_image_size;
  sc.synthetic.width = config.synthetic_image_size;
  sc.synthetic.train_per_class = config.synthetic_train_per_class;
  sc.synthetic.test_per_class = config.synthetic_test_per_class;
  sc.synthetic.cluster_sigma = config.synthetic_sigma;
  return sc;
}

LearnerConfig make_learner_config(const RunConfig& config, uint64_t seed) {
  LearnerConfig lc;
  lc.method = config.method;
  lc.learning_rate = config.learning_rate;
  lc.rehearsal_batch_size = config.rehearsal_batch_size;
  lc.temperature = config.temperature;
  lc.ema_rate = config.ema_rate;
  lc.proto_momentum = config.prototype_momentum;
  lc.momentum_target = config.momentum_target;
  lc.supbyol_literal_targets = config.supbyol_literal_targets;
  lc.ce_reduction = config.ce_reduction;
  lc.augmentation.enabled = config.augment;
  lc.augment_replay = config.augment_replay;
  lc.net.encoder = config.encoder;
  lc.net.in_channels =
      config.dataset == DatasetId::synthetic ? config.synthetic_channels : 3;
  lc.net.image_height =
      config.dataset == DatasetId::synthetic ? config.synthetic_image_size : 32;
  lc.net.image_width = lc.net.image_height;
  lc.net.embedding_dim = config.embedding_dim;
  lc.net.mlp_hidden = config.mlp_hidden;
  lc.net.projector_hidden = config.projector_hidden;
  lc.net.projection_dim = config.projection_dim;
  lc.net.predictor_hidden = config.predictor_hidden;
  lc.total_classes = total_classes(config);
  lc.seed = seed;
  return lc;
}

}  // namespace clbench
