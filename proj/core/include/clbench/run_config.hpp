#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "clbench/learners.hpp"
#include "clbench/replay_buffer.hpp"
#include "clbench/stream.hpp"

namespace clbench {

enum class EvalSchedule { boundary, even };

std::string to_string(EvalSchedule s);
EvalSchedule eval_schedule_from_string(const std::string& s);
std::string to_string(InsertionPolicy p);
InsertionPolicy insertion_policy_from_string(const std::string& s);
std::string to_string(MomentumTargetMode m);
MomentumTargetMode momentum_target_from_string(const std::string& s);
std::string to_string(Reduction r);
Reduction reduction_from_string(const std::string& s);

/// Flat experiment configuration. JSON documents use exactly these keys;
/// unknown keys abort before training starts.
struct RunConfig {
  Method method = Method::ccp;
  DatasetId dataset = DatasetId::synthetic;
  std::string data_dir = "data";
  int64_t classes_per_task = 1;
  int64_t batch_size = 10;
  bool augment = true;
  /// Replaces the natural 0..K-1 class order with a seed-derived
  /// permutation (per seed).
  bool shuffle_class_order = false;

  /// Buffer size parameter M. Capacity is M samples per dataset class
  /// unless memory_is_total makes M the total slot count.
  int64_t memory_size = 100;
  bool memory_is_total = false;
  InsertionPolicy insertion_policy = InsertionPolicy::reservoir;

  double learning_rate = 0.1;
  int64_t rehearsal_batch_size = 10;
  double temperature = 0.2;
  double ema_rate = 0.99;
  double prototype_momentum = 0.9;
  MomentumTargetMode momentum_target = MomentumTargetMode::batch_mean;
  bool supbyol_literal_targets = false;
  Reduction ce_reduction = Reduction::mean;
  bool augment_replay = false;

  EncoderKind encoder = EncoderKind::reduced_resnet18;
  int64_t embedding_dim = 160;
  int64_t mlp_hidden = 64;
  int64_t projector_hidden = 256;
  int64_t projection_dim = 128;
  int64_t predictor_hidden = 256;

  std::vector<uint64_t> seeds = {0};
  std::string output_dir = "runs";
  EvalSchedule eval_schedule = EvalSchedule::boundary;
  /// Number of evenly spaced evaluation points (even schedule only).
  int64_t eval_points = 10;
  /// Save a resumable checkpoint every this many steps; 0 disables
  /// intermediate checkpoints (final state is always saved).
  int64_t checkpoint_every_steps = 0;

  int64_t synthetic_classes = 10;
  int64_t synthetic_channels = 1;
  int64_t synthetic_image_size = 4;
  int64_t synthetic_train_per_class = 200;
  int64_t synthetic_test_per_class = 50;
  double synthetic_sigma = 0.05;
};

/// Full round-trip document with every key materialized; keys sort
/// alphabetically on dump, which makes the hash canonical.
nlohmann::json to_json(const RunConfig& config);

/// Strict parse: rejects unknown keys and wrongly typed values, fills
/// unspecified keys with defaults, validates ranges.
RunConfig parse_run_config(const nlohmann::json& doc);
RunConfig load_run_config(const std::string& path);

/// Applies `key=value` to a config document before parsing. The value is
/// read as JSON when it parses as such, as a bare string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// 16 hex digits over the canonical document, stable across processes.
std::string config_hash(const RunConfig& config);

int64_t total_classes(const RunConfig& config);
int64_t buffer_capacity(const RunConfig& config);

StreamConfig make_stream_config(const RunConfig& config, uint64_t seed);
LearnerConfig make_learner_config(const RunConfig& config, uint64_t seed);

}  // namespace clbench
