#include "clbench/runner.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <set>
#include <stdexcept>

#include "clbench/aggregate.hpp"
#include "clbench/checkpoint.hpp"

namespace fs = std::filesystem;

namespace clbench {

std::string version_string() { return "clbench 0.1.0"; }

std::string run_dir_for(const RunConfig& config) {
  return config.output_dir + "/" + to_string(config.method) + "-" + config_hash(config);
}

std::string seed_dir_for(const RunConfig& config, uint64_t seed) {
  return run_dir_for(config) + "/seed-" + std::to_string(seed);
}

std::string metrics_header_line() {
  return R"({"schema":"clbench-metrics-1"})";
}

std::string metrics_line(const EvalRow& row) {
  nlohmann::json doc;
  doc["step"] = row.step;
  doc["tasks_seen"] = row.tasks_seen;
  doc["classes_seen"] = row.classes_seen;
  doc["per_task_accuracy"] = row.per_task_accuracy;
  doc["mean_accuracy"] = row.mean_accuracy;
  if (row.forgetting)
    doc["forgetting"] = *row.forgetting;
  else
    doc["forgetting"] = nullptr;
  return doc.dump();
}

std::optional<double> forgetting_or_null(const EvalMatrix& matrix) {
  const int64_t t = matrix.num_phases();
  if (t < 2) return std::nullopt;
  const auto& rows = matrix.rows();
  for (int64_t j = 0; j <= t - 2; ++j) {
    if (j >= static_cast<int64_t>(rows[t - 1].size())) return std::nullopt;
    bool seen = false;
    for (int64_t l = j; l <= t - 2 && !seen; ++l)
      seen = j < static_cast<int64_t>(rows[l].size());
    if (!seen) return std::nullopt;
  }
  return forgetting(matrix);
}

namespace {

struct FlatStream {
  std::vector<std::pair<int64_t, const LabeledBatch*>> batches;  // (task, batch)
  std::vector<int64_t> boundary_steps;  // 1-based step at each task end
};

FlatStream flatten(const TaskStream& stream) {
  FlatStream flat;
  int64_t step = 0;
  for (int64_t t = 0; t < stream.num_tasks(); ++t) {
    for (const auto& b : stream.task_batches(t)) flat.batches.push_back({t, &b});
    step += static_cast<int64_t>(stream.task_batches(t).size());
    flat.boundary_steps.push_back(step);
  }
  return flat;
}

std::vector<int64_t> eval_steps_for(const RunConfig& config, const FlatStream& flat) {
  if (config.eval_schedule == EvalSchedule::boundary) return flat.boundary_steps;
  return anytime_schedule(static_cast<int64_t>(flat.batches.size()), config.eval_points);
}

nlohmann::json buffer_meta(const ReplayBuffer::Snapshot& snap) {
  nlohmann::json doc;
  doc["capacity"] = snap.capacity;
  doc["observed"] = snap.observed;
  doc["rng"] = snap.rng_state;
  doc["policy"] = to_string(snap.policy);
  nlohmann::json per_class = nlohmann::json::array();
  for (const auto& [label, count] : snap.observed_per_class)
    per_class.push_back({label, count});
  doc["observed_per_class"] = per_class;
  return doc;
}

ReplayBuffer::Snapshot buffer_snapshot_from(const Checkpoint& ckpt) {
  ReplayBuffer::Snapshot snap;
  const auto& doc = ckpt.meta.at("buffer");
  snap.capacity = doc.at("capacity").get<int64_t>();
  snap.observed = doc.at("observed").get<int64_t>();
  snap.rng_state = doc.at("rng").get<std::string>();
  snap.policy = insertion_policy_from_string(doc.at("policy").get<std::string>());
  for (const auto& pair : doc.at("observed_per_class"))
    snap.observed_per_class[pair.at(0).get<int64_t>()] = pair.at(1).get<int64_t>();
  if (ckpt.has("buffer/images")) {
    snap.images = ckpt.get("buffer/images");
    snap.labels = ckpt.get("buffer/labels");
  }
  return snap;
}

void save_run_checkpoint(const std::string& path, const RunConfig& config, uint64_t seed,
                         int64_t step, const Learner& learner,
                         const std::shared_ptr<ReplayBuffer>& buffer, const EvalMatrix& matrix,
                         const std::vector<std::string>& lines) {
  Checkpoint ckpt;
  ckpt.meta["runner"]["version"] = version_string();
  ckpt.meta["runner"]["config_hash"] = config_hash(config);
  ckpt.meta["runner"]["seed"] = seed;
  ckpt.meta["runner"]["step"] = step;
  ckpt.meta["runner"]["matrix"] = matrix.rows();
  ckpt.meta["runner"]["metrics_lines"] = lines;
  learner.save_state(ckpt, "learner");
  if (buffer) {
    auto snap = buffer->snapshot();
    ckpt.meta["buffer"] = buffer_meta(snap);
    if (snap.images.defined()) {
      ckpt.put("buffer/images", snap.images);
      ckpt.put("buffer/labels", snap.labels);
    }
  }
  ckpt.save(path);
}

EvalRow row_from_line(const std::string& line) {
  auto doc = nlohmann::json::parse(line);
  EvalRow row;
  row.step = doc.at("step").get<int64_t>();
  row.tasks_seen = doc.at("tasks_seen").get<int64_t>();
  row.classes_seen = doc.at("classes_seen").get<int64_t>();
  row.per_task_accuracy = doc.at("per_task_accuracy").get<std::vector<double>>();
  row.mean_accuracy = doc.at("mean_accuracy").get<double>();
  if (!doc.at("forgetting").is_null()) row.forgetting = doc.at("forgetting").get<double>();
  return row;
}

}  // namespace

SeedRunResult run_seed(const RunConfig& config, uint64_t seed, bool resume,
                       int64_t stop_after_step) {
  auto t_start = std::chrono::steady_clock::now();

  auto stream = open_stream(make_stream_config(config, seed));
  auto flat = flatten(stream);
  const int64_t stream_length = static_cast<int64_t>(flat.batches.size());
  auto eval_steps = eval_steps_for(config, flat);
  std::set<int64_t> eval_set(eval_steps.begin(), eval_steps.end());

  SeedRunResult result;
  result.seed = seed;
  result.seed_dir = seed_dir_for(config, seed);
  fs::create_directories(result.seed_dir);
  const std::string metrics_path = result.seed_dir + "/metrics.jsonl";
  const std::string checkpoint_path = result.seed_dir + "/checkpoint.bin";
  const std::string record_path = result.seed_dir + "/record.json";

  std::shared_ptr<ReplayBuffer> buffer;
  if (config.method != Method::finetune)
    buffer = std::make_shared<ReplayBuffer>(buffer_capacity(config), derive_seed(seed, "buffer"),
                                            config.insertion_policy);
  auto learner = make_learner(make_learner_config(config, seed), buffer);

  int64_t start_step = 0;
  std::vector<std::string> lines;
  if (resume) {
    if (!fs::exists(checkpoint_path))
      throw std::runtime_error("no checkpoint to resume from: " + checkpoint_path);
    auto ckpt = Checkpoint::load(checkpoint_path);
    const auto& meta = ckpt.meta.at("runner");
    if (meta.at("config_hash").get<std::string>() != config_hash(config))
      throw std::runtime_error("checkpoint was produced by a different config");
    if (meta.at("seed").get<uint64_t>() != seed)
      throw std::runtime_error("checkpoint was produced by a different seed");
    start_step = meta.at("step").get<int64_t>();
    learner->load_state(ckpt, "learner");
    if (buffer) *buffer = ReplayBuffer::restore(buffer_snapshot_from(ckpt));
    for (const auto& row : meta.at("matrix"))
      result.matrix.append_row(row.get<std::vector<double>>());
    lines = meta.at("metrics_lines").get<std::vector<std::string>>();
    for (const auto& line : lines) result.rows.push_back(row_from_line(line));
    result.resumed = true;
  }

  std::ofstream metrics(metrics_path, std::ios::trunc);
  if (!metrics) throw std::runtime_error("cannot write " + metrics_path);
  metrics << metrics_header_line() << "\n";
  for (const auto& line : lines) metrics << line << "\n";
  metrics.flush();

  for (int64_t step = start_step + 1; step <= stream_length; ++step) {
    const auto& [task, batch] = flat.batches[step - 1];
    learner->observe_batch(*batch);

    if (eval_set.count(step)) {
      const int64_t tasks_seen = task + 1;
      std::vector<LabeledBatch> test_sets;
      test_sets.reserve(tasks_seen);
      for (int64_t t = 0; t < tasks_seen; ++t) test_sets.push_back(stream.task_test_set(t));
      Predictor predict = [&](const torch::Tensor& images) { return learner->predict(images); };
      EvalRow row;
      row.step = step;
      row.tasks_seen = tasks_seen;
      row.classes_seen = static_cast<int64_t>(learner->seen_classes().size());
      row.per_task_accuracy = evaluate_seen(predict, test_sets);
      double total = 0;
      for (double a : row.per_task_accuracy) total += a;
      row.mean_accuracy = total / static_cast<double>(row.per_task_accuracy.size());
      result.matrix.append_row(row.per_task_accuracy);
      row.forgetting = forgetting_or_null(result.matrix);
      lines.push_back(metrics_line(row));
      metrics << lines.back() << "\n";
      metrics.flush();
      result.rows.push_back(row);
    }

    const bool stopping = stop_after_step > 0 && step == stop_after_step;
    const bool cadence_hit =
        config.checkpoint_every_steps > 0 && step % config.checkpoint_every_steps == 0;
    if (stopping || (cadence_hit && step != stream_length))
      save_run_checkpoint(checkpoint_path, config, seed, step, *learner, buffer, result.matrix,
                          lines);
    if (stopping) {
      result.completed = false;
      auto t_end = std::chrono::steady_clock::now();
      result.wall_clock_seconds = std::chrono::duration<double>(t_end - t_start).count();
      return result;
    }
  }

  if (result.rows.empty()) throw std::logic_error("run produced no evaluation rows");
  result.final_mean_accuracy = result.rows.back().mean_accuracy;
  result.final_forgetting = result.rows.back().forgetting;

  save_run_checkpoint(checkpoint_path, config, seed, stream_length, *learner, buffer,
                      result.matrix, lines);

  auto t_end = std::chrono::steady_clock::now();
  result.wall_clock_seconds = std::chrono::duration<double>(t_end - t_start).count();

  nlohmann::json record;
  record["version"] = version_string();
  record["metrics_schema"] = "clbench-metrics-1";
  record["config"] = to_json(config);
  record["config_hash"] = config_hash(config);
  record["seed"] = seed;
  record["resumed"] = result.resumed;
  record["wall_clock_seconds"] = result.wall_clock_seconds;
  record["final"]["per_task_accuracy"] = result.rows.back().per_task_accuracy;
  record["final"]["mean_accuracy"] = result.final_mean_accuracy;
  if (result.final_forgetting)
    record["final"]["forgetting"] = *result.final_forgetting;
  else
    record["final"]["forgetting"] = nullptr;
  std::ofstream rec(record_path, std::ios::trunc);
  if (!rec) throw std::runtime_error("cannot write " + record_path);
  rec << record.dump(2) << "\n";

  return result;
}

RunOutcome run_all(const RunConfig& config, bool resume, std::ostream* progress) {
  RunOutcome outcome;
  outcome.run_dir = run_dir_for(config);
  fs::create_directories(outcome.run_dir);
  {
    std::ofstream cfg(outcome.run_dir + "/config.json", std::ios::trunc);
    cfg << to_json(config).dump(2) << "\n";
  }
  for (uint64_t seed : config.seeds) {
    if (progress)
      *progress << to_string(config.method) << " seed " << seed << ": running\n" << std::flush;
    outcome.seeds.push_back(run_seed(config, seed, resume));
    const auto& done = outcome.seeds.back();
    if (progress) {
      *progress << to_string(config.method) << " seed " << seed << ": accuracy "
                << done.final_mean_accuracy << ", forgetting ";
      if (done.final_forgetting)
        *progress << *done.final_forgetting;
      else
        *progress << "N/A";
      *progress << " (" << done.wall_clock_seconds << " s)\n" << std::flush;
    }
  }

  std::vector<RecordSummary> records;
  for (const auto& seed_result : outcome.seeds) {
    RecordSummary rec;
    rec.method = to_string(config.method);
    rec.dataset = to_string(config.dataset);
    rec.classes_per_task = config.classes_per_task;
    rec.memory_size = config.memory_size;
    rec.memory_is_total = config.memory_is_total;
    rec.seed = seed_result.seed;
    rec.accuracy = seed_result.final_mean_accuracy;
    rec.forgetting = seed_result.final_forgetting;
    rec.source_path = seed_result.seed_dir + "/record.json";
    records.push_back(rec);
  }
  auto rows = aggregate_records(records);
  {
    std::ofstream csv(outcome.run_dir + "/summary.csv", std::ios::trunc);
    csv << render_csv(rows);
  }
  {
    std::ofstream table(outcome.run_dir + "/summary.txt", std::ios::trunc);
    table << render_table(rows, to_string(config.dataset), config.classes_per_task);
  }
  return outcome;
}

}  // namespace clbench
