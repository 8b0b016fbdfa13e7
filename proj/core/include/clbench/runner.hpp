#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "clbench/evaluation.hpp"
#include "clbench/run_config.hpp"

namespace clbench {

/// One evaluation trigger's metrics, serialized as one line of
/// metrics.jsonl.
struct EvalRow {
  int64_t step = 0;
  int64_t tasks_seen = 0;
  int64_t classes_seen = 0;
  std::vector<double> per_task_accuracy;
  double mean_accuracy = 0;
  /// Null until the accuracy matrix covers at least two phases (and, on
  /// the even schedule, whenever the phase-indexed formula is undefined).
  std::optional<double> forgetting;
};

struct SeedRunResult {
  uint64_t seed = 0;
  std::string seed_dir;
  EvalMatrix matrix;
  std::vector<EvalRow> rows;
  double final_mean_accuracy = 0;
  std::optional<double> final_forgetting;
  double wall_clock_seconds = 0;
  bool resumed = false;
  /// False when the run stopped early at stop_after_step.
  bool completed = true;
};

struct RunOutcome {
  std::string run_dir;
  std::vector<SeedRunResult> seeds;
};

std::string version_string();

/// runs/<method>-<confighash>; seeds live in seed-<n> below it.
std::string run_dir_for(const RunConfig& config);
std::string seed_dir_for(const RunConfig& config, uint64_t seed);

/// Exact metrics.jsonl serialization of one row (no trailing newline).
std::string metrics_line(const EvalRow& row);
/// First line of every metrics file.
std::string metrics_header_line();

/// Forgetting of the phase-indexed matrix, null when undefined for its
/// shape instead of throwing.
std::optional<double> forgetting_or_null(const EvalMatrix& matrix);

/// Trains one seed through the full stream, writing metrics.jsonl,
/// record.json and checkpoint.bin under the seed directory. With resume,
/// continues from the stored checkpoint and reproduces the uninterrupted
/// metrics byte for byte. stop_after_step > 0 halts after that step
/// (checkpointing there) without writing a final record.
SeedRunResult run_seed(const RunConfig& config, uint64_t seed, bool resume = false,
                       int64_t stop_after_step = 0);

/// All configured seeds in sequence plus config.json, summary.csv and
/// summary.txt in the run directory. Progress lines go to `progress` when
/// given.
RunOutcome run_all(const RunConfig& config, bool resume = false,
                   std::ostream* progress = nullptr);

}  // namespace clbench
