#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace clbench {

/// Final metrics of one finished seed, read back from record.json.
struct RecordSummary {
  std::string method;
  std::string dataset;
  int64_t classes_per_task = 0;
  int64_t memory_size = 0;
  bool memory_is_total = false;
  uint64_t seed = 0;
  double accuracy = 0;
  std::optional<double> forgetting;
  std::string source_path;
};

RecordSummary parse_record(const nlohmann::json& doc, const std::string& source_path);

/// Accepts record.json files and directories (searched recursively).
/// Throws when nothing is found.
std::vector<RecordSummary> collect_records(const std::vector<std::string>& paths);

/// One summary table row per method x memory size.
struct AggregateRow {
  std::string method;
  int64_t memory_size = 0;
  int64_t num_seeds = 0;
  double accuracy_mean = 0;
  std::optional<double> accuracy_std;    // absent for a single seed
  std::optional<double> forgetting_mean; // absent when N/A
  std::optional<double> forgetting_std;
};

/// Groups by method and memory size. Records must agree on dataset and
/// classes_per_task; a mixed or empty set is an error. Standard deviation
/// is the sample deviation over seeds.
std::vector<AggregateRow> aggregate_records(const std::vector<RecordSummary>& records);

/// "39.1 ± 1.1", or just "39.1" without a deviation, or "N/A".
std::string format_mean_std(const std::optional<double>& mean,
                            const std::optional<double>& std_dev);

std::string render_table(const std::vector<AggregateRow>& rows, const std::string& dataset,
                         int64_t classes_per_task);
std::string render_csv(const std::vector<AggregateRow>& rows);

}  // namespace clbench
