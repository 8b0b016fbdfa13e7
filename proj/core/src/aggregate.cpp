#include "clbench/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace clbench {

RecordSummary parse_record(const nlohmann::json& doc, const std::string& source_path) {
  RecordSummary rec;
  const auto& config = doc.at("config");
  rec.method = config.at("method").get<std::string>();
  rec.dataset = config.at("dataset").get<std::string>();
  rec.classes_per_task = config.at("classes_per_task").get<int64_t>();
  rec.memory_size = config.at("memory_size").get<int64_t>();
  rec.memory_is_total = config.at("memory_is_total").get<bool>();
  rec.seed = doc.at("seed").get<uint64_t>();
  const auto& fin = doc.at("final");
  rec.accuracy = fin.at("mean_accuracy").get<double>();
  if (!fin.at("forgetting").is_null()) rec.forgetting = fin.at("forgetting").get<double>();
  rec.source_path = source_path;
  return rec;
}

namespace {

RecordSummary read_record_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open record: " + path);
  nlohmann::json doc;
  in >> doc;
  return parse_record(doc, path);
}

}  // namespace

std::vector<RecordSummary> collect_records(const std::vector<std::string>& paths) {
  std::vector<std::string> files;
  for (const auto& path : paths) {
    if (fs::is_directory(path)) {
      for (const auto& entry : fs::recursive_directory_iterator(path))
        if (entry.is_regular_file() && entry.path().filename() == "record.json")
          files.push_back(entry.path().string());
    } else if (fs::exists(path)) {
      files.push_back(path);
    } else {
      throw std::runtime_error("no such file or directory: " + path);
    }
  }
  std::sort(files.begin(), files.end());
  std::vector<RecordSummary> records;
  records.reserve(files.size());
  for (const auto& file : files) records.push_back(read_record_file(file));
  if (records.empty()) throw std::runtime_error("no run records found");
  return records;
}

namespace {

double mean_of(const std::vector<double>& values) {
  double total = 0;
  for (double v : values) total += v;
  return total / static_cast<double>(values.size());
}

std::optional<double> sample_std(const std::vector<double>& values) {
  if (values.size() < 2) return std::nullopt;
  double m = mean_of(values);
  double ss = 0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

std::string one_decimal(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

}  // namespace

std::vector<AggregateRow> aggregate_records(const std::vector<RecordSummary>& records) {
  if (records.empty()) throw std::invalid_argument("aggregate: empty record set");
  for (const auto& rec : records) {
    if (rec.dataset != records.front().dataset ||
        rec.classes_per_task != records.front().classes_per_task ||
        rec.memory_is_total != records.front().memory_is_total)
      throw std::invalid_argument(
          "aggregate: records mix datasets or stream settings (" + rec.source_path + ")");
  }

  std::map<std::pair<std::string, int64_t>, std::vector<const RecordSummary*>> groups;
  for (const auto& rec : records) groups[{rec.method, rec.memory_size}].push_back(&rec);

  std::vector<AggregateRow> rows;
  for (const auto& [key, members] : groups) {
    AggregateRow row;
    row.method = key.first;
    row.memory_size = key.second;
    row.num_seeds = static_cast<int64_t>(members.size());
    std::vector<double> acc, forg;
    bool all_forgetting = true;
    for (const auto* rec : members) {
      acc.push_back(rec->accuracy);
      if (rec->forgetting)
        forg.push_back(*rec->forgetting);
      else
        all_forgetting = false;
    }
    row.accuracy_mean = mean_of(acc);
    row.accuracy_std = sample_std(acc);
    if (all_forgetting) {
      row.forgetting_mean = mean_of(forg);
      row.forgetting_std = sample_std(forg);
    }
    rows.push_back(row);
  }
  return rows;
}

std::string format_mean_std(const std::optional<double>& mean,
                            const std::optional<double>& std_dev) {
  if (!mean) return "N/A";
  if (!std_dev) return one_decimal(*mean);
  return one_decimal(*mean) + " ± " + one_decimal(*std_dev);
}

std::string render_table(const std::vector<AggregateRow>& rows, const std::string& dataset,
                         int64_t classes_per_task) {
  std::ostringstream out;
  out << "dataset " << dataset << ", " << classes_per_task << " class(es) per task\n";
  out << "method     M      seeds  accuracy      forgetting\n";
  for (const auto& row : rows) {
    char line[160];
    std::snprintf(line, sizeof(line), "%-10s %-6lld %-6lld %-13s %s\n", row.method.c_str(),
                  static_cast<long long>(row.memory_size),
                  static_cast<long long>(row.num_seeds),
                  format_mean_std(row.accuracy_mean, row.accuracy_std).c_str(),
                  format_mean_std(row.forgetting_mean, row.forgetting_std).c_str());
    out << line;
  }
  return out.str();
}

std::string render_csv(const std::vector<AggregateRow>& rows) {
  std::ostringstream out;
  out << "method,memory_size,num_seeds,accuracy_mean,accuracy_std,forgetting_mean,forgetting_std\n";
  for (const auto& row : rows) {
    out << row.method << "," << row.memory_size << "," << row.num_seeds << ","
        << row.accuracy_mean << ",";
    if (row.accuracy_std) out << *row.accuracy_std;
    out << ",";
    if (row.forgetting_mean) out << *row.forgetting_mean;
    out << ",";
    if (row.forgetting_std) out << *row.forgetting_std;
    out << "\n";
  }
  return out.str();
}

}  // namespace clbench
