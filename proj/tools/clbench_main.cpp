#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "clbench/aggregate.hpp"
#include "clbench/plot.hpp"
#include "clbench/run_config.hpp"
#include "clbench/runner.hpp"

namespace fs = std::filesystem;

namespace {

int cmd_run(const std::string& config_path, const std::vector<std::string>& overrides,
            bool resume) {
  nlohmann::json doc = nlohmann::json::object();
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) {
      std::cerr << "cannot open config file: " << config_path << "\n";
      return 1;
    }
    in >> doc;
  }
  for (const auto& assignment : overrides) clbench::apply_override(doc, assignment);

  auto config = clbench::parse_run_config(doc);
  auto outcome = clbench::run_all(config, resume, &std::cout);

  std::ifstream table(outcome.run_dir + "/summary.txt");
  std::cout << "\n" << table.rdbuf();
  std::cout << "\nrun directory: " << outcome.run_dir << "\n";
  return 0;
}

int cmd_aggregate(const std::vector<std::string>& paths, const std::string& csv_path,
                  const std::string& table_path) {
  auto records = clbench::collect_records(paths);
  auto rows = clbench::aggregate_records(records);
  std::string table = clbench::render_table(rows, records.front().dataset,
                                            records.front().classes_per_task);
  std::string csv = clbench::render_csv(rows);
  if (!csv_path.empty()) {
    std::ofstream out(csv_path, std::ios::trunc);
    out << csv;
  }
  if (!table_path.empty()) {
    std::ofstream out(table_path, std::ios::trunc);
    out << table;
  }
  std::cout << table;
  if (csv_path.empty() && table_path.empty()) std::cout << "\n" << csv;
  return 0;
}

int cmd_plot(const std::vector<std::string>& paths, const std::string& out_dir,
             std::optional<double> reference, const std::string& reference_label) {
  auto out_path = clbench::plot_anytime(paths, out_dir, reference, reference_label);
  std::cout << "wrote " << out_path << "\n";
  return 0;
}

int cmd_list_configs(const std::string& dir) {
  if (!fs::is_directory(dir)) {
    std::cerr << "no such directory: " << dir << "\n";
    return 1;
  }
  std::vector<std::string> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json")
      files.push_back(entry.path().string());
  std::sort(files.begin(), files.end());
  for (const auto& file : files) {
    std::cout << file << "\n";
    try {
      std::ifstream in(file);
      nlohmann::json doc;
      in >> doc;
      auto config = clbench::parse_run_config(doc);
      std::cout << "  method=" << clbench::to_string(config.method)
                << " dataset=" << clbench::to_string(config.dataset)
                << " classes_per_task=" << config.classes_per_task
                << " memory_size=" << config.memory_size << " seeds=" << config.seeds.size()
                << "\n";
    } catch (const std::exception& e) {
      std::cout << "  invalid: " << e.what() << "\n";
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Online continual learning benchmark harness"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  bool resume = false;
  auto* run = app.add_subcommand("run", "Train all configured seeds and write metrics");
  run->add_option("-c,--config", config_path, "JSON config file (defaults apply without one)");
  run->add_option("-s,--set", overrides, "Override a config key, e.g. --set memory_size=20")
      ->type_name("KEY=VALUE");
  run->add_flag("--resume", resume, "Continue each seed from its checkpoint");

  std::vector<std::string> agg_paths;
  std::string csv_path, table_path;
  auto* agg = app.add_subcommand("aggregate", "Summarize finished runs as mean +- std");
  agg->add_option("paths", agg_paths, "record.json files or directories to search")->required();
  agg->add_option("--csv", csv_path, "Write the machine-readable table here");
  agg->add_option("--table", table_path, "Write the human-readable table here");

  std::vector<std::string> plot_paths;
  std::string plot_out = "plots";
  double reference_value = 0;
  std::string reference_label = "iid";
  auto* plot = app.add_subcommand("plot", "Render anytime accuracy curves as SVG");
  plot->add_option("paths", plot_paths, "run or seed directories with metrics.jsonl")->required();
  plot->add_option("--out-dir", plot_out, "Output directory");
  auto* ref_opt =
      plot->add_option("--reference", reference_value, "Horizontal reference accuracy line");
  plot->add_option("--reference-label", reference_label, "Label for the reference line");

  std::string configs_dir = "configs";
  auto* list = app.add_subcommand("list-configs", "List and validate config files");
  list->add_option("--dir", configs_dir, "Directory to scan");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) return cmd_run(config_path, overrides, resume);
    if (agg->parsed()) return cmd_aggregate(agg_paths, csv_path, table_path);
    if (plot->parsed()) {
      std::optional<double> reference;
      if (ref_opt->count() > 0) reference = reference_value;
      return cmd_plot(plot_paths, plot_out, reference, reference_label);
    }
    if (list->parsed()) return cmd_list_configs(configs_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
