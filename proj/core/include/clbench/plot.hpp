#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace clbench {

/// Mean anytime-accuracy curve of one method across seeds, on the shared
/// evaluation grid (x = classes seen at each evaluation trigger).
struct AnytimeCurve {
  std::string label;
  std::vector<double> x;
  std::vector<double> mean;
  std::vector<double> std_dev;  // zeros for a single seed
  int64_t num_seeds = 0;
  std::string config_hash;
};

/// Reads metrics.jsonl + record.json pairs below the given paths and
/// groups seeds by method. Seeds of one method must share the evaluation
/// grid. Throws when no anytime rows are found.
std::vector<AnytimeCurve> load_anytime_curves(const std::vector<std::string>& paths);

/// Accuracy-vs-classes-seen chart: one line per method, a +-1 std band
/// when a method has several seeds, and an optional horizontal reference
/// line (the iid skyline).
std::string render_anytime_svg(const std::vector<AnytimeCurve>& curves,
                               std::optional<double> reference_accuracy,
                               const std::string& reference_label = "iid");

/// Renders to <out_dir>/anytime-<hash>.svg with the hash derived from the
/// plotted runs, and returns the written path.
std::string plot_anytime(const std::vector<std::string>& paths, const std::string& out_dir,
                         std::optional<double> reference_accuracy,
                         const std::string& reference_label = "iid");

}  // namespace clbench
