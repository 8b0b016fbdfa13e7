#include "clbench/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fs = std::filesystem;

namespace clbench {

namespace {

struct SeedCurve {
  std::string method;
  std::string config_hash;
  uint64_t seed;
  std::vector<double> x;
  std::vector<double> y;
};

SeedCurve read_seed_dir(const std::string& metrics_path) {
  fs::path dir = fs::path(metrics_path).parent_path();
  std::ifstream rec_in(dir / "record.json");
  if (!rec_in)
    throw std::runtime_error("metrics without record.json (incomplete run): " + metrics_path);
  nlohmann::json record;
  rec_in >> record;

  SeedCurve curve;
  curve.method = record.at("config").at("method").get<std::string>();
  curve.config_hash = record.at("config_hash").get<std::string>();
  curve.seed = record.at("seed").get<uint64_t>();

  std::ifstream in(metrics_path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto doc = nlohmann::json::parse(line);
    if (!doc.contains("step")) continue;  // schema header
    curve.x.push_back(doc.at("classes_seen").get<double>());
    curve.y.push_back(doc.at("mean_accuracy").get<double>());
  }
  if (curve.x.empty()) throw std::runtime_error("no evaluation rows in " + metrics_path);
  return curve;
}

std::string fnv_hex(const std::string& payload) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : payload) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

}  // namespace

std::vector<AnytimeCurve> load_anytime_curves(const std::vector<std::string>& paths) {
  std::vector<std::string> metrics_files;
  for (const auto& path : paths) {
    if (fs::is_directory(path)) {
      for (const auto& entry : fs::recursive_directory_iterator(path))
        if (entry.is_regular_file() && entry.path().filename() == "metrics.jsonl")
          metrics_files.push_back(entry.path().string());
    } else if (fs::exists(path)) {
      metrics_files.push_back(path);
    } else {
      throw std::runtime_error("no such file or directory: " + path);
    }
  }
  std::sort(metrics_files.begin(), metrics_files.end());
  if (metrics_files.empty()) throw std::runtime_error("no metrics files found");

  std::map<std::string, std::vector<SeedCurve>> by_method;
  for (const auto& file : metrics_files) {
    auto curve = read_seed_dir(file);
    by_method[curve.method].push_back(std::move(curve));
  }

  std::vector<AnytimeCurve> curves;
  for (auto& [method, seeds] : by_method) {
    for (const auto& seed_curve : seeds)
      if (seed_curve.x != seeds.front().x)
        throw std::runtime_error("anytime curves of method '" + method +
                                 "' are misaligned across seeds");
    AnytimeCurve curve;
    curve.label = method;
    curve.x = seeds.front().x;
    curve.num_seeds = static_cast<int64_t>(seeds.size());
    std::string hash_payload;
    for (const auto& seed_curve : seeds)
      hash_payload += seed_curve.config_hash + ":" + std::to_string(seed_curve.seed) + ";";
    curve.config_hash = fnv_hex(hash_payload);
    const size_t n = curve.x.size();
    curve.mean.resize(n);
    curve.std_dev.assign(n, 0.0);
    for (size_t i = 0; i < n; ++i) {
      double total = 0;
      for (const auto& seed_curve : seeds) total += seed_curve.y[i];
      curve.mean[i] = total / static_cast<double>(seeds.size());
      if (seeds.size() > 1) {
        double ss = 0;
        for (const auto& seed_curve : seeds) {
          double d = seed_curve.y[i] - curve.mean[i];
          ss += d * d;
        }
        curve.std_dev[i] = std::sqrt(ss / static_cast<double>(seeds.size() - 1));
      }
    }
    curves.push_back(std::move(curve));
  }
  return curves;
}

std::string render_anytime_svg(const std::vector<AnytimeCurve>& curves,
                               std::optional<double> reference_accuracy,
                               const std::string& reference_label) {
  if (curves.empty()) throw std::invalid_argument("nothing to plot");
  const double width = 640, height = 440;
  const double left = 62, right = 18, top = 20, bottom = 48;
  const double plot_w = width - left - right;
  const double plot_h = height - top - bottom;

  double x_min = curves.front().x.front(), x_max = curves.front().x.front();
  for (const auto& curve : curves)
    for (double v : curve.x) {
      x_min = std::min(x_min, v);
      x_max = std::max(x_max, v);
    }
  if (x_max == x_min) {
    x_min -= 0.5;
    x_max += 0.5;
  }
  const double y_min = 0, y_max = 100;

  auto sx = [&](double v) { return left + (v - x_min) / (x_max - x_min) * plot_w; };
  auto sy = [&](double v) { return top + (y_max - v) / (y_max - y_min) * plot_h; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  svg << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";

  for (int v = 0; v <= 100; v += 20) {
    double y = sy(v);
    svg << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(y) << "\" x2=\""
        << fmt(left + plot_w) << "\" y2=\"" << fmt(y)
        << "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
    svg << "<text x=\"" << fmt(left - 8) << "\" y=\"" << fmt(y + 4)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\">" << v
        << "</text>\n";
  }

  std::vector<double> ticks;
  {
    std::vector<double> xs;
    for (const auto& curve : curves) xs.insert(xs.end(), curve.x.begin(), curve.x.end());
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
    if (xs.size() <= 12) {
      ticks = xs;
    } else {
      for (int i = 0; i <= 10; ++i) ticks.push_back(x_min + (x_max - x_min) * i / 10.0);
    }
  }
  for (double v : ticks) {
    double x = sx(v);
    svg << "<line x1=\"" << fmt(x) << "\" y1=\"" << fmt(top + plot_h) << "\" x2=\"" << fmt(x)
        << "\" y2=\"" << fmt(top + plot_h + 5) << "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    char label[32];
    if (v == std::floor(v))
      std::snprintf(label, sizeof(label), "%lld", static_cast<long long>(v));
    else
      std::snprintf(label, sizeof(label), "%.1f", v);
    svg << "<text x=\"" << fmt(x) << "\" y=\"" << fmt(top + plot_h + 20)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">" << label
        << "</text>\n";
  }

  svg << "<rect x=\"" << fmt(left) << "\" y=\"" << fmt(top) << "\" width=\"" << fmt(plot_w)
      << "\" height=\"" << fmt(plot_h)
      << "\" fill=\"none\" stroke=\"black\" stroke-width=\"1\"/>\n";
  svg << "<text x=\"" << fmt(left + plot_w / 2) << "\" y=\"" << fmt(height - 10)
      << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\">classes seen"
      << "</text>\n";
  svg << "<text x=\"16\" y=\"" << fmt(top + plot_h / 2)
      << "\" font-family=\"sans-serif\" font-size=\"13\" text-anchor=\"middle\" transform=\""
      << "rotate(-90 16 " << fmt(top + plot_h / 2) << ")\">accuracy (%)</text>\n";

  if (reference_accuracy) {
    double y = sy(*reference_accuracy);
    svg << "<line x1=\"" << fmt(left) << "\" y1=\"" << fmt(y) << "\" x2=\""
        << fmt(left + plot_w) << "\" y2=\"" << fmt(y)
        << "\" stroke=\"#777777\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";
    svg << "<text x=\"" << fmt(left + plot_w - 4) << "\" y=\"" << fmt(y - 5)
        << "\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"end\" fill=\"#555555\">"
        << reference_label << " " << fmt(*reference_accuracy) << "</text>\n";
  }

  for (size_t c = 0; c < curves.size(); ++c) {
    const auto& curve = curves[c];
    const char* color = kPalette[c % (sizeof(kPalette) / sizeof(kPalette[0]))];

    bool has_band = curve.num_seeds > 1;
    if (has_band && curve.x.size() > 1) {
      svg << "<polygon points=\"";
      for (size_t i = 0; i < curve.x.size(); ++i)
        svg << fmt(sx(curve.x[i])) << ","
            << fmt(sy(std::min(100.0, curve.mean[i] + curve.std_dev[i]))) << " ";
      for (size_t i = curve.x.size(); i-- > 0;)
        svg << fmt(sx(curve.x[i])) << ","
            << fmt(sy(std::max(0.0, curve.mean[i] - curve.std_dev[i]))) << " ";
      svg << "\" fill=\"" << color << "\" fill-opacity=\"0.15\" stroke=\"none\"/>\n";
    }

    if (curve.x.size() > 1) {
      svg << "<polyline points=\"";
      for (size_t i = 0; i < curve.x.size(); ++i)
        svg << fmt(sx(curve.x[i])) << "," << fmt(sy(curve.mean[i])) << " ";
      svg << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    }
    for (size_t i = 0; i < curve.x.size(); ++i)
      svg << "<circle cx=\"" << fmt(sx(curve.x[i])) << "\" cy=\"" << fmt(sy(curve.mean[i]))
          << "\" r=\"2.5\" fill=\"" << color << "\"/>\n";
  }

  double legend_y = top + 14;
  for (size_t c = 0; c < curves.size(); ++c) {
    const char* color = kPalette[c % (sizeof(kPalette) / sizeof(kPalette[0]))];
    svg << "<line x1=\"" << fmt(left + 10) << "\" y1=\"" << fmt(legend_y - 4) << "\" x2=\""
        << fmt(left + 34) << "\" y2=\"" << fmt(legend_y - 4) << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n";
    svg << "<text x=\"" << fmt(left + 40) << "\" y=\"" << fmt(legend_y)
        << "\" font-family=\"sans-serif\" font-size=\"12\">" << curves[c].label;
    if (curves[c].num_seeds > 1) svg << " (" << curves[c].num_seeds << " seeds)";
    svg << "</text>\n";
    legend_y += 16;
  }

  svg << "</svg>\n";
  return svg.str();
}

std::string plot_anytime(const std::vector<std::string>& paths, const std::string& out_dir,
                         std::optional<double> reference_accuracy,
                         const std::string& reference_label) {
  auto curves = load_anytime_curves(paths);
  std::string hash_payload;
  for (const auto& curve : curves) hash_payload += curve.label + ":" + curve.config_hash + ";";
  std::string out_path = out_dir + "/anytime-" + fnv_hex(hash_payload) + ".svg";
  fs::create_directories(out_dir);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + out_path);
  out << render_anytime_svg(curves, reference_accuracy, reference_label);
  return out_path;
}

}  // namespace clbench
