#include "hmlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

namespace hmlab {

std::string run_label(const TrainConfig& config) {
  const DefenseKind kind = parse_defense(config.defense);
  std::string label = config.defense;
  if (kind == DefenseKind::HM || kind == DefenseKind::HMICS) {
    label += "[" + config.source + "," + to_string(parse_destination(config.destination, config.xi)) + "]";
  }
  return label;
}

RunSummary summarize(const RunRecord& record) {
  RunSummary s;
  s.label = run_label(record.config);
  s.pgd_steps = is_adversarial(parse_defense(record.config.defense)) ? record.config.pgd_steps : 0;
  s.cost = record.training_cost();
  s.seed = record.config.seed;
  s.status = to_string(record.status);
  if (record.report) {
    s.ers = record.report->ers;
    s.r_at_1 = record.report->r_at_1;
  } else if (!record.epochs.empty()) {
    s.r_at_1 = record.epochs.back().r_at_1;
  }
  return s;
}

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string escape_xml(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string comparison_table(std::vector<RunSummary> runs) {
  std::stable_sort(runs.begin(), runs.end(), [](const RunSummary& a, const RunSummary& b) { return a.ers > b.ers; });
  std::string out = "| defense | seed | eta | cost | status | ERS-style | R@1 |\n";
  out += "|---|---|---|---|---|---|---|\n";
  for (const auto& r : runs) {
    out += "| " + r.label + " | " + std::to_string(r.seed) + " | " + std::to_string(r.pgd_steps) + " | " +
           std::to_string(r.cost) + " | " + r.status + " | " + fixed(r.ers) + " | " + fixed(r.r_at_1) + " |\n";
  }
  return out;
}

std::vector<Curve> cost_curves(const std::vector<RunSummary>& runs, CurveMetric metric) {
  std::map<std::string, std::map<std::size_t, std::pair<double, std::size_t>>> grouped;
  std::vector<std::string> order;
  for (const auto& r : runs) {
    if (!grouped.contains(r.label)) order.push_back(r.label);
    auto& cell = grouped[r.label][r.cost];
    cell.first += metric == CurveMetric::Ers ? r.ers : r.r_at_1;
    cell.second += 1;
  }
  std::vector<Curve> curves;
  for (const auto& label : order) {
    Curve c{label, {}};
    for (const auto& [cost, acc] : grouped[label]) {
      c.points.emplace_back(static_cast<double>(cost), acc.first / static_cast<double>(acc.second));
    }
    curves.push_back(std::move(c));
  }
  return curves;
}

std::string render_svg(const std::vector<Curve>& curves, const std::string& title, const std::string& x_label,
                       const std::string& y_label) {
  constexpr double W = 640, H = 420, L = 70, R = 190, T = 40, B = 60;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"};

  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& c : curves) {
    for (const auto& [x, y] : c.points) {
      x0 = std::min(x0, x), x1 = std::max(x1, x);
      y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 - x0 < 1e-12) x0 -= 1, x1 += 1;
  if (y1 - y0 < 1e-12) y0 -= 1, y1 += 1;
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad, y1 += pad;
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - y0) / (y1 - y0) * (H - T - B); };

  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + fixed(W, 0) + "\" height=\"" + fixed(H, 0) +
                  "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s += "<text x=\"" + fixed(W / 2 - R / 2, 1) + "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" +
       escape_xml(title) + "</text>\n";
  s += "<line x1=\"" + fixed(L, 1) + "\" y1=\"" + fixed(H - B, 1) + "\" x2=\"" + fixed(W - R, 1) + "\" y2=\"" +
       fixed(H - B, 1) + "\" stroke=\"black\"/>\n";
  s += "<line x1=\"" + fixed(L, 1) + "\" y1=\"" + fixed(T, 1) + "\" x2=\"" + fixed(L, 1) + "\" y2=\"" + fixed(H - B, 1) +
       "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4.0, yv = y0 + (y1 - y0) * i / 4.0;
    s += "<text x=\"" + fixed(px(xv), 1) + "\" y=\"" + fixed(H - B + 18, 1) + "\" text-anchor=\"middle\">" +
         fixed(xv, 1) + "</text>\n";
    s += "<text x=\"" + fixed(L - 6, 1) + "\" y=\"" + fixed(py(yv) + 4, 1) + "\" text-anchor=\"end\">" + fixed(yv, 1) +
         "</text>\n";
  }
  s += "<text x=\"" + fixed((L + W - R) / 2, 1) + "\" y=\"" + fixed(H - 18, 1) + "\" text-anchor=\"middle\">" +
       escape_xml(x_label) + "</text>\n";
  s += "<text transform=\"translate(18," + fixed((T + H - B) / 2, 1) + ") rotate(-90)\" text-anchor=\"middle\">" +
       escape_xml(y_label) + "</text>\n";

  for (std::size_t i = 0; i < curves.size(); ++i) {
    const char* color = palette[i % std::size(palette)];
    const auto& c = curves[i];
    std::string pts;
    for (const auto& [x, y] : c.points) pts += fixed(px(x), 2) + "," + fixed(py(y), 2) + " ";
    if (c.points.size() > 1) {
      s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"2\" points=\"" + pts + "\"/>\n";
    }
    for (const auto& [x, y] : c.points) {
      s += "<circle cx=\"" + fixed(px(x), 2) + "\" cy=\"" + fixed(py(y), 2) + "\" r=\"4\" fill=\"" + color +
           "\"><title>" + escape_xml(c.label) + " cost=" + fixed(x, 0) + " value=" + fixed(y) + "</title></circle>\n";
    }
    const double ly = T + 16.0 * static_cast<double>(i);
    s += "<rect x=\"" + fixed(W - R + 12, 1) + "\" y=\"" + fixed(ly - 9, 1) + "\" width=\"10\" height=\"10\" fill=\"" +
         color + "\"/>\n";
    s += "<text x=\"" + fixed(W - R + 28, 1) + "\" y=\"" + fixed(ly, 1) + "\">" + escape_xml(c.label) + "</text>\n";
  }
  s += "</svg>\n";
  return s;
}

void write_report(const std::vector<RunRecord>& records, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<RunSummary> runs;
  for (const auto& r : records) runs.push_back(summarize(r));
  auto write = [&](const std::string& name, const std::string& body) {
    std::ofstream out(out_dir / name);
    if (!out) throw std::runtime_error("cannot write " + (out_dir / name).string());
    out << body;
  };
  write("comparison.md", "Scores are ERS-style aggregates over the last-epoch model.\n\n" + comparison_table(runs));
  write("cost_vs_ers.svg", render_svg(cost_curves(runs, CurveMetric::Ers), "Robustness vs training cost",
                                      "training cost per iteration (eta + 1)", "ERS-style score"));
  write("cost_vs_r1.svg", render_svg(cost_curves(runs, CurveMetric::RecallAt1), "Recall@1 vs training cost",
                                     "training cost per iteration (eta + 1)", "R@1 (%)"));
}

}  // namespace hmlab
