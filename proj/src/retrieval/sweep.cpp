#include <algorithm>

#include <fmt/format.h>

#include "vdnapr/error.hpp"
#include "vdnapr/retrieval.hpp"

namespace vdnapr::retrieval {

std::vector<SweepEntry> layer_sweep(const vdna::HistogramSpec& spec, std::size_t h, const DescriptorDb& db_all,
                                    const DescriptorDb& queries_all,
                                    const std::vector<std::pair<std::int32_t, std::int32_t>>& ranges,
                                    std::span<const std::size_t> ns, const world::Threshold& threshold) {
  if (db_all.dim != spec.neuron_count() * h || db_all.selection != "all")
    fail(ErrorKind::SelectionError, "layer sweep needs full neuron-concat descriptors (selection all)");
  std::vector<encoder::NeuronSelection> selections;
  std::vector<std::string> labels;
  for (const auto& layer : spec.layers()) {
    selections.push_back(encoder::NeuronSelection::layers(layer.index, layer.index));
    labels.push_back(fmt::format("L{}", layer.index));
  }
  for (const auto& [first, last] : ranges) {
    selections.push_back(encoder::NeuronSelection::layers(first, last));
    labels.push_back(fmt::format("L{}-{}", first, last));
  }
  std::vector<SweepEntry> out;
  for (std::size_t i = 0; i < selections.size(); ++i) {
    const auto neurons = selections[i].resolve(spec);
    const std::string sel = selections[i].to_string();
    const auto db = slice_db(db_all, neurons, h, sel);
    const auto queries = slice_db(queries_all, neurons, h, sel);
    out.push_back(SweepEntry{labels[i], sel, db.dim, recall_at_n(db, queries, ns, threshold)});
  }
  return out;
}

std::string sweep_table(const std::vector<SweepEntry>& entries) {
  std::string s = "# vdnapr layer sweep v1\nlabel selection length";
  if (!entries.empty())
    for (auto n : entries.front().report.ns) s += fmt::format(" R@{}", n);
  s += "\n";
  for (const auto& e : entries) {
    s += fmt::format("{} {} {}", e.label, e.selection, e.length);
    for (double r : e.report.recall) s += fmt::format(" {:.6f}", r);
    s += "\n";
  }
  return s;
}

std::string sweep_svg(const std::vector<SweepEntry>& entries, const std::string& title) {
  constexpr double kWidth = 640, kHeight = 400, kLeft = 60, kRight = 20, kTop = 40, kBottom = 60;
  const double pw = kWidth - kLeft - kRight, ph = kHeight - kTop - kBottom;
  const std::size_t count = entries.size();
  auto x_of = [&](std::size_t i) { return kLeft + (count > 1 ? pw * static_cast<double>(i) / (count - 1) : pw / 2); };
  auto y_of = [&](double r) { return kTop + ph * (1.0 - r / 100.0); };
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" font-family=\"sans-serif\" "
      "font-size=\"12\">\n",
      kWidth, kHeight);
  s += fmt::format("<rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n", kWidth, kHeight);
  s += fmt::format("<text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n", kWidth / 2, title);
  for (int r = 0; r <= 100; r += 20) {
    s += fmt::format("<line x1=\"{}\" y1=\"{:.1f}\" x2=\"{}\" y2=\"{:.1f}\" stroke=\"#ddd\"/>\n", kLeft, y_of(r),
                     kLeft + pw, y_of(r));
    s += fmt::format("<text x=\"{}\" y=\"{:.1f}\" text-anchor=\"end\">{}</text>\n", kLeft - 6, y_of(r) + 4, r);
  }
  for (std::size_t i = 0; i < count; ++i)
    s += fmt::format("<text x=\"{:.1f}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n", x_of(i), kTop + ph + 18,
                     entries[i].label);
  s += fmt::format("<text x=\"16\" y=\"{}\" transform=\"rotate(-90 16 {})\" text-anchor=\"middle\">Recall (%)</text>\n",
                   kTop + ph / 2, kTop + ph / 2);
  const std::size_t series = count ? entries.front().report.ns.size() : 0;
  for (std::size_t k = 0; k < series; ++k) {
    const char* color = colors[k % std::size(colors)];
    std::string points;
    for (std::size_t i = 0; i < count; ++i)
      points += fmt::format("{}{:.1f},{:.1f}", i ? " " : "", x_of(i), y_of(entries[i].report.recall[k]));
    s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", color, points);
    for (std::size_t i = 0; i < count; ++i)
      s += fmt::format("<circle cx=\"{:.1f}\" cy=\"{:.1f}\" r=\"3\" fill=\"{}\"/>\n", x_of(i),
                       y_of(entries[i].report.recall[k]), color);
    s += fmt::format("<text x=\"{}\" y=\"{}\" fill=\"{}\">R@{}</text>\n", kLeft + pw - 50, kTop + 16 * (k + 1), color,
                     entries.front().report.ns[k]);
  }
  s += "</svg>\n";
  return s;
}

}  // namespace vdnapr::retrieval
