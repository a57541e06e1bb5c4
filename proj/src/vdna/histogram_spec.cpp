#include "vdnapr/histogram_spec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <fmt/format.h>

#include "vdnapr/error.hpp"
#include "vdnapr/hash.hpp"

namespace vdnapr::vdna {

std::string spec_id_hex(const SpecId& id) { return to_hex(id); }

namespace {

SpecId compute_id(const std::vector<LayerInfo>& layers, std::uint32_t bins, const std::vector<BinRange>& ranges) {
  Sha256 h;
  h.update("vdnapr-histogram-spec-v1");
  h.update_u32(static_cast<std::uint32_t>(layers.size()));
  for (const auto& l : layers) {
    h.update_u64(static_cast<std::uint64_t>(static_cast<std::int64_t>(l.index)));
    h.update_u32(l.neuron_count);
  }
  h.update_u32(bins);
  h.update_u64(ranges.size());
  for (const auto& r : ranges) {
    h.update_f64(r.low);
    h.update_f64(r.high);
  }
  const auto digest = h.finish();
  SpecId id{};
  std::copy_n(digest.begin(), id.size(), id.begin());
  return id;
}

std::string next_content_line(std::istream& in) {
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    return line;
  }
  return {};
}

}  // namespace

HistogramSpec::HistogramSpec(std::vector<LayerInfo> layers, std::uint32_t bins, std::vector<BinRange> ranges)
    : layers_(std::move(layers)), bins_(bins), ranges_(std::move(ranges)) {
  if (bins_ < 2) fail(ErrorKind::ConfigError, "histogram spec needs at least 2 bins");
  if (layers_.empty()) fail(ErrorKind::ConfigError, "histogram spec needs at least one layer");
  std::size_t total = 0;
  for (const auto& l : layers_) {
    if (l.neuron_count == 0) fail(ErrorKind::ConfigError, "layer " + std::to_string(l.index) + " has no neurons");
    total += l.neuron_count;
  }
  for (std::size_t a = 0; a < layers_.size(); ++a)
    for (std::size_t b = a + 1; b < layers_.size(); ++b)
      if (layers_[a].index == layers_[b].index)
        fail(ErrorKind::ConfigError, "duplicate layer label " + std::to_string(layers_[a].index));
  if (ranges_.size() != total)
    fail(ErrorKind::ShapeError, fmt::format("{} ranges for {} neurons", ranges_.size(), total));
  widths_.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    const auto& r = ranges_[i];
    if (!std::isfinite(r.low) || !std::isfinite(r.high) || !(r.low < r.high))
      fail(ErrorKind::ConfigError, fmt::format("neuron {} has invalid range ({}, {})", i, r.low, r.high));
    widths_[i] = (r.high - r.low) / bins_;
  }
  id_ = compute_id(layers_, bins_, ranges_);
}

double HistogramSpec::bin_width(std::size_t neuron) const { return widths_.at(neuron); }

std::uint32_t HistogramSpec::bin_of(std::size_t neuron, double value) const {
  const auto& r = ranges_[neuron];
  if (!(value > r.low)) return 0;  // also maps -inf; NaN is rejected upstream
  if (value >= r.high) return bins_ - 1;
  const auto k = static_cast<std::uint64_t>(std::floor((value - r.low) / widths_[neuron]));
  return static_cast<std::uint32_t>(std::min<std::uint64_t>(k, bins_ - 1));
}

std::pair<std::size_t, std::size_t> HistogramSpec::layer_span(std::size_t pos) const {
  if (pos >= layers_.size()) fail(ErrorKind::SelectionError, "layer position out of range");
  std::size_t begin = 0;
  for (std::size_t l = 0; l < pos; ++l) begin += layers_[l].neuron_count;
  return {begin, begin + layers_[pos].neuron_count};
}

std::optional<std::size_t> HistogramSpec::layer_position(std::int32_t index) const {
  for (std::size_t l = 0; l < layers_.size(); ++l)
    if (layers_[l].index == index) return l;
  return std::nullopt;
}

bool HistogramSpec::matches(const activation::ActivationFrame& frame) const {
  if (frame.shapes.size() != layers_.size()) return false;
  for (std::size_t l = 0; l < layers_.size(); ++l)
    if (frame.shapes[l].neuron_count != layers_[l].neuron_count) return false;
  return true;
}

std::string HistogramSpec::to_text() const {
  std::string out = "# vdnapr histogram spec v1\n";
  out += fmt::format("spec_id {}\n", spec_id_hex(id_));
  out += fmt::format("bins {}\n", bins_);
  out += fmt::format("layers {}\n", layers_.size());
  for (const auto& l : layers_) out += fmt::format("layer {} {}\n", l.index, l.neuron_count);
  out += fmt::format("ranges {}\n", ranges_.size());
  out += "# low high (one neuron per line, layer order)\n";
  for (const auto& r : ranges_) out += fmt::format("{} {}\n", r.low, r.high);
  return out;
}

HistogramSpec HistogramSpec::from_text(const std::string& text, const std::string& source) {
  std::istringstream in(text);
  std::string header;
  std::getline(in, header);
  if (!header.empty() && header.back() == '\r') header.pop_back();
  if (header != "# vdnapr histogram spec v1") fail(ErrorKind::FormatError, source + ": bad histogram spec header");
  auto expect = [&](const std::string& key) {
    std::istringstream ls(next_content_line(in));
    std::string k;
    ls >> k;
    if (k != key) fail(ErrorKind::FormatError, source + ": expected '" + key + "'");
    std::string rest;
    ls >> rest;
    return rest;
  };
  const std::string id_hex = expect("spec_id");
  const auto bins = static_cast<std::uint32_t>(std::stoul(expect("bins")));
  const auto layer_count = std::stoul(expect("layers"));
  std::vector<LayerInfo> layers;
  for (std::size_t l = 0; l < layer_count; ++l) {
    std::istringstream ls(next_content_line(in));
    std::string k;
    LayerInfo info;
    if (!(ls >> k >> info.index >> info.neuron_count) || k != "layer")
      fail(ErrorKind::FormatError, source + ": bad layer line");
    layers.push_back(info);
  }
  const auto range_count = std::stoull(expect("ranges"));
  std::vector<BinRange> ranges;
  ranges.reserve(range_count);
  for (std::size_t i = 0; i < range_count; ++i) {
    std::istringstream ls(next_content_line(in));
    BinRange r;
    if (!(ls >> r.low >> r.high)) fail(ErrorKind::FormatError, source + ": bad range line " + std::to_string(i));
    ranges.push_back(r);
  }
  HistogramSpec spec(std::move(layers), bins, std::move(ranges));
  if (spec_id_hex(spec.id()) != id_hex)
    fail(ErrorKind::FormatError, source + ": spec_id does not match content (" + id_hex + " vs " +
                                     spec_id_hex(spec.id()) + ")");
  return spec;
}

void HistogramSpec::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << to_text();
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

HistogramSpec HistogramSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_text(ss.str(), path.string());
}

std::vector<LayerInfo> topology_from_shapes(const std::vector<activation::LayerShape>& shapes) {
  std::vector<LayerInfo> out;
  for (std::size_t l = 0; l < shapes.size(); ++l)
    out.push_back(LayerInfo{static_cast<std::int32_t>(l + 1), shapes[l].neuron_count});
  return out;
}

HistogramSpec calibrate_spec(activation::ActivationSource& source, const std::vector<LayerInfo>& topology,
                             std::uint32_t bins, double expansion) {
  if (!(expansion >= 0.0) || !std::isfinite(expansion)) fail(ErrorKind::ConfigError, "expansion must be >= 0");
  std::size_t neurons = 0;
  for (const auto& l : topology) neurons += l.neuron_count;
  std::vector<double> lo(neurons, std::numeric_limits<double>::infinity());
  std::vector<double> hi(neurons, -std::numeric_limits<double>::infinity());
  std::size_t images = 0;
  while (auto frame = source.next()) {
    if (frame->shapes.size() != topology.size())
      fail(ErrorKind::SpecMismatch, "frame " + frame->frame_id + " has a different layer count than the topology");
    std::size_t base = 0;
    for (std::size_t l = 0; l < topology.size(); ++l) {
      const auto& shape = frame->shapes[l];
      if (shape.neuron_count != topology[l].neuron_count)
        fail(ErrorKind::SpecMismatch, "frame " + frame->frame_id + " layer " + std::to_string(l) + " neuron count differs");
      if (shape.samples == 0) fail(ErrorKind::ShapeError, "frame " + frame->frame_id + " has no samples");
      for (std::size_t n = 0; n < shape.neuron_count; ++n) {
        const auto values = frame->neuron_values(l, n);
        for (float fv : values) {
          const double v = fv;
          if (!std::isfinite(v))
            fail(ErrorKind::InvalidActivation,
                 fmt::format("neuron {} image {} ({})", base + n, images, frame->frame_id));
          lo[base + n] = std::min(lo[base + n], v);
          hi[base + n] = std::max(hi[base + n], v);
        }
      }
      base += shape.neuron_count;
    }
    ++images;
  }
  if (images == 0) fail(ErrorKind::CalibrationEmpty, "no calibration images");
  std::vector<BinRange> ranges(neurons);
  for (std::size_t i = 0; i < neurons; ++i) {
    if (lo[i] == hi[i]) {
      ranges[i] = BinRange{lo[i] - 1.0, hi[i] + 1.0};
    } else {
      const double pad = expansion * (hi[i] - lo[i]);
      ranges[i] = BinRange{lo[i] - pad, hi[i] + pad};
    }
  }
  return HistogramSpec(topology, bins, std::move(ranges));
}

}  // namespace vdnapr::vdna
