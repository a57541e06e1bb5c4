#include "vdnapr/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <fmt/format.h>

#include "vdnapr/error.hpp"
#include "vdnapr/nn/kernels.hpp"
#include "vdnapr/parallel.hpp"

namespace vdnapr::encoder {

EncoderConfig EncoderConfig::standard(std::uint32_t bins, std::uint32_t h, std::uint32_t d) {
  EncoderConfig c;
  c.bins = bins;
  c.h = h;
  c.d = d;
  const std::array<std::uint32_t, kConvLayers> channels{8, 8, 16, 16, 32, 32};
  for (std::size_t i = 0; i < kConvLayers; ++i)
    c.conv[i] = ConvLayerSpec{channels[i], 5, (i % 2 == 1) ? 2u : 1u, 2};
  c.hidden = {256, 64};
  c.validate();
  return c;
}

EncoderConfig EncoderConfig::compact(std::uint32_t bins, std::uint32_t h, std::uint32_t d) {
  EncoderConfig c;
  c.bins = bins;
  c.h = h;
  c.d = d;
  const std::array<std::uint32_t, kConvLayers> channels{4, 4, 8, 8, 8, 8};
  for (std::size_t i = 0; i < kConvLayers; ++i)
    c.conv[i] = ConvLayerSpec{channels[i], 3, (i % 2 == 1) ? 2u : 1u, 1};
  c.hidden = {32, 16};
  c.validate();
  return c;
}

std::vector<std::size_t> EncoderConfig::conv_lengths() const {
  std::vector<std::size_t> lengths{bins};
  for (const auto& l : conv)
    lengths.push_back(nn::kernels::conv1d_out_length(lengths.back(), l.kernel, l.stride, l.padding));
  return lengths;
}

std::size_t EncoderConfig::flattened_length() const { return conv_lengths().back() * conv.back().out_channels; }

void EncoderConfig::validate() const {
  if (bins < 2) fail(ErrorKind::ConfigError, "encoder needs b >= 2");
  if (h < 1 || d < 1) fail(ErrorKind::ConfigError, "encoder needs h >= 1 and d >= 1");
  for (const auto& l : conv)
    if (l.out_channels < 1 || l.kernel < 1 || l.stride < 1) fail(ErrorKind::ConfigError, "invalid conv layer");
  for (auto w : hidden)
    if (w < 1) fail(ErrorKind::ConfigError, "invalid hidden width");
  conv_lengths();  // throws ShapeError when the stack collapses
}

std::string EncoderConfig::to_string() const {
  std::string s = fmt::format("bins={} h={} d={} conv=", bins, h, d);
  for (std::size_t i = 0; i < conv.size(); ++i)
    s += fmt::format("{}{}x{}s{}p{}", i ? "," : "", conv[i].out_channels, conv[i].kernel, conv[i].stride,
                     conv[i].padding);
  s += fmt::format(" hidden={},{}", hidden[0], hidden[1]);
  return s;
}

EncoderConfig EncoderConfig::parse(const std::string& text) {
  EncoderConfig c;
  std::istringstream in(text);
  std::string tok;
  bool seen_conv = false;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) fail(ErrorKind::FormatError, "bad encoder config token '" + tok + "'");
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "bins") {
      c.bins = static_cast<std::uint32_t>(std::stoul(val));
    } else if (key == "h") {
      c.h = static_cast<std::uint32_t>(std::stoul(val));
    } else if (key == "d") {
      c.d = static_cast<std::uint32_t>(std::stoul(val));
    } else if (key == "conv") {
      std::istringstream ls(val);
      std::string layer;
      std::size_t i = 0;
      while (std::getline(ls, layer, ',')) {
        if (i >= kConvLayers) fail(ErrorKind::FormatError, "encoder config needs exactly 6 conv layers");
        ConvLayerSpec l;
        if (std::sscanf(layer.c_str(), "%ux%us%up%u", &l.out_channels, &l.kernel, &l.stride, &l.padding) != 4)
          fail(ErrorKind::FormatError, "bad conv layer '" + layer + "'");
        c.conv[i++] = l;
      }
      if (i != kConvLayers) fail(ErrorKind::FormatError, "encoder config needs exactly 6 conv layers");
      seen_conv = true;
    } else if (key == "hidden") {
      unsigned a = 0, b = 0;
      if (std::sscanf(val.c_str(), "%u,%u", &a, &b) != 2) fail(ErrorKind::FormatError, "bad hidden '" + val + "'");
      c.hidden = {a, b};
    } else {
      fail(ErrorKind::FormatError, "unknown encoder config key '" + key + "'");
    }
  }
  if (!seen_conv) fail(ErrorKind::FormatError, "encoder config lacks conv layers");
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

EncoderParams EncoderParams::initialize(const EncoderConfig& config, const vdna::HistogramSpec& spec,
                                        std::uint64_t seed) {
  config.validate();
  if (config.bins != spec.bins())
    fail(ErrorKind::SpecMismatch, fmt::format("encoder expects {} bins, spec has {}", config.bins, spec.bins()));
  EncoderParams p;
  p.config_ = config;
  p.spec_id_ = spec.id();
  p.neurons_ = static_cast<std::uint32_t>(spec.neuron_count());

  std::mt19937_64 rng(seed);
  auto he_uniform = [&](nn::Shape shape, std::size_t fan_in) {
    nn::Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.data()) v = dist(rng);
    return t;
  };

  std::size_t in_ch = 1;
  for (std::size_t i = 0; i < kConvLayers; ++i) {
    const auto& l = config.conv[i];
    p.params_.emplace_back(fmt::format("conv{}.weight", i), he_uniform({l.out_channels, in_ch, l.kernel}, in_ch * l.kernel));
    p.params_.emplace_back(fmt::format("conv{}.bias", i), nn::Tensor({l.out_channels}));
    in_ch = l.out_channels;
  }
  const std::array<std::size_t, kLinearLayers + 1> widths{config.flattened_length(), config.hidden[0], config.hidden[1],
                                                          config.h};
  for (std::size_t i = 0; i < kLinearLayers; ++i) {
    p.params_.emplace_back(fmt::format("linear{}.weight", i), he_uniform({widths[i + 1], widths[i]}, widths[i]));
    p.params_.emplace_back(fmt::format("linear{}.bias", i), nn::Tensor({widths[i + 1]}));
  }
  const std::size_t nh = static_cast<std::size_t>(p.neurons_) * config.h;
  p.params_.emplace_back("head.W", he_uniform({nh, config.d}, nh));
  return p;
}

std::vector<nn::Parameter*> EncoderParams::parameters() {
  std::vector<nn::Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

void EncoderParams::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

nn::Checkpoint EncoderParams::to_checkpoint() const {
  nn::Checkpoint c;
  c.metadata.emplace_back("kind", "vdnapr-encoder");
  c.metadata.emplace_back("encoder_config", config_.to_string());
  c.metadata.emplace_back("spec_id", vdna::spec_id_hex(spec_id_));
  c.metadata.emplace_back("neurons", std::to_string(neurons_));
  for (const auto& p : params_) c.tensors.push_back(nn::NamedTensor{p.name, p.value});
  return c;
}

EncoderParams EncoderParams::from_checkpoint(const nn::Checkpoint& c) {
  auto meta = [&](const char* key) {
    const std::string* v = c.find_metadata(key);
    if (!v) fail(ErrorKind::FormatError, std::string("checkpoint lacks metadata '") + key + "'");
    return *v;
  };
  if (meta("kind") != "vdnapr-encoder") fail(ErrorKind::FormatError, "checkpoint is not an encoder checkpoint");
  EncoderParams p;
  p.config_ = EncoderConfig::parse(meta("encoder_config"));
  const std::string hex = meta("spec_id");
  if (hex.size() != 32) fail(ErrorKind::FormatError, "bad spec id in checkpoint");
  for (std::size_t i = 0; i < 16; ++i) p.spec_id_[i] = static_cast<std::uint8_t>(std::stoul(hex.substr(2 * i, 2), nullptr, 16));
  p.neurons_ = static_cast<std::uint32_t>(std::stoul(meta("neurons")));

  // Shapes are validated against a freshly shaped parameter list.
  std::size_t in_ch = 1;
  std::vector<std::pair<std::string, nn::Shape>> expected;
  for (std::size_t i = 0; i < kConvLayers; ++i) {
    const auto& l = p.config_.conv[i];
    expected.emplace_back(fmt::format("conv{}.weight", i), nn::Shape{l.out_channels, in_ch, l.kernel});
    expected.emplace_back(fmt::format("conv{}.bias", i), nn::Shape{l.out_channels});
    in_ch = l.out_channels;
  }
  const std::array<std::size_t, kLinearLayers + 1> widths{p.config_.flattened_length(), p.config_.hidden[0],
                                                          p.config_.hidden[1], p.config_.h};
  for (std::size_t i = 0; i < kLinearLayers; ++i) {
    expected.emplace_back(fmt::format("linear{}.weight", i), nn::Shape{widths[i + 1], widths[i]});
    expected.emplace_back(fmt::format("linear{}.bias", i), nn::Shape{widths[i + 1]});
  }
  expected.emplace_back("head.W", nn::Shape{static_cast<std::size_t>(p.neurons_) * p.config_.h, p.config_.d});
  for (const auto& [name, shape] : expected) {
    const nn::Tensor* t = c.find_tensor(name);
    if (!t) fail(ErrorKind::FormatError, "checkpoint lacks tensor '" + name + "'");
    if (t->shape() != shape)
      fail(ErrorKind::ShapeError, "tensor '" + name + "' has shape " + nn::shape_string(t->shape()) + ", expected " +
                                      nn::shape_string(shape));
    p.params_.emplace_back(name, *t);
  }
  return p;
}

void EncoderParams::save(const std::filesystem::path& path) const { nn::save_checkpoint(path, to_checkpoint()); }

EncoderParams EncoderParams::load(const std::filesystem::path& path) {
  return from_checkpoint(nn::load_checkpoint(path));
}

bool operator==(const EncoderParams& a, const EncoderParams& b) {
  if (!(a.config_ == b.config_) || a.spec_id_ != b.spec_id_ || a.neurons_ != b.neurons_ ||
      a.params_.size() != b.params_.size())
    return false;
  for (std::size_t i = 0; i < a.params_.size(); ++i)
    if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value)) return false;
  return true;
}

// ---------------------------------------------------------------------------

nn::Tensor encode_rows(const EncoderParams& params, const nn::Tensor& rows) {
  const auto& cfg = params.config();
  if (rows.rank() != 2 || rows.dim(1) != cfg.bins)
    fail(ErrorKind::ShapeError, fmt::format("encoder input must be [B, {}], got {}", cfg.bins, nn::shape_string(rows.shape())));
  const std::size_t batch = rows.dim(0);
  nn::Tensor x = rows.reshaped({batch, 1, cfg.bins});
  for (auto& v : x.data()) v *= static_cast<double>(cfg.bins);
  for (std::size_t i = 0; i < kConvLayers; ++i) {
    x = nn::kernels::conv1d(x, params.conv_weight(i).value, params.conv_bias(i).value, cfg.conv[i].stride,
                            cfg.conv[i].padding);
    nn::kernels::relu_inplace(x);
  }
  x = x.reshaped({batch, x.size() / std::max<std::size_t>(batch, 1)});
  for (std::size_t i = 0; i < kLinearLayers; ++i) {
    x = nn::kernels::linear(x, params.linear_weight(i).value, params.linear_bias(i).value);
    if (i + 1 < kLinearLayers) nn::kernels::relu_inplace(x);
  }
  return nn::kernels::l2_normalize_rows(x);
}

std::vector<double> encode_histogram(std::span<const double> row, const EncoderParams& params) {
  if (row.size() != params.config().bins)
    fail(ErrorKind::ShapeError, fmt::format("histogram of length {} for an encoder with b = {}", row.size(),
                                            params.config().bins));
  const nn::Tensor out = encode_rows(params, nn::Tensor({1, row.size()}, std::vector<double>(row.begin(), row.end())));
  return std::vector<double>(out.data().begin(), out.data().end());
}

EncoderVars record_parameters(nn::Tape& tape, EncoderParams& params) {
  EncoderVars v;
  for (std::size_t i = 0; i < kConvLayers; ++i) {
    v.conv_w.push_back(tape.parameter(params.conv_weight(i)));
    v.conv_b.push_back(tape.parameter(params.conv_bias(i)));
  }
  for (std::size_t i = 0; i < kLinearLayers; ++i) {
    v.lin_w.push_back(tape.parameter(params.linear_weight(i)));
    v.lin_b.push_back(tape.parameter(params.linear_bias(i)));
  }
  v.head = tape.parameter(params.head());
  return v;
}

nn::Var encoder_forward(const EncoderVars& vars, const EncoderConfig& config, const nn::Var& rows) {
  const auto& shape = rows.shape();
  if (shape.size() != 2 || shape[1] != config.bins)
    fail(ErrorKind::ShapeError, fmt::format("encoder input must be [B, {}], got {}", config.bins, nn::shape_string(shape)));
  const std::size_t batch = shape[0];
  nn::Var x = nn::scale(nn::reshape(rows, {batch, 1, config.bins}), static_cast<double>(config.bins));
  for (std::size_t i = 0; i < kConvLayers; ++i)
    x = nn::relu(nn::conv1d(x, vars.conv_w[i], vars.conv_b[i], config.conv[i].stride, config.conv[i].padding));
  x = nn::reshape(x, {batch, config.flattened_length()});
  for (std::size_t i = 0; i < kLinearLayers; ++i) {
    x = nn::linear(x, vars.lin_w[i], vars.lin_b[i]);
    if (i + 1 < kLinearLayers) x = nn::relu(x);
  }
  return nn::l2_normalize_rows(x);
}

// ---------------------------------------------------------------------------

NeuronSelection NeuronSelection::all() { return NeuronSelection{}; }

NeuronSelection NeuronSelection::neurons(std::vector<std::uint32_t> indices) {
  NeuronSelection s;
  s.mode_ = Mode::Neurons;
  s.indices_ = std::move(indices);
  return s;
}

NeuronSelection NeuronSelection::layers(std::int32_t first, std::int32_t last) {
  NeuronSelection s;
  s.mode_ = Mode::Layers;
  s.first_ = first;
  s.last_ = last;
  return s;
}

NeuronSelection NeuronSelection::parse(const std::string& text) {
  try {
    if (text == "all") return all();
    if (text.rfind("layer:", 0) == 0) {
      const int l = std::stoi(text.substr(6));
      return layers(l, l);
    }
    if (text.rfind("layers:", 0) == 0) {
      const std::string rest = text.substr(7);
      const auto colon = rest.find(':');
      if (colon == std::string::npos) {
        const int l = std::stoi(rest);
        return layers(l, l);
      }
      return layers(std::stoi(rest.substr(0, colon)), std::stoi(rest.substr(colon + 1)));
    }
    if (text.rfind("neurons:", 0) == 0) {
      std::vector<std::uint32_t> idx;
      std::istringstream in(text.substr(8));
      std::string tok;
      while (std::getline(in, tok, ',')) idx.push_back(static_cast<std::uint32_t>(std::stoul(tok)));
      return neurons(std::move(idx));
    }
  } catch (const std::logic_error&) {
  }
  fail(ErrorKind::SelectionError, "cannot parse selection '" + text + "'");
}

std::vector<std::uint32_t> NeuronSelection::resolve(const vdna::HistogramSpec& spec) const {
  std::vector<std::uint32_t> out;
  switch (mode_) {
    case Mode::All:
      out.resize(spec.neuron_count());
      for (std::uint32_t i = 0; i < out.size(); ++i) out[i] = i;
      break;
    case Mode::Neurons:
      out = indices_;
      std::sort(out.begin(), out.end());
      if (std::adjacent_find(out.begin(), out.end()) != out.end())
        fail(ErrorKind::SelectionError, "duplicate neuron index in selection");
      if (!out.empty() && out.back() >= spec.neuron_count())
        fail(ErrorKind::SelectionError, fmt::format("unknown neuron index {} (spec has {})", out.back(), spec.neuron_count()));
      break;
    case Mode::Layers: {
      if (first_ > last_) fail(ErrorKind::SelectionError, fmt::format("empty layer range {}:{}", first_, last_));
      for (std::int32_t l = first_; l <= last_; ++l) {
        const auto pos = spec.layer_position(l);
        if (!pos) fail(ErrorKind::SelectionError, fmt::format("unknown layer {}", l));
      }
      for (std::size_t pos = 0; pos < spec.layers().size(); ++pos) {
        const auto label = spec.layers()[pos].index;
        if (label < first_ || label > last_) continue;
        const auto [b, e] = spec.layer_span(pos);
        for (std::size_t i = b; i < e; ++i) out.push_back(static_cast<std::uint32_t>(i));
      }
      std::sort(out.begin(), out.end());
      break;
    }
  }
  if (out.empty()) fail(ErrorKind::SelectionError, "selection is empty");
  return out;
}

std::string NeuronSelection::to_string() const {
  switch (mode_) {
    case Mode::All: return "all";
    case Mode::Layers: return first_ == last_ ? fmt::format("layer:{}", first_) : fmt::format("layers:{}:{}", first_, last_);
    case Mode::Neurons: {
      std::string s = "neurons:";
      for (std::size_t i = 0; i < indices_.size(); ++i) s += (i ? "," : "") + std::to_string(indices_[i]);
      return s;
    }
  }
  return "all";
}

Descriptor encode_vdna(const vdna::HistogramSpec& spec, const vdna::NormalizedVdna& v, const EncoderParams& params,
                       const NeuronSelection& selection, std::size_t threads) {
  if (v.spec_id() != params.spec_id() || spec.id() != params.spec_id())
    fail(ErrorKind::SpecMismatch, "VDNA spec " + vdna::spec_id_hex(v.spec_id()) + ", encoder spec " +
                                      vdna::spec_id_hex(params.spec_id()));
  if (v.bins() != params.config().bins) fail(ErrorKind::ShapeError, "VDNA bins differ from encoder input length");
  const auto neurons = selection.resolve(spec);
  const std::size_t h = params.config().h;
  const std::size_t b = v.bins();
  Descriptor d;
  d.kind = DescriptorKind::NeuronConcat;
  d.selection = selection.to_string();
  d.values.resize(neurons.size() * h);

  constexpr std::size_t kChunk = 256;
  const std::size_t chunks = (neurons.size() + kChunk - 1) / kChunk;
  parallel_for(chunks, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t c = begin; c < end; ++c) {
      const std::size_t lo = c * kChunk;
      const std::size_t hi = std::min(neurons.size(), lo + kChunk);
      nn::Tensor rows({hi - lo, b});
      for (std::size_t r = lo; r < hi; ++r) {
        const auto src = v.row(neurons[r]);
        std::copy(src.begin(), src.end(), rows.data().begin() + (r - lo) * b);
      }
      const nn::Tensor enc = encode_rows(params, rows);
      std::copy(enc.data().begin(), enc.data().end(), d.values.begin() + lo * h);
    }
  });
  return d;
}

Descriptor project_w(std::span<const double> e, const EncoderParams& params) {
  const std::size_t nh = static_cast<std::size_t>(params.neuron_count()) * params.config().h;
  if (e.size() != nh) fail(ErrorKind::ShapeError, fmt::format("W projection needs length {}, got {}", nh, e.size()));
  const nn::Tensor x({1, nh}, std::vector<double>(e.begin(), e.end()));
  const nn::Tensor y = nn::kernels::l2_normalize_rows(nn::kernels::matmul(x, params.head().value));
  Descriptor d;
  d.kind = DescriptorKind::WOutput;
  d.selection = "W";
  d.values.assign(y.data().begin(), y.data().end());
  return d;
}

}  // namespace vdnapr::encoder
