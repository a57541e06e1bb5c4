#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vdnapr/histogram_spec.hpp"
#include "vdnapr/nn/autodiff.hpp"
#include "vdnapr/nn/checkpoint.hpp"
#include "vdnapr/nn/tensor.hpp"
#include "vdnapr/vdna.hpp"

namespace vdnapr::encoder {

struct ConvLayerSpec {
  std::uint32_t out_channels = 8;
  std::uint32_t kernel = 5;
  std::uint32_t stride = 1;
  std::uint32_t padding = 2;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

inline constexpr std::size_t kConvLayers = 6;
inline constexpr std::size_t kLinearLayers = 3;

/// Shared per-neuron histogram encoder E (six 1D convolutions, three linear
/// layers) plus the output width d of the training head W.
struct EncoderConfig {
  std::uint32_t bins = 500;
  std::uint32_t h = 4;
  std::array<ConvLayerSpec, kConvLayers> conv{};
  std::array<std::uint32_t, kLinearLayers - 1> hidden{256, 64};
  std::uint32_t d = 128;

  /// 1->8->8->16->16->32->32 channels, kernel 5, stride 2 on layers 2/4/6,
  /// linear 2016->256->64->h for b = 500.
  static EncoderConfig standard(std::uint32_t bins = 500, std::uint32_t h = 4, std::uint32_t d = 128);
  /// 1->4->4->8->8->8->8 channels, kernel 3, linear ->32->16->h. For small
  /// synthetic topologies.
  static EncoderConfig compact(std::uint32_t bins, std::uint32_t h = 4, std::uint32_t d = 32);

  /// Per-layer output lengths of the conv stack (index 0 is the input length).
  std::vector<std::size_t> conv_lengths() const;
  std::size_t flattened_length() const;
  void validate() const;
  std::string to_string() const;
  static EncoderConfig parse(const std::string& text);

  friend bool operator==(const EncoderConfig&, const EncoderConfig&) = default;
};

/// Weights of E and of the head W, bound to one HistogramSpec.
class EncoderParams {
 public:
  static EncoderParams initialize(const EncoderConfig& config, const vdna::HistogramSpec& spec, std::uint64_t seed);

  const EncoderConfig& config() const noexcept { return config_; }
  const vdna::SpecId& spec_id() const noexcept { return spec_id_; }
  std::uint32_t neuron_count() const noexcept { return neurons_; }

  nn::Parameter& conv_weight(std::size_t i) { return params_.at(2 * i); }
  nn::Parameter& conv_bias(std::size_t i) { return params_.at(2 * i + 1); }
  nn::Parameter& linear_weight(std::size_t i) { return params_.at(2 * kConvLayers + 2 * i); }
  nn::Parameter& linear_bias(std::size_t i) { return params_.at(2 * kConvLayers + 2 * i + 1); }
  nn::Parameter& head() { return params_.back(); }
  const nn::Parameter& conv_weight(std::size_t i) const { return params_.at(2 * i); }
  const nn::Parameter& conv_bias(std::size_t i) const { return params_.at(2 * i + 1); }
  const nn::Parameter& linear_weight(std::size_t i) const { return params_.at(2 * kConvLayers + 2 * i); }
  const nn::Parameter& linear_bias(std::size_t i) const { return params_.at(2 * kConvLayers + 2 * i + 1); }
  const nn::Parameter& head() const { return params_.back(); }

  /// E parameters followed by W.
  std::vector<nn::Parameter*> parameters();
  std::span<const nn::Parameter> all() const noexcept { return params_; }
  std::span<nn::Parameter> all() noexcept { return params_; }
  void zero_grad();

  nn::Checkpoint to_checkpoint() const;
  static EncoderParams from_checkpoint(const nn::Checkpoint& checkpoint);
  void save(const std::filesystem::path& path) const;
  static EncoderParams load(const std::filesystem::path& path);

  friend bool operator==(const EncoderParams& a, const EncoderParams& b);

 private:
  EncoderConfig config_;
  vdna::SpecId spec_id_{};
  std::uint32_t neurons_ = 0;
  std::vector<nn::Parameter> params_;
};

/// Forward pass of E for a batch of histogram rows [B, b] -> [B, h], each
/// output row L2-normalized.
nn::Tensor encode_rows(const EncoderParams& params, const nn::Tensor& rows);

/// E applied to one normalized histogram.
std::vector<double> encode_histogram(std::span<const double> row, const EncoderParams& params);

/// Tape-recorded E; `rows` is [B, b]. Returns normalized [B, h].
struct EncoderVars {
  std::vector<nn::Var> conv_w, conv_b, lin_w, lin_b;
  nn::Var head;
};
EncoderVars record_parameters(nn::Tape& tape, EncoderParams& params);
nn::Var encoder_forward(const EncoderVars& vars, const EncoderConfig& config, const nn::Var& rows);

enum class DescriptorKind : std::uint8_t { WOutput = 0, NeuronConcat = 1 };

/// Which neurons feed a neuron-concat descriptor.
class NeuronSelection {
 public:
  static NeuronSelection all();
  static NeuronSelection neurons(std::vector<std::uint32_t> indices);
  /// Inclusive range of layer labels, e.g. layers(11, 12).
  static NeuronSelection layers(std::int32_t first, std::int32_t last);
  /// "all", "layer:12", "layers:9:12", "neurons:0,4,7".
  static NeuronSelection parse(const std::string& text);

  /// Ascending neuron indices; SelectionError on unknown neurons or layers.
  std::vector<std::uint32_t> resolve(const vdna::HistogramSpec& spec) const;
  std::string to_string() const;

 private:
  enum class Mode { All, Neurons, Layers };
  Mode mode_ = Mode::All;
  std::vector<std::uint32_t> indices_;
  std::int32_t first_ = 0;
  std::int32_t last_ = 0;
};

struct Descriptor {
  DescriptorKind kind = DescriptorKind::NeuronConcat;
  std::vector<double> values;
  std::string selection;  // selection text for neuron-concat, "W" for head output
};

/// Per-neuron h-vectors of the selected neurons, concatenated in neuron order.
Descriptor encode_vdna(const vdna::HistogramSpec& spec, const vdna::NormalizedVdna& v, const EncoderParams& params,
                       const NeuronSelection& selection, std::size_t threads = 1);

/// e * W followed by L2 normalization; `e` must be the full N*h concatenation.
Descriptor project_w(std::span<const double> e, const EncoderParams& params);

}  // namespace vdnapr::encoder
