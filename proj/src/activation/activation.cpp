#include "vdnapr/activation.hpp"

#include <cmath>

#include "vdnapr/binary_io.hpp"
#include "vdnapr/error.hpp"

namespace vdnapr::activation {

std::size_t ActivationFrame::neuron_count() const {
  std::size_t n = 0;
  for (const auto& s : shapes) n += s.neuron_count;
  return n;
}

std::span<const float> ActivationFrame::neuron_values(std::size_t layer, std::size_t neuron) const {
  const auto& s = shapes.at(layer);
  if (neuron >= s.neuron_count) fail(ErrorKind::ShapeError, "neuron index out of range for layer");
  return std::span<const float>(layers[layer]).subspan(neuron * s.samples, s.samples);
}

void ActivationFrame::validate() const {
  if (layers.size() != shapes.size())
    fail(ErrorKind::ShapeError, "frame " + frame_id + ": " + std::to_string(layers.size()) + " layer arrays for " +
                                    std::to_string(shapes.size()) + " declared layers");
  std::size_t base = 0;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    const auto& s = shapes[l];
    if (layers[l].size() != static_cast<std::size_t>(s.neuron_count) * s.samples)
      fail(ErrorKind::ShapeError, "frame " + frame_id + ": layer " + std::to_string(l) + " has " +
                                      std::to_string(layers[l].size()) + " values, expected " +
                                      std::to_string(static_cast<std::size_t>(s.neuron_count) * s.samples));
    for (std::size_t i = 0; i < layers[l].size(); ++i) {
      if (!std::isfinite(layers[l][i])) {
        const std::size_t neuron = base + (s.samples ? i / s.samples : 0);
        fail(ErrorKind::InvalidActivation,
             "non-finite value for neuron " + std::to_string(neuron) + " in frame " + frame_id);
      }
    }
    base += s.neuron_count;
  }
}

namespace {

constexpr char kMagic[] = "VACT";

std::vector<std::size_t> subsample_indices(std::uint32_t samples, std::uint32_t cap) {
  std::vector<std::size_t> idx;
  if (cap == 0 || samples <= cap) {
    idx.resize(samples);
    for (std::uint32_t k = 0; k < samples; ++k) idx[k] = k;
    return idx;
  }
  idx.resize(cap);
  for (std::uint32_t k = 0; k < cap; ++k)
    idx[k] = static_cast<std::size_t>((static_cast<std::uint64_t>(k) * samples) / cap);
  return idx;
}

}  // namespace

struct ActivationReader::State {
  std::ifstream in;
  std::unique_ptr<io::BinaryReader> reader;
  std::vector<std::vector<std::size_t>> keep;
  std::vector<float> scratch;
};

ActivationReader::ActivationReader(const std::filesystem::path& path, std::uint32_t max_samples)
    : state_(std::make_unique<State>()), max_samples_(max_samples) {
  state_->in = io::open_input(path);
  state_->reader = std::make_unique<io::BinaryReader>(state_->in, path.string());
  auto& r = *state_->reader;
  r.expect_magic(kMagic);
  const auto version = r.u32("version");
  if (version != kActivationFormatVersion)
    fail(ErrorKind::FormatError, path.string() + ": unsupported VACT version " + std::to_string(version));
  const auto layer_count = r.u32("layer count");
  shapes_.resize(layer_count);
  for (auto& s : shapes_) {
    s.neuron_count = r.u32("neuron count");
    s.samples = r.u32("sample count");
    if (s.neuron_count == 0 || s.samples == 0)
      fail(ErrorKind::ShapeError, path.string() + ": layer with zero neurons or samples");
  }
  frame_count_ = r.u64("frame count");
  for (const auto& s : shapes_) state_->keep.push_back(subsample_indices(s.samples, max_samples_));
}

ActivationReader::~ActivationReader() = default;

std::vector<LayerShape> ActivationReader::output_shapes() const {
  std::vector<LayerShape> out = shapes_;
  for (std::size_t l = 0; l < out.size(); ++l) out[l].samples = static_cast<std::uint32_t>(state_->keep[l].size());
  return out;
}

std::optional<ActivationFrame> ActivationReader::next() {
  auto& r = *state_->reader;
  if (frames_read_ >= frame_count_) {
    if (!r.at_end())
      fail(ErrorKind::ShapeError, r.source() + ": trailing bytes after " + std::to_string(frame_count_) +
                                      " frames at offset " + std::to_string(r.offset()));
    return std::nullopt;
  }
  ActivationFrame frame;
  frame.frame_id = r.short_string("frame id");
  frame.shapes = output_shapes();
  frame.layers.resize(shapes_.size());
  for (std::size_t l = 0; l < shapes_.size(); ++l) {
    const auto& s = shapes_[l];
    const auto& keep = state_->keep[l];
    auto& scratch = state_->scratch;
    scratch.resize(static_cast<std::size_t>(s.neuron_count) * s.samples);
    r.f32_array(scratch, "activation values");
    auto& dst = frame.layers[l];
    if (keep.size() == s.samples) {
      dst = scratch;
    } else {
      dst.resize(static_cast<std::size_t>(s.neuron_count) * keep.size());
      for (std::size_t n = 0; n < s.neuron_count; ++n)
        for (std::size_t k = 0; k < keep.size(); ++k) dst[n * keep.size() + k] = scratch[n * s.samples + keep[k]];
    }
  }
  ++frames_read_;
  frame.validate();
  return frame;
}

ActivationWriter::ActivationWriter(const std::filesystem::path& path, std::vector<LayerShape> shapes)
    : out_(io::open_output(path)), shapes_(std::move(shapes)) {
  io::BinaryWriter w(out_);
  w.magic(kMagic);
  w.u32(kActivationFormatVersion);
  w.u32(static_cast<std::uint32_t>(shapes_.size()));
  for (const auto& s : shapes_) {
    if (s.neuron_count == 0 || s.samples == 0) fail(ErrorKind::ShapeError, "layer with zero neurons or samples");
    w.u32(s.neuron_count);
    w.u32(s.samples);
  }
  count_offset_ = out_.tellp();
  w.u64(0);
}

ActivationWriter::~ActivationWriter() {
  try {
    close();
  } catch (...) {
  }
}

void ActivationWriter::write(const ActivationFrame& frame) {
  if (closed_) fail(ErrorKind::IoError, "write after close");
  if (frame.shapes != shapes_) fail(ErrorKind::ShapeError, "frame " + frame.frame_id + " does not match file layers");
  frame.validate();
  io::BinaryWriter w(out_);
  w.short_string(frame.frame_id);
  for (const auto& layer : frame.layers) io::write_f32_array(w, layer, out_);
  ++count_;
}

void ActivationWriter::close() {
  if (closed_) return;
  closed_ = true;
  out_.seekp(count_offset_);
  io::BinaryWriter w(out_);
  w.u64(count_);
  out_.close();
}

void write_activation_file(const std::filesystem::path& path, std::span<const LayerShape> shapes,
                           std::span<const ActivationFrame> frames) {
  ActivationWriter writer(path, std::vector<LayerShape>(shapes.begin(), shapes.end()));
  for (const auto& f : frames) writer.write(f);
  writer.close();
}

}  // namespace vdnapr::activation
