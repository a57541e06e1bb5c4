#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vdnapr::activation {

struct LayerShape {
  std::uint32_t neuron_count = 0;
  std::uint32_t samples = 0;  // values contributed per neuron per image

  friend bool operator==(const LayerShape&, const LayerShape&) = default;
};

/// Activations of one image: per layer a dense neuron-major array
/// (neuron_count x samples).
struct ActivationFrame {
  std::string frame_id;
  std::vector<LayerShape> shapes;
  std::vector<std::vector<float>> layers;

  std::size_t neuron_count() const;
  std::span<const float> neuron_values(std::size_t layer, std::size_t neuron) const;
  /// Throws ShapeError if an array does not match its declared shape and
  /// InvalidActivation on the first non-finite value.
  void validate() const;

  friend bool operator==(const ActivationFrame&, const ActivationFrame&) = default;
};

/// Single-consumer stream of frames.
class ActivationSource {
 public:
  virtual ~ActivationSource() = default;
  virtual std::optional<ActivationFrame> next() = 0;
};

/// In-memory source, mostly for tests and small pipelines.
class VectorSource final : public ActivationSource {
 public:
  explicit VectorSource(std::vector<ActivationFrame> frames) : frames_(std::move(frames)) {}
  std::optional<ActivationFrame> next() override {
    if (pos_ >= frames_.size()) return std::nullopt;
    return frames_[pos_++];
  }

 private:
  std::vector<ActivationFrame> frames_;
  std::size_t pos_ = 0;
};

inline constexpr std::uint32_t kActivationFormatVersion = 1;
inline constexpr std::uint32_t kDefaultMaxSamples = 256;

/// Streaming reader for VACT files. Frames are yielded in file order with
/// constant memory. Layers whose sample count exceeds `max_samples` are
/// subsampled with a deterministic stride (sample k -> floor(k * S / cap)).
class ActivationReader final : public ActivationSource {
 public:
  explicit ActivationReader(const std::filesystem::path& path, std::uint32_t max_samples = kDefaultMaxSamples);
  ~ActivationReader() override;

  const std::vector<LayerShape>& file_shapes() const noexcept { return shapes_; }
  /// Shapes of yielded frames after subsampling.
  std::vector<LayerShape> output_shapes() const;
  std::uint64_t frame_count() const noexcept { return frame_count_; }

  std::optional<ActivationFrame> next() override;

 private:
  struct State;
  std::unique_ptr<State> state_;
  std::vector<LayerShape> shapes_;
  std::uint64_t frame_count_ = 0;
  std::uint64_t frames_read_ = 0;
  std::uint32_t max_samples_;
};

/// Streaming VACT writer. The frame count in the header is patched by
/// `close()` (also called from the destructor).
class ActivationWriter {
 public:
  ActivationWriter(const std::filesystem::path& path, std::vector<LayerShape> shapes);
  ~ActivationWriter();
  ActivationWriter(const ActivationWriter&) = delete;
  ActivationWriter& operator=(const ActivationWriter&) = delete;

  void write(const ActivationFrame& frame);
  void close();

 private:
  std::ofstream out_;
  std::vector<LayerShape> shapes_;
  std::uint64_t count_ = 0;
  std::streamoff count_offset_ = 0;
  bool closed_ = false;
};

void write_activation_file(const std::filesystem::path& path, std::span<const LayerShape> shapes,
                           std::span<const ActivationFrame> frames);

}  // namespace vdnapr::activation
