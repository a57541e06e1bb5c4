#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "vdnapr/activation.hpp"

namespace vdnapr::world {

/// Ground-truth correctness radius: either meters or a frame-index radius.
struct Threshold {
  enum class Unit { Meters, Frames };
  Unit unit = Unit::Meters;
  double value = 25.0;

  /// Accepts "25", "25m", "25 meters", "2f", "2frames", "2 frames".
  static Threshold parse(const std::string& text);
  std::string to_string() const;

  friend bool operator==(const Threshold&, const Threshold&) = default;
};

struct ManifestFrame {
  std::string frame_id;
  std::string traversal_id;
  double x = 0.0;
  double y = 0.0;
  double timestamp = 0.0;

  friend bool operator==(const ManifestFrame&, const ManifestFrame&) = default;
};

struct WorldManifest {
  std::vector<ManifestFrame> frames;
  Threshold threshold;
  std::string domain_tag = "unknown";

  /// Unique frame ids; timestamps non-decreasing within each traversal.
  void validate() const;
  void save(const std::filesystem::path& path) const;
  static WorldManifest load(const std::filesystem::path& path);

  friend bool operator==(const WorldManifest&, const WorldManifest&) = default;
};

/// One window of consecutive frames from a single traversal.
struct SequenceRecord {
  std::string seq_id;
  std::string traversal_id;
  std::vector<std::string> frame_ids;
  std::uint32_t first_index = 0;   // position of the first frame within its traversal
  std::uint32_t middle_index = 0;  // position of the representative frame
  double x = 0.0;                  // representative pose
  double y = 0.0;

  friend bool operator==(const SequenceRecord&, const SequenceRecord&) = default;
};

/// True if two records are within `threshold` of each other: Euclidean pose
/// distance for meters, |middle_index difference| for frames.
bool within_threshold(const SequenceRecord& a, const SequenceRecord& b, const Threshold& threshold);
double pose_distance(const SequenceRecord& a, const SequenceRecord& b);

struct Windowing {
  std::vector<SequenceRecord> sequences;
  std::size_t short_traversals = 0;  // traversals with fewer than seq_len frames
};

/// Consecutive-frame windows, never spanning traversals. Representative pose
/// is the middle frame (lower-middle for even lengths).
Windowing window_sequences(const WorldManifest& manifest, std::size_t seq_len, std::size_t stride);

/// Records whose frames all lie in [begin, end) of their traversal.
std::vector<SequenceRecord> filter_by_frame_range(const std::vector<SequenceRecord>& records, std::uint32_t begin,
                                                  std::uint32_t end);
std::vector<SequenceRecord> filter_by_traversal(const std::vector<SequenceRecord>& records,
                                                const std::string& traversal_id);

void save_sequences(const std::filesystem::path& path, const std::vector<SequenceRecord>& records);
std::vector<SequenceRecord> load_sequences(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic world

struct SyntheticWorldConfig {
  std::uint64_t seed = 7;
  std::uint32_t places = 200;
  std::uint32_t traversals = 2;
  double step_m = 10.0;
  double pose_jitter_m = 1.0;
  double threshold_m = 25.0;

  std::uint32_t layers = 6;
  std::uint32_t neurons_per_layer = 16;
  std::uint32_t samples_per_neuron = 64;
  std::uint32_t latent_dim = 8;

  // Per-layer gains are interpolated linearly from the first to the last layer.
  double place_gain_first = 0.1;
  double place_gain_last = 1.0;
  double appearance_gain_first = 1.0;
  double appearance_gain_last = 0.1;

  double appearance_scale = 1.0;       // per-traversal offset magnitude
  double frame_appearance_scale = 1.0; // per-frame drift around the traversal offset
  double noise_scale = 0.05;           // per-sample noise
  double place_correlation = 0.8;      // AR(1) coefficient of the place latent along the route
  double place_weight_scale = 1.5;     // spread of the pre-tanh place response
  double spread_scale = 0.3;           // base within-image spread of a neuron
  double spread_gain = 0.5;            // how strongly the place modulates that spread

  void validate() const;
};

/// Deterministic synthetic world. Frame `k` of the manifest is produced by
/// `frame(k)`, a pure function of (config, k).
class SyntheticWorld {
 public:
  explicit SyntheticWorld(SyntheticWorldConfig config);

  const SyntheticWorldConfig& config() const noexcept { return config_; }
  const WorldManifest& manifest() const noexcept { return manifest_; }
  std::vector<activation::LayerShape> shapes() const;
  std::size_t frame_count() const noexcept { return manifest_.frames.size(); }

  activation::ActivationFrame frame(std::size_t index) const;
  double place_gain(std::uint32_t layer) const;
  double appearance_gain(std::uint32_t layer) const;

 private:
  SyntheticWorldConfig config_;
  WorldManifest manifest_;
  std::vector<double> place_latent_;      // places x latent
  std::vector<double> neuron_spread_;     // neurons x latent
  std::vector<double> neuron_weights_;    // neurons x latent
  std::vector<double> neuron_bias_;       // neurons
  std::vector<double> neuron_appearance_; // neurons x latent
  std::vector<double> traversal_offset_;  // traversals x latent
};

SyntheticWorld generate_world(const SyntheticWorldConfig& config);

/// Streams a world's frames in manifest order.
class WorldSource final : public activation::ActivationSource {
 public:
  explicit WorldSource(const SyntheticWorld& world) : world_(world) {}
  std::optional<activation::ActivationFrame> next() override {
    if (pos_ >= world_.frame_count()) return std::nullopt;
    return world_.frame(pos_++);
  }

 private:
  const SyntheticWorld& world_;
  std::size_t pos_ = 0;
};

}  // namespace vdnapr::world
