#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "vdnapr/activation.hpp"
#include "vdnapr/histogram_spec.hpp"

namespace vdnapr::vdna {

/// Per-neuron activation histograms (N x b integer counts) over a set of
/// images, bound to the HistogramSpec whose id it carries.
class Vdna {
 public:
  Vdna() = default;
  explicit Vdna(const HistogramSpec& spec);
  /// Raw constructor for deserialization; checks shape consistency.
  Vdna(SpecId spec_id, std::uint32_t neurons, std::uint32_t bins, std::uint64_t image_count,
       std::vector<std::uint64_t> counts);

  const SpecId& spec_id() const noexcept { return spec_id_; }
  std::uint32_t neurons() const noexcept { return neurons_; }
  std::uint32_t bins() const noexcept { return bins_; }
  std::uint64_t image_count() const noexcept { return image_count_; }
  std::span<const std::uint64_t> counts() const noexcept { return counts_; }
  std::span<const std::uint64_t> row(std::size_t neuron) const;
  /// Total values inserted for `neuron` (row sum).
  std::uint64_t sample_count(std::size_t neuron) const;

  /// Adds one image. All values are validated before any count changes.
  void add_image(const HistogramSpec& spec, const activation::ActivationFrame& frame);
  void merge_from(const Vdna& other);

  void write(std::ostream& out) const;
  static Vdna read(std::istream& in, const std::string& source = "stream");
  void save(const std::filesystem::path& path) const;
  static Vdna load(const std::filesystem::path& path);

  friend bool operator==(const Vdna&, const Vdna&) = default;

 private:
  SpecId spec_id_{};
  std::uint32_t neurons_ = 0;
  std::uint32_t bins_ = 0;
  std::uint64_t image_count_ = 0;
  std::vector<std::uint64_t> counts_;
};

inline constexpr std::uint32_t kVdnaFormatVersion = 1;

Vdna accumulate(Vdna vdna, const activation::ActivationFrame& frame, const HistogramSpec& spec);
Vdna merge(const Vdna& a, const Vdna& b);

/// Shard-and-merge accumulation of `frames` on up to `threads` workers.
Vdna accumulate_all(const HistogramSpec& spec, std::span<const activation::ActivationFrame> frames,
                    std::size_t threads = 1);

/// Row-normalized histograms. Empty rows are stored as uniform 1/b and flagged.
class NormalizedVdna {
 public:
  NormalizedVdna() = default;
  NormalizedVdna(SpecId spec_id, std::uint32_t neurons, std::uint32_t bins, std::vector<double> mass,
                 std::vector<std::uint8_t> empty_rows);

  const SpecId& spec_id() const noexcept { return spec_id_; }
  std::uint32_t neurons() const noexcept { return neurons_; }
  std::uint32_t bins() const noexcept { return bins_; }
  std::span<const double> mass() const noexcept { return mass_; }
  std::span<const double> row(std::size_t neuron) const;
  bool row_empty(std::size_t neuron) const { return empty_.at(neuron) != 0; }

  friend bool operator==(const NormalizedVdna&, const NormalizedVdna&) = default;

 private:
  SpecId spec_id_{};
  std::uint32_t neurons_ = 0;
  std::uint32_t bins_ = 0;
  std::vector<double> mass_;
  std::vector<std::uint8_t> empty_;
};

NormalizedVdna normalize(const Vdna& vdna);

/// Exact 1D EMD on a shared bin grid: bin_width * sum_k |CDF_p(k) - CDF_q(k)|.
double emd_neuron(std::span<const double> p, std::span<const double> q, double bin_width);

/// Weighted mean of per-neuron EMDs measured in activation units of `spec`.
/// Default weights are uniform.
double emd_vdna(const HistogramSpec& spec, const NormalizedVdna& a, const NormalizedVdna& b,
                std::optional<std::span<const double>> neuron_weights = std::nullopt);
/// Same, with every neuron measured in bin units (bin width 1).
double emd_vdna(const NormalizedVdna& a, const NormalizedVdna& b,
                std::optional<std::span<const double>> neuron_weights = std::nullopt);

}  // namespace vdnapr::vdna
