#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "vdnapr/encoder.hpp"
#include "vdnapr/histogram_spec.hpp"
#include "vdnapr/world.hpp"

namespace vdnapr::retrieval {

/// Descriptor matrix (f32, row-major) plus the sequence record of every row.
struct DescriptorDb {
  std::uint32_t dim = 0;
  encoder::DescriptorKind kind = encoder::DescriptorKind::NeuronConcat;
  std::string selection = "all";
  std::vector<float> matrix;
  std::vector<world::SequenceRecord> records;

  std::size_t size() const noexcept { return records.size(); }
  std::span<const float> row(std::size_t i) const { return std::span<const float>(matrix).subspan(i * dim, dim); }
  /// Appends one descriptor; the first one fixes `dim`, later ones must match.
  void add(const world::SequenceRecord& record, std::span<const double> values);

  void save(const std::filesystem::path& path) const;
  static DescriptorDb load(const std::filesystem::path& path);

  friend bool operator==(const DescriptorDb&, const DescriptorDb&) = default;
};

inline constexpr std::uint32_t kDbFormatVersion = 1;

/// Neuron-concat sub-descriptor of every row: the h-blocks of `neurons`
/// (ascending) taken out of a full "all" database.
DescriptorDb slice_db(const DescriptorDb& full, std::span<const std::uint32_t> neurons, std::size_t h,
                      const std::string& selection);

struct Neighbor {
  std::size_t index = 0;
  double distance = 0.0;  // squared L2, accumulated in f64

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Exact k nearest rows by squared L2 distance; ties go to the lower index.
std::vector<Neighbor> knn(const DescriptorDb& db, std::span<const float> query, std::size_t k);

struct EvalReport {
  std::vector<std::size_t> ns;
  std::vector<double> recall;  // percent, one per N
  std::size_t evaluated = 0;
  std::size_t excluded = 0;    // queries with no ground-truth positive in the database
  world::Threshold threshold;
  std::size_t db_size = 0;

  double at(std::size_t n) const;
  std::string to_text() const;
};

/// R@N = 100 * (queries with a ground-truth positive among their top N) / evaluated.
EvalReport recall_at_n(const DescriptorDb& db, const DescriptorDb& queries, std::span<const std::size_t> ns,
                       const world::Threshold& threshold);

struct SweepEntry {
  std::string label;
  std::string selection;
  std::size_t length = 0;
  EvalReport report;
};

/// Per-layer evaluation plus any extra layer ranges, sliced out of full
/// neuron-concat databases. `ranges` holds inclusive (first, last) label pairs.
std::vector<SweepEntry> layer_sweep(const vdna::HistogramSpec& spec, std::size_t h, const DescriptorDb& db_all,
                                    const DescriptorDb& queries_all,
                                    const std::vector<std::pair<std::int32_t, std::int32_t>>& ranges,
                                    std::span<const std::size_t> ns, const world::Threshold& threshold);

std::string sweep_table(const std::vector<SweepEntry>& entries);
/// Line chart of every R@N series across the sweep entries.
std::string sweep_svg(const std::vector<SweepEntry>& entries, const std::string& title);

/// Descriptors of `vdnas` under `params`: neuron-concat for `selection`, or the
/// W output when `use_w` is set.
DescriptorDb build_db(const vdna::HistogramSpec& spec, const encoder::EncoderParams& params,
                      const std::vector<world::SequenceRecord>& records, const std::vector<vdna::NormalizedVdna>& vdnas,
                      const encoder::NeuronSelection& selection, bool use_w, std::size_t threads = 1);

}  // namespace vdnapr::retrieval
