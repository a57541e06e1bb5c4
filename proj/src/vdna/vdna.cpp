#include "vdnapr/vdna.hpp"

#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "vdnapr/binary_io.hpp"
#include "vdnapr/error.hpp"
#include "vdnapr/parallel.hpp"

namespace vdnapr::vdna {

namespace {

constexpr char kMagic[] = "VDNA";

void require_same_spec(const SpecId& a, const SpecId& b) {
  if (a != b) fail(ErrorKind::SpecMismatch, "spec " + spec_id_hex(a) + " vs " + spec_id_hex(b));
}

}  // namespace

Vdna::Vdna(const HistogramSpec& spec)
    : spec_id_(spec.id()),
      neurons_(static_cast<std::uint32_t>(spec.neuron_count())),
      bins_(spec.bins()),
      counts_(spec.neuron_count() * spec.bins(), 0) {}

Vdna::Vdna(SpecId spec_id, std::uint32_t neurons, std::uint32_t bins, std::uint64_t image_count,
           std::vector<std::uint64_t> counts)
    : spec_id_(spec_id), neurons_(neurons), bins_(bins), image_count_(image_count), counts_(std::move(counts)) {
  if (counts_.size() != static_cast<std::size_t>(neurons_) * bins_)
    fail(ErrorKind::ShapeError, "count matrix does not match N x b");
  const bool any = std::any_of(counts_.begin(), counts_.end(), [](std::uint64_t c) { return c != 0; });
  if ((image_count_ == 0) == any) fail(ErrorKind::FormatError, "image count inconsistent with counts");
}

std::span<const std::uint64_t> Vdna::row(std::size_t neuron) const {
  if (neuron >= neurons_) fail(ErrorKind::ShapeError, "neuron index out of range");
  return std::span<const std::uint64_t>(counts_).subspan(neuron * bins_, bins_);
}

std::uint64_t Vdna::sample_count(std::size_t neuron) const {
  const auto r = row(neuron);
  return std::accumulate(r.begin(), r.end(), std::uint64_t{0});
}

void Vdna::add_image(const HistogramSpec& spec, const activation::ActivationFrame& frame) {
  require_same_spec(spec_id_, spec.id());
  if (!spec.matches(frame))
    fail(ErrorKind::SpecMismatch, "frame " + frame.frame_id + " does not cover the spec's neuron topology");
  std::size_t base = 0;
  for (std::size_t l = 0; l < frame.shapes.size(); ++l) {
    if (frame.shapes[l].samples == 0) fail(ErrorKind::ShapeError, "frame " + frame.frame_id + " has no samples");
    for (std::size_t n = 0; n < frame.shapes[l].neuron_count; ++n) {
      for (float v : frame.neuron_values(l, n))
        if (std::isnan(v))
          fail(ErrorKind::InvalidActivation, fmt::format("NaN for neuron {} in frame {}", base + n, frame.frame_id));
    }
    base += frame.shapes[l].neuron_count;
  }
  base = 0;
  for (std::size_t l = 0; l < frame.shapes.size(); ++l) {
    for (std::size_t n = 0; n < frame.shapes[l].neuron_count; ++n) {
      const std::size_t neuron = base + n;
      std::uint64_t* row = counts_.data() + neuron * bins_;
      for (float v : frame.neuron_values(l, n)) ++row[spec.bin_of(neuron, v)];
    }
    base += frame.shapes[l].neuron_count;
  }
  ++image_count_;
}

void Vdna::merge_from(const Vdna& other) {
  require_same_spec(spec_id_, other.spec_id_);
  if (neurons_ != other.neurons_ || bins_ != other.bins_) fail(ErrorKind::ShapeError, "VDNA shapes differ");
  for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
  image_count_ += other.image_count_;
}

void Vdna::write(std::ostream& out) const {
  io::BinaryWriter w(out);
  w.magic(kMagic);
  w.u32(kVdnaFormatVersion);
  w.bytes(spec_id_);
  w.u32(neurons_);
  w.u32(bins_);
  w.u64(image_count_);
  io::write_u64_array(w, counts_, out);
}

Vdna Vdna::read(std::istream& in, const std::string& source) {
  io::BinaryReader r(in, source);
  r.expect_magic(kMagic);
  const auto version = r.u32("version");
  if (version != kVdnaFormatVersion) fail(ErrorKind::FormatError, source + ": unsupported VDNA version " + std::to_string(version));
  SpecId id{};
  for (auto& b : id) b = r.u8("spec id");
  const auto n = r.u32("N");
  const auto b = r.u32("b");
  const auto images = r.u64("L");
  std::vector<std::uint64_t> counts(static_cast<std::size_t>(n) * b);
  r.u64_array(counts, "counts");
  if (!r.at_end()) fail(ErrorKind::FormatError, source + ": trailing bytes at offset " + std::to_string(r.offset()));
  return Vdna(id, n, b, images, std::move(counts));
}

void Vdna::save(const std::filesystem::path& path) const {
  auto out = io::open_output(path);
  write(out);
}

Vdna Vdna::load(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  return read(in, path.string());
}

Vdna accumulate(Vdna vdna, const activation::ActivationFrame& frame, const HistogramSpec& spec) {
  vdna.add_image(spec, frame);
  return vdna;
}

Vdna merge(const Vdna& a, const Vdna& b) {
  Vdna out = a;
  out.merge_from(b);
  return out;
}

Vdna accumulate_all(const HistogramSpec& spec, std::span<const activation::ActivationFrame> frames,
                    std::size_t threads) {
  threads = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(frames.size(), 1));
  std::vector<Vdna> shards(threads, Vdna(spec));
  const std::size_t chunk = (frames.size() + threads - 1) / threads;
  parallel_for(threads, threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t t = begin; t < end; ++t) {
      const std::size_t lo = std::min(frames.size(), t * chunk);
      const std::size_t hi = std::min(frames.size(), lo + chunk);
      for (std::size_t i = lo; i < hi; ++i) shards[t].add_image(spec, frames[i]);
    }
  });
  Vdna out(spec);
  for (const auto& s : shards) out.merge_from(s);
  return out;
}

NormalizedVdna::NormalizedVdna(SpecId spec_id, std::uint32_t neurons, std::uint32_t bins, std::vector<double> mass,
                               std::vector<std::uint8_t> empty_rows)
    : spec_id_(spec_id), neurons_(neurons), bins_(bins), mass_(std::move(mass)), empty_(std::move(empty_rows)) {
  if (mass_.size() != static_cast<std::size_t>(neurons_) * bins_ || empty_.size() != neurons_)
    fail(ErrorKind::ShapeError, "normalized VDNA shape mismatch");
}

std::span<const double> NormalizedVdna::row(std::size_t neuron) const {
  if (neuron >= neurons_) fail(ErrorKind::ShapeError, "neuron index out of range");
  return std::span<const double>(mass_).subspan(neuron * bins_, bins_);
}

NormalizedVdna normalize(const Vdna& vdna) {
  const std::uint32_t n = vdna.neurons();
  const std::uint32_t b = vdna.bins();
  std::vector<double> mass(static_cast<std::size_t>(n) * b);
  std::vector<std::uint8_t> empty(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = vdna.row(i);
    const std::uint64_t total = std::accumulate(row.begin(), row.end(), std::uint64_t{0});
    double* dst = mass.data() + i * b;
    if (total == 0) {
      empty[i] = 1;
      std::fill(dst, dst + b, 1.0 / b);
      continue;
    }
    const double denom = static_cast<double>(total);
    for (std::size_t k = 0; k < b; ++k) dst[k] = static_cast<double>(row[k]) / denom;
  }
  return NormalizedVdna(vdna.spec_id(), n, b, std::move(mass), std::move(empty));
}

double emd_neuron(std::span<const double> p, std::span<const double> q, double bin_width) {
  if (p.size() != q.size()) fail(ErrorKind::ShapeError, fmt::format("histogram lengths {} and {}", p.size(), q.size()));
  double cp = 0.0, cq = 0.0, total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    cp += p[k];
    cq += q[k];
    total += std::abs(cp - cq);
  }
  return bin_width * total;
}

namespace {

double weighted_emd(const NormalizedVdna& a, const NormalizedVdna& b, std::optional<std::span<const double>> weights,
                    auto&& width_of) {
  require_same_spec(a.spec_id(), b.spec_id());
  if (a.neurons() != b.neurons() || a.bins() != b.bins()) fail(ErrorKind::ShapeError, "VDNA shapes differ");
  const std::size_t n = a.neurons();
  if (weights && weights->size() != n)
    fail(ErrorKind::ShapeError, fmt::format("{} weights for {} neurons", weights->size(), n));
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = weights ? (*weights)[i] : 1.0;
    if (!(w >= 0.0) || !std::isfinite(w)) fail(ErrorKind::ConfigError, "neuron weights must be finite and >= 0");
    if (w == 0.0) continue;
    num += w * emd_neuron(a.row(i), b.row(i), width_of(i));
    den += w;
  }
  if (den == 0.0) fail(ErrorKind::ConfigError, "neuron weights sum to zero");
  return num / den;
}

}  // namespace

double emd_vdna(const HistogramSpec& spec, const NormalizedVdna& a, const NormalizedVdna& b,
                std::optional<std::span<const double>> neuron_weights) {
  require_same_spec(spec.id(), a.spec_id());
  return weighted_emd(a, b, neuron_weights, [&](std::size_t i) { return spec.bin_width(i); });
}

double emd_vdna(const NormalizedVdna& a, const NormalizedVdna& b, std::optional<std::span<const double>> neuron_weights) {
  return weighted_emd(a, b, neuron_weights, [](std::size_t) { return 1.0; });
}

}  // namespace vdnapr::vdna
