#include "vdnapr/world.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "vdnapr/error.hpp"

namespace vdnapr::world {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool has_space(const std::string& s) { return s.find_first_of(" \t\r\n,") != std::string::npos; }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

std::string read_keyed(std::istream& in, const std::string& key, const std::string& source) {
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string k;
    ls >> k;
    if (k != key) fail(ErrorKind::FormatError, source + ": expected '" + key + "', found '" + line + "'");
    std::string rest;
    std::getline(ls, rest);
    return trim(rest);
  }
  fail(ErrorKind::FormatError, source + ": missing '" + key + "'");
}

}  // namespace

Threshold Threshold::parse(const std::string& text) {
  std::string t = trim(text);
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &pos);
  } catch (const std::exception&) {
    fail(ErrorKind::ConfigError, "bad threshold '" + text + "'");
  }
  const std::string unit = trim(t.substr(pos));
  Threshold th;
  th.value = v;
  if (unit.empty() || unit == "m" || unit == "meters" || unit == "meter") {
    th.unit = Unit::Meters;
  } else if (unit == "f" || unit == "frames" || unit == "frame") {
    th.unit = Unit::Frames;
  } else {
    fail(ErrorKind::ConfigError, "bad threshold unit in '" + text + "'");
  }
  if (!(v >= 0.0) || !std::isfinite(v)) fail(ErrorKind::ConfigError, "threshold must be finite and >= 0");
  return th;
}

std::string Threshold::to_string() const {
  return fmt::format("{}{}", value, unit == Unit::Meters ? "m" : "frames");
}

void WorldManifest::validate() const {
  std::set<std::string> ids;
  std::map<std::string, double> last_time;
  for (const auto& f : frames) {
    if (f.frame_id.empty() || has_space(f.frame_id)) fail(ErrorKind::FormatError, "invalid frame id '" + f.frame_id + "'");
    if (f.traversal_id.empty() || has_space(f.traversal_id))
      fail(ErrorKind::FormatError, "invalid traversal id '" + f.traversal_id + "'");
    if (!ids.insert(f.frame_id).second) fail(ErrorKind::FormatError, "duplicate frame id " + f.frame_id);
    auto it = last_time.find(f.traversal_id);
    if (it != last_time.end() && f.timestamp < it->second)
      fail(ErrorKind::FormatError, "frames of traversal " + f.traversal_id + " are not temporally ordered at " + f.frame_id);
    last_time[f.traversal_id] = f.timestamp;
  }
}

void WorldManifest::save(const std::filesystem::path& path) const {
  validate();
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << "# vdnapr world manifest v1\n";
  out << "domain_tag " << domain_tag << "\n";
  out << "threshold " << threshold.to_string() << "\n";
  out << "frames " << frames.size() << "\n";
  out << "# frame_id traversal_id x y timestamp\n";
  for (const auto& f : frames)
    out << fmt::format("{} {} {} {} {}\n", f.frame_id, f.traversal_id, f.x, f.y, f.timestamp);
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

WorldManifest WorldManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  const std::string src = path.string();
  std::string header;
  std::getline(in, header);
  if (trim(header) != "# vdnapr world manifest v1") fail(ErrorKind::FormatError, src + ": bad manifest header");
  WorldManifest m;
  m.domain_tag = read_keyed(in, "domain_tag", src);
  m.threshold = Threshold::parse(read_keyed(in, "threshold", src));
  const auto count = std::stoull(read_keyed(in, "frames", src));
  std::string line;
  while (m.frames.size() < count && std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    ManifestFrame f;
    if (!(ls >> f.frame_id >> f.traversal_id >> f.x >> f.y >> f.timestamp))
      fail(ErrorKind::FormatError, src + ": bad frame line '" + line + "'");
    m.frames.push_back(std::move(f));
  }
  if (m.frames.size() != count)
    fail(ErrorKind::FormatError, src + ": expected " + std::to_string(count) + " frames, found " +
                                     std::to_string(m.frames.size()));
  m.validate();
  return m;
}

double pose_distance(const SequenceRecord& a, const SequenceRecord& b) { return std::hypot(a.x - b.x, a.y - b.y); }

bool within_threshold(const SequenceRecord& a, const SequenceRecord& b, const Threshold& threshold) {
  if (threshold.unit == Threshold::Unit::Meters) return pose_distance(a, b) <= threshold.value;
  const double di = std::abs(static_cast<double>(a.middle_index) - static_cast<double>(b.middle_index));
  return di <= threshold.value;
}

Windowing window_sequences(const WorldManifest& manifest, std::size_t seq_len, std::size_t stride) {
  if (seq_len < 1 || stride < 1) fail(ErrorKind::ConfigError, "seq_len and stride must be >= 1");
  std::vector<std::string> order;
  std::map<std::string, std::vector<const ManifestFrame*>> by_traversal;
  for (const auto& f : manifest.frames) {
    auto [it, inserted] = by_traversal.try_emplace(f.traversal_id);
    if (inserted) order.push_back(f.traversal_id);
    it->second.push_back(&f);
  }
  Windowing out;
  for (const auto& tid : order) {
    const auto& frames = by_traversal[tid];
    if (frames.size() < seq_len) {
      ++out.short_traversals;
      continue;
    }
    for (std::size_t start = 0; start + seq_len <= frames.size(); start += stride) {
      SequenceRecord rec;
      rec.traversal_id = tid;
      rec.seq_id = fmt::format("{}_s{:05}_l{}", tid, start, seq_len);
      rec.first_index = static_cast<std::uint32_t>(start);
      const std::size_t mid = start + (seq_len - 1) / 2;
      rec.middle_index = static_cast<std::uint32_t>(mid);
      rec.x = frames[mid]->x;
      rec.y = frames[mid]->y;
      for (std::size_t k = start; k < start + seq_len; ++k) rec.frame_ids.push_back(frames[k]->frame_id);
      out.sequences.push_back(std::move(rec));
    }
  }
  return out;
}

std::vector<SequenceRecord> filter_by_frame_range(const std::vector<SequenceRecord>& records, std::uint32_t begin,
                                                  std::uint32_t end) {
  std::vector<SequenceRecord> out;
  for (const auto& r : records) {
    const std::uint64_t last = static_cast<std::uint64_t>(r.first_index) + r.frame_ids.size();
    if (r.first_index >= begin && last <= end) out.push_back(r);
  }
  return out;
}

std::vector<SequenceRecord> filter_by_traversal(const std::vector<SequenceRecord>& records,
                                                const std::string& traversal_id) {
  std::vector<SequenceRecord> out;
  for (const auto& r : records)
    if (r.traversal_id == traversal_id) out.push_back(r);
  return out;
}

void save_sequences(const std::filesystem::path& path, const std::vector<SequenceRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << "# vdnapr sequences v1\n";
  out << "count " << records.size() << "\n";
  out << "# seq_id traversal_id first_index middle_index x y frame_ids\n";
  for (const auto& r : records) {
    std::string ids;
    for (std::size_t i = 0; i < r.frame_ids.size(); ++i) {
      if (i) ids += ',';
      ids += r.frame_ids[i];
    }
    out << fmt::format("{} {} {} {} {} {} {}\n", r.seq_id, r.traversal_id, r.first_index, r.middle_index, r.x, r.y, ids);
  }
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

std::vector<SequenceRecord> load_sequences(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + path.string());
  const std::string src = path.string();
  std::string header;
  std::getline(in, header);
  if (trim(header) != "# vdnapr sequences v1") fail(ErrorKind::FormatError, src + ": bad sequences header");
  const auto count = std::stoull(read_keyed(in, "count", src));
  std::vector<SequenceRecord> out;
  std::string line;
  while (out.size() < count && std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    SequenceRecord r;
    std::string ids;
    if (!(ls >> r.seq_id >> r.traversal_id >> r.first_index >> r.middle_index >> r.x >> r.y >> ids))
      fail(ErrorKind::FormatError, src + ": bad sequence line '" + line + "'");
    std::istringstream is(ids);
    std::string id;
    while (std::getline(is, id, ',')) r.frame_ids.push_back(id);
    out.push_back(std::move(r));
  }
  if (out.size() != count) fail(ErrorKind::FormatError, src + ": truncated sequence table");
  return out;
}

// ---------------------------------------------------------------------------

void SyntheticWorldConfig::validate() const {
  if (places < 1 || traversals < 1 || layers < 1 || neurons_per_layer < 1 || samples_per_neuron < 1 ||
      latent_dim < 1)
    fail(ErrorKind::ConfigError, "synthetic world counts must all be >= 1");
  for (double s : {step_m, pose_jitter_m, appearance_scale, frame_appearance_scale, noise_scale, place_weight_scale, spread_scale, spread_gain, place_gain_first,
                   place_gain_last, appearance_gain_first, appearance_gain_last, threshold_m}) {
    if (!(s >= 0.0) || !std::isfinite(s)) fail(ErrorKind::ConfigError, "synthetic world scales must be finite and >= 0");
  }
  if (!(place_correlation >= 0.0 && place_correlation < 1.0))
    fail(ErrorKind::ConfigError, "place correlation must lie in [0, 1)");
}

SyntheticWorld::SyntheticWorld(SyntheticWorldConfig config) : config_(std::move(config)) {
  config_.validate();
  const auto& c = config_;
  std::mt19937_64 rng(c.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  const std::size_t neurons = static_cast<std::size_t>(c.layers) * c.neurons_per_layer;
  const double inv_sqrt_k = 1.0 / std::sqrt(static_cast<double>(c.latent_dim));

  const double innovation = std::sqrt(1.0 - c.place_correlation * c.place_correlation);
  place_latent_.resize(static_cast<std::size_t>(c.places) * c.latent_dim);
  for (std::size_t p = 0; p < c.places; ++p)
    for (std::size_t j = 0; j < c.latent_dim; ++j) {
      const double fresh = normal(rng);
      place_latent_[p * c.latent_dim + j] =
          p == 0 ? fresh : c.place_correlation * place_latent_[(p - 1) * c.latent_dim + j] + innovation * fresh;
    }
  neuron_weights_.resize(neurons * c.latent_dim);
  for (auto& v : neuron_weights_) v = c.place_weight_scale * inv_sqrt_k * normal(rng);
  neuron_bias_.resize(neurons);
  for (auto& v : neuron_bias_) v = 0.5 * normal(rng);
  neuron_spread_.resize(neurons * c.latent_dim);
  for (auto& v : neuron_spread_) v = inv_sqrt_k * normal(rng);
  neuron_appearance_.resize(neurons * c.latent_dim);
  for (auto& v : neuron_appearance_) v = inv_sqrt_k * normal(rng);
  traversal_offset_.resize(static_cast<std::size_t>(c.traversals) * c.latent_dim);
  for (auto& v : traversal_offset_) v = normal(rng);

  manifest_.domain_tag = "synthetic";
  manifest_.threshold = Threshold{Threshold::Unit::Meters, c.threshold_m};
  manifest_.frames.reserve(static_cast<std::size_t>(c.places) * c.traversals);
  for (std::uint32_t t = 0; t < c.traversals; ++t) {
    for (std::uint32_t p = 0; p < c.places; ++p) {
      ManifestFrame f;
      f.traversal_id = fmt::format("t{}", t);
      f.frame_id = fmt::format("t{}_f{:05}", t, p);
      f.x = p * c.step_m + c.pose_jitter_m * normal(rng);
      f.y = c.pose_jitter_m * normal(rng);
      f.timestamp = 100000.0 * t + static_cast<double>(p);
      manifest_.frames.push_back(std::move(f));
    }
  }
}

std::vector<activation::LayerShape> SyntheticWorld::shapes() const {
  return std::vector<activation::LayerShape>(config_.layers,
                                             activation::LayerShape{config_.neurons_per_layer, config_.samples_per_neuron});
}

double SyntheticWorld::place_gain(std::uint32_t layer) const {
  const double depth = config_.layers > 1 ? static_cast<double>(layer) / (config_.layers - 1) : 1.0;
  return config_.place_gain_first + depth * (config_.place_gain_last - config_.place_gain_first);
}

double SyntheticWorld::appearance_gain(std::uint32_t layer) const {
  const double depth = config_.layers > 1 ? static_cast<double>(layer) / (config_.layers - 1) : 1.0;
  return config_.appearance_gain_first + depth * (config_.appearance_gain_last - config_.appearance_gain_first);
}

activation::ActivationFrame SyntheticWorld::frame(std::size_t index) const {
  if (index >= frame_count()) fail(ErrorKind::ConfigError, "frame index out of range");
  const auto& c = config_;
  const std::size_t k = c.latent_dim;
  const std::size_t traversal = index / c.places;
  const std::size_t place = index % c.places;

  std::mt19937_64 rng(splitmix64(c.seed ^ splitmix64(0xF00DULL + index)));
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<double> appearance(k);
  for (std::size_t j = 0; j < k; ++j)
    appearance[j] = c.appearance_scale * traversal_offset_[traversal * k + j] + c.frame_appearance_scale * normal(rng);

  activation::ActivationFrame out;
  out.frame_id = manifest_.frames[index].frame_id;
  out.shapes = shapes();
  out.layers.resize(c.layers);
  std::size_t neuron = 0;
  for (std::uint32_t l = 0; l < c.layers; ++l) {
    const double pg = place_gain(l);
    const double ag = appearance_gain(l);
    auto& values = out.layers[l];
    values.resize(static_cast<std::size_t>(c.neurons_per_layer) * c.samples_per_neuron);
    for (std::uint32_t n = 0; n < c.neurons_per_layer; ++n, ++neuron) {
      const double* w = &neuron_weights_[neuron * k];
      const double* v = &neuron_spread_[neuron * k];
      const double* u = &neuron_appearance_[neuron * k];
      const double* z = &place_latent_[place * k];
      double loc = neuron_bias_[neuron], spread = 0.0, shift = 0.0;
      for (std::size_t j = 0; j < k; ++j) {
        loc += w[j] * z[j];
        spread += v[j] * z[j];
        shift += u[j] * appearance[j];
      }
      const double centre = std::tanh(loc);
      const double sigma = c.spread_scale * std::exp(c.spread_gain * spread);
      for (std::uint32_t s = 0; s < c.samples_per_neuron; ++s) {
        const double xi = normal(rng);
        const double noise = c.noise_scale > 0.0 ? c.noise_scale * normal(rng) : 0.0;
        values[static_cast<std::size_t>(n) * c.samples_per_neuron + s] =
            static_cast<float>(pg * (centre + sigma * xi) + ag * shift + noise);
      }
    }
  }
  return out;
}

SyntheticWorld generate_world(const SyntheticWorldConfig& config) { return SyntheticWorld(config); }

}  // namespace vdnapr::world
