#include "vdnapr/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>

#include <fmt/format.h>

#include "vdnapr/activation.hpp"
#include "vdnapr/error.hpp"
#include "vdnapr/hash.hpp"
#include "vdnapr/histogram_spec.hpp"
#include "vdnapr/parallel.hpp"
#include "vdnapr/retrieval.hpp"
#include "vdnapr/sequence_vdna.hpp"
#include "vdnapr/training.hpp"
#include "vdnapr/vdna.hpp"
#include "vdnapr/world.hpp"

namespace vdnapr::cli {
namespace {

namespace fs = std::filesystem;

constexpr const char* kSequencesFile = "sequences.txt";

fs::path output_path(const std::string& value) {
  fs::path p(value);
  if (p.is_relative()) {
    if (const char* root = std::getenv("VDNAPR_OUT_ROOT"); root && *root) p = fs::path(root) / p;
  }
  return p;
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
}

void write_text(const fs::path& path, const std::string& text) {
  ensure_parent(path);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << text;
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

/// Content hash of a file, or of a directory's regular files in name order.
std::string content_hash(const fs::path& path) {
  if (!fs::is_directory(path)) return to_hex(sha256_file(path));
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  Sha256 h;
  for (const auto& f : files) {
    h.update(f.filename().string());
    h.update(std::span<const std::uint8_t>(sha256_file(f)));
  }
  return to_hex(h.finish());
}

/// Run record written next to every output. Holds no paths or timestamps so
/// identical runs produce identical records.
class Metadata {
 public:
  explicit Metadata(std::string command) : command_(std::move(command)) {}
  void seed(std::uint64_t s) { seed_ = s; }
  void config(const std::string& key, const std::string& value) { config_.emplace_back(key, value); }
  void input(const std::string& role, const fs::path& path) { inputs_.emplace_back(role, path); }

  void save(const fs::path& path) const {
    std::string s = "# vdnapr run metadata v1\n";
    s += fmt::format("command {}\nversion {}\n", command_, kVersion);
    s += fmt::format("seed {}\n", seed_ ? std::to_string(*seed_) : std::string("none"));
    for (const auto& [k, v] : config_) {
      // multi-line values are indented under their key
      std::string value = v;
      for (std::size_t pos = 0; (pos = value.find('\n', pos)) != std::string::npos;) {
        if (pos + 1 == value.size()) {
          value.erase(pos);
          break;
        }
        value.insert(pos + 1, "  ");
        pos += 3;
      }
      s += fmt::format("config {} {}\n", k, value);
    }
    for (const auto& [role, p] : inputs_)
      s += fmt::format("input {} {} sha256:{}\n", role, p.filename().string(), content_hash(p));
    write_text(path, s);
  }

 private:
  std::string command_;
  std::optional<std::uint64_t> seed_;
  std::vector<std::pair<std::string, std::string>> config_;
  std::vector<std::pair<std::string, fs::path>> inputs_;
};

fs::path meta_path_for(const fs::path& file) { return fs::path(file.string() + ".meta.txt"); }

struct FrameRange {
  std::uint32_t begin = 0;
  std::uint32_t end = std::numeric_limits<std::uint32_t>::max();
  bool set = false;

  static FrameRange parse(const std::string& text) {
    FrameRange r;
    if (text.empty()) return r;
    const auto colon = text.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(text);
      r.begin = static_cast<std::uint32_t>(std::stoul(text.substr(0, colon)));
      r.end = static_cast<std::uint32_t>(std::stoul(text.substr(colon + 1)));
    } catch (const std::logic_error&) {
      fail(ErrorKind::ConfigError, "frame range must look like BEGIN:END, got '" + text + "'");
    }
    if (r.begin >= r.end) fail(ErrorKind::ConfigError, "empty frame range '" + text + "'");
    r.set = true;
    return r;
  }
  std::string to_string() const { return set ? fmt::format("{}:{}", begin, end) : std::string("all"); }
};

/// Frame ids whose position within their traversal lies in `range`.
std::set<std::string> frames_in_range(const world::WorldManifest& manifest, const FrameRange& range) {
  std::map<std::string, std::uint32_t> position;
  std::set<std::string> ids;
  for (const auto& f : manifest.frames) {
    const auto pos = position[f.traversal_id]++;
    if (pos >= range.begin && pos < range.end) ids.insert(f.frame_id);
  }
  return ids;
}

class FilteredSource final : public activation::ActivationSource {
 public:
  FilteredSource(activation::ActivationSource& inner, std::set<std::string> keep)
      : inner_(inner), keep_(std::move(keep)) {}
  std::optional<activation::ActivationFrame> next() override {
    while (auto f = inner_.next())
      if (keep_.count(f->frame_id)) return f;
    return std::nullopt;
  }

 private:
  activation::ActivationSource& inner_;
  std::set<std::string> keep_;
};

std::vector<std::size_t> parse_ns(const std::string& text) {
  std::vector<std::size_t> ns;
  std::istringstream in(text);
  std::string tok;
  try {
    while (std::getline(in, tok, ',')) ns.push_back(std::stoul(tok));
  } catch (const std::logic_error&) {
    fail(ErrorKind::ConfigError, "bad N list '" + text + "'");
  }
  if (ns.empty()) fail(ErrorKind::ConfigError, "empty N list");
  return ns;
}

std::vector<std::pair<std::int32_t, std::int32_t>> parse_ranges(const std::vector<std::string>& items) {
  std::vector<std::pair<std::int32_t, std::int32_t>> out;
  for (const auto& s : items) {
    const auto colon = s.find(':');
    try {
      if (colon == std::string::npos) throw std::invalid_argument(s);
      out.emplace_back(std::stoi(s.substr(0, colon)), std::stoi(s.substr(colon + 1)));
    } catch (const std::logic_error&) {
      fail(ErrorKind::ConfigError, "layer range must look like FIRST:LAST, got '" + s + "'");
    }
  }
  return out;
}

std::string format_double(double v) {
  std::string s = fmt::format("{}", v);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

// Loads every sequence VDNA of an accumulate output directory.
struct VdnaSet {
  std::vector<world::SequenceRecord> records;
  std::vector<vdna::Vdna> vdnas;
};

VdnaSet load_vdna_dir(const fs::path& dir) {
  VdnaSet set;
  set.records = world::load_sequences(dir / kSequencesFile);
  for (const auto& r : set.records) set.vdnas.push_back(vdna::Vdna::load(dir / (r.seq_id + ".vdna")));
  return set;
}

std::vector<training::TrainingSample> samples_in_range(const VdnaSet& set, const FrameRange& range) {
  std::vector<training::TrainingSample> out;
  for (std::size_t i = 0; i < set.records.size(); ++i) {
    const auto& r = set.records[i];
    const auto last = r.first_index + static_cast<std::uint32_t>(r.frame_ids.size());
    if (r.first_index >= range.begin && last <= range.end)
      out.push_back(training::TrainingSample{r, vdna::normalize(set.vdnas[i])});
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::optional<std::uint64_t> seed;
  std::string out = "synth";
  world::SyntheticWorldConfig world;
};

void cmd_synth(const SynthArgs& a, std::ostream& out) {
  if (!a.seed) fail(ErrorKind::ConfigError, "--seed is required");
  auto config = a.world;
  config.seed = *a.seed;
  const auto w = world::generate_world(config);
  const fs::path dir = output_path(a.out);
  fs::create_directories(dir);
  w.manifest().save(dir / "manifest.txt");
  activation::ActivationWriter writer(dir / "activations.vact", w.shapes());
  for (std::size_t i = 0; i < w.frame_count(); ++i) writer.write(w.frame(i));
  writer.close();
  Metadata meta("synth");
  meta.seed(config.seed);
  meta.config("places", std::to_string(config.places));
  meta.config("traversals", std::to_string(config.traversals));
  meta.config("layers", std::to_string(config.layers));
  meta.config("neurons_per_layer", std::to_string(config.neurons_per_layer));
  meta.config("samples_per_neuron", std::to_string(config.samples_per_neuron));
  meta.save(dir / "metadata.txt");
  out << fmt::format("wrote {} frames ({} traversals x {} places) to {}\n", w.frame_count(), config.traversals,
                     config.places, dir.string());
}

struct CalibrateArgs {
  std::string activations, manifest, frame_range, out = "spec.txt";
  std::uint32_t bins = vdna::kDefaultBins;
  double expansion = vdna::kDefaultExpansion;
  std::uint32_t max_samples = activation::kDefaultMaxSamples;
};

void cmd_calibrate(const CalibrateArgs& a, std::ostream& out) {
  const auto range = FrameRange::parse(a.frame_range);
  if (range.set && a.manifest.empty()) fail(ErrorKind::ConfigError, "--frame-range needs --manifest");
  activation::ActivationReader reader(a.activations, a.max_samples);
  const auto topology = vdna::topology_from_shapes(reader.output_shapes());
  std::optional<vdna::HistogramSpec> spec;
  if (range.set) {
    FilteredSource filtered(reader, frames_in_range(world::WorldManifest::load(a.manifest), range));
    spec.emplace(vdna::calibrate_spec(filtered, topology, a.bins, a.expansion));
  } else {
    spec.emplace(vdna::calibrate_spec(reader, topology, a.bins, a.expansion));
  }
  const fs::path path = output_path(a.out);
  ensure_parent(path);
  spec->save(path);
  Metadata meta("calibrate");
  meta.config("bins", std::to_string(a.bins));
  meta.config("expansion", format_double(a.expansion));
  meta.config("max_samples", std::to_string(a.max_samples));
  meta.config("frame_range", range.to_string());
  meta.input("activations", a.activations);
  if (!a.manifest.empty()) meta.input("manifest", a.manifest);
  meta.save(meta_path_for(path));
  out << fmt::format("spec {} ({} neurons, b = {}) written to {}\n", vdna::spec_id_hex(spec->id()),
                     spec->neuron_count(), spec->bins(), path.string());
}

struct AccumulateArgs {
  std::string spec, manifest, activations, out = "vdnas";
  std::size_t seq_len = 5, stride = 1;
  std::uint32_t max_samples = activation::kDefaultMaxSamples;
};

void cmd_accumulate(const AccumulateArgs& a, std::ostream& out) {
  const auto spec = vdna::HistogramSpec::load(a.spec);
  const auto manifest = world::WorldManifest::load(a.manifest);
  const auto windows = world::window_sequences(manifest, a.seq_len, a.stride);
  activation::ActivationReader reader(a.activations, a.max_samples);
  const auto vdnas = vdna::accumulate_sequences(spec, reader, windows.sequences);
  const fs::path dir = output_path(a.out);
  fs::create_directories(dir);
  world::save_sequences(dir / kSequencesFile, windows.sequences);
  for (std::size_t i = 0; i < vdnas.size(); ++i) vdnas[i].save(dir / (windows.sequences[i].seq_id + ".vdna"));
  Metadata meta("accumulate");
  meta.config("seq_len", std::to_string(a.seq_len));
  meta.config("stride", std::to_string(a.stride));
  meta.config("max_samples", std::to_string(a.max_samples));
  meta.input("spec", a.spec);
  meta.input("manifest", a.manifest);
  meta.input("activations", a.activations);
  meta.save(dir.parent_path() / (dir.filename().string() + ".meta.txt"));
  out << fmt::format("{} sequence VDNAs written to {}", vdnas.size(), dir.string());
  if (windows.short_traversals) out << fmt::format(" ({} traversals shorter than {} frames skipped)", windows.short_traversals, a.seq_len);
  out << "\n";
}

struct TrainArgs {
  std::string spec, vdnas, manifest, activations, out = "train", preset = "standard", train_range, val_range,
      threshold = "25m", reference;
  std::optional<std::uint64_t> seed;
  std::size_t epochs = 1, batch = 8, refreshes_per_epoch = 1, threads = 1, seq_len = 5, stride = 1;
  std::uint32_t max_samples = activation::kDefaultMaxSamples;
  std::uint32_t h = 4, d = 0;
  double margin = nn::kDefaultMargin, lr = 1e-4, weight_decay = 1e-2, negative_factor = 2.0;
  training::MiningCacheConfig cache;
};

void cmd_train(const TrainArgs& a, std::ostream& out) {
  if (!a.seed) fail(ErrorKind::ConfigError, "--seed is required");
  const auto spec = vdna::HistogramSpec::load(a.spec);
  training::TrainingConfig config;
  if (a.preset == "standard") config.encoder = encoder::EncoderConfig::standard(spec.bins(), a.h, a.d ? a.d : 128);
  else if (a.preset == "compact") config.encoder = encoder::EncoderConfig::compact(spec.bins(), a.h, a.d ? a.d : 32);
  else fail(ErrorKind::ConfigError, "--config must be standard or compact");
  config.cache = a.cache;
  config.optimizer.lr = a.lr;
  config.optimizer.weight_decay = a.weight_decay;
  config.margin = a.margin;
  config.epochs = a.epochs;
  config.refreshes_per_epoch = a.refreshes_per_epoch;
  config.batch_size = a.batch;
  config.threshold = world::Threshold::parse(a.threshold);
  config.negative_factor = a.negative_factor;
  config.reference_traversal = a.reference;
  config.seed = *a.seed;
  config.threads = a.threads;

  VdnaSet set;
  if (!a.vdnas.empty()) {
    set = load_vdna_dir(a.vdnas);
  } else {
    // Raw activations: window and accumulate in memory.
    const auto windows = world::window_sequences(world::WorldManifest::load(a.manifest), a.seq_len, a.stride);
    activation::ActivationReader reader(a.activations, a.max_samples);
    set.vdnas = vdna::accumulate_sequences(spec, reader, windows.sequences);
    set.records = windows.sequences;
  }
  const auto train_range = FrameRange::parse(a.train_range);
  const auto val_range = FrameRange::parse(a.val_range);
  const auto train = samples_in_range(set, train_range);
  const auto val = val_range.set ? samples_in_range(set, val_range) : std::vector<training::TrainingSample>{};
  const auto result = training::mine_and_train(spec, train, val, config);

  const fs::path dir = output_path(a.out);
  fs::create_directories(dir);
  result.best.save(dir / "checkpoint.vprw");
  auto last = result.last.to_checkpoint();
  last.optimizer = result.optimizer;
  nn::save_checkpoint(dir / "last.vprw", last);
  write_text(dir / "training_log.txt", training::log_text(result));
  Metadata meta("train");
  meta.seed(config.seed);
  meta.config("training", config.to_string());
  meta.config("train_range", train_range.to_string());
  meta.config("val_range", val_range.to_string());
  meta.config("train_sequences", std::to_string(train.size()));
  meta.config("val_sequences", std::to_string(val.size()));
  meta.input("spec", a.spec);
  if (!a.vdnas.empty()) {
    meta.input("vdnas", a.vdnas);
  } else {
    meta.config("seq_len", std::to_string(a.seq_len));
    meta.config("stride", std::to_string(a.stride));
    meta.input("manifest", a.manifest);
    meta.input("activations", a.activations);
  }
  meta.save(dir / "metadata.txt");
  out << fmt::format("trained {} epochs on {} sequences; best epoch {}; checkpoint {}\n", config.epochs, train.size(),
                     result.best_epoch, (dir / "checkpoint.vprw").string());
}

struct EncodeArgs {
  std::string spec, checkpoint, vdnas, selection = "all", out = "db.vpdb";
  std::size_t threads = 1;
};

void cmd_encode(const EncodeArgs& a, std::ostream& out) {
  const auto spec = vdna::HistogramSpec::load(a.spec);
  const auto params = encoder::EncoderParams::load(a.checkpoint);
  const auto set = load_vdna_dir(a.vdnas);
  std::vector<vdna::NormalizedVdna> normalized;
  for (const auto& v : set.vdnas) normalized.push_back(vdna::normalize(v));
  const bool use_w = a.selection == "w" || a.selection == "W";
  const auto selection = use_w ? encoder::NeuronSelection::all() : encoder::NeuronSelection::parse(a.selection);
  const auto db = retrieval::build_db(spec, params, set.records, normalized, selection, use_w, a.threads);
  const fs::path path = output_path(a.out);
  ensure_parent(path);
  db.save(path);
  Metadata meta("encode");
  meta.config("selection", db.selection);
  meta.input("spec", a.spec);
  meta.input("checkpoint", a.checkpoint);
  meta.input("vdnas", a.vdnas);
  meta.save(meta_path_for(path));
  out << fmt::format("{} descriptors of length {} ({}) written to {}\n", db.size(), db.dim, db.selection,
                     path.string());
}

struct IndexArgs {
  std::string db, traversal, frame_range, out = "index.vpdb";
};

void cmd_index(const IndexArgs& a, std::ostream& out) {
  const auto full = retrieval::DescriptorDb::load(a.db);
  const auto range = FrameRange::parse(a.frame_range);
  retrieval::DescriptorDb db;
  db.dim = full.dim;
  db.kind = full.kind;
  db.selection = full.selection;
  for (std::size_t i = 0; i < full.size(); ++i) {
    const auto& r = full.records[i];
    if (!a.traversal.empty() && r.traversal_id != a.traversal) continue;
    const auto last = r.first_index + static_cast<std::uint32_t>(r.frame_ids.size());
    if (range.set && (r.first_index < range.begin || last > range.end)) continue;
    const auto row = full.row(i);
    db.matrix.insert(db.matrix.end(), row.begin(), row.end());
    db.records.push_back(r);
  }
  const fs::path path = output_path(a.out);
  ensure_parent(path);
  db.save(path);
  Metadata meta("index");
  meta.config("traversal", a.traversal.empty() ? "all" : a.traversal);
  meta.config("frame_range", range.to_string());
  meta.input("db", a.db);
  meta.save(meta_path_for(path));
  out << fmt::format("{} of {} descriptors written to {}\n", db.size(), full.size(), path.string());
}

struct EvalArgs {
  std::string db, queries, ns = "1,5,10", threshold = "25m", out, spec, plot;
  bool sweep = false;
  std::vector<std::string> ranges;
};

void cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto db = retrieval::DescriptorDb::load(a.db);
  const auto queries = retrieval::DescriptorDb::load(a.queries);
  const auto ns = parse_ns(a.ns);
  const auto threshold = world::Threshold::parse(a.threshold);
  std::string text;
  Metadata meta("eval");
  if (a.sweep) {
    if (a.spec.empty()) fail(ErrorKind::ConfigError, "--sweep needs --spec");
    const auto spec = vdna::HistogramSpec::load(a.spec);
    if (spec.neuron_count() == 0 || db.dim % spec.neuron_count() != 0)
      fail(ErrorKind::ShapeError, "database dim is not a multiple of the spec's neuron count");
    const std::size_t h = db.dim / spec.neuron_count();
    const auto entries = retrieval::layer_sweep(spec, h, db, queries, parse_ranges(a.ranges), ns, threshold);
    text = retrieval::sweep_table(entries);
    if (!a.plot.empty()) write_text(output_path(a.plot), retrieval::sweep_svg(entries, "Recall per layer selection"));
    meta.input("spec", a.spec);
  } else {
    text = retrieval::recall_at_n(db, queries, ns, threshold).to_text();
  }
  out << text;
  if (!a.out.empty()) {
    const fs::path path = output_path(a.out);
    write_text(path, text);
    meta.config("n", a.ns);
    meta.config("threshold", threshold.to_string());
    meta.config("sweep", a.sweep ? "yes" : "no");
    meta.input("db", a.db);
    meta.input("queries", a.queries);
    meta.save(meta_path_for(path));
  }
}

struct EmdArgs {
  std::string a, b, spec;
};

void cmd_emd(const EmdArgs& a, std::ostream& out) {
  const auto va = vdna::normalize(vdna::Vdna::load(a.a));
  const auto vb = vdna::normalize(vdna::Vdna::load(a.b));
  if (va.spec_id() != vb.spec_id())
    fail(ErrorKind::SpecMismatch, "VDNAs carry different spec ids (" + vdna::spec_id_hex(va.spec_id()) + " vs " +
                                      vdna::spec_id_hex(vb.spec_id()) + ")");
  double d = 0.0;
  if (a.spec.empty()) {
    d = vdna::emd_vdna(va, vb);
  } else {
    const auto spec = vdna::HistogramSpec::load(a.spec);
    if (spec.id() != va.spec_id()) fail(ErrorKind::SpecMismatch, "spec file does not match the VDNAs");
    d = vdna::emd_vdna(spec, va, vb);
  }
  out << format_double(d) << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Visual DNA place recognition toolkit", "vdnapr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  SynthArgs synth;
  auto* s = app.add_subcommand("synth", "Generate a synthetic multi-traversal world");
  s->add_option("--seed", synth.seed, "World seed (required)");
  s->add_option("--out,--out-dir", synth.out, "Output directory");
  s->add_option("--places", synth.world.places);
  s->add_option("--traversals", synth.world.traversals);
  s->add_option("--layers", synth.world.layers);
  s->add_option("--neurons", synth.world.neurons_per_layer, "Neurons per layer");
  s->add_option("--samples", synth.world.samples_per_neuron, "Values per neuron per frame");

  CalibrateArgs cal;
  auto* c = app.add_subcommand("calibrate", "Fit per-neuron histogram ranges");
  c->add_option("--activations", cal.activations)->required()->check(CLI::ExistingFile);
  c->add_option("--manifest", cal.manifest)->check(CLI::ExistingFile);
  c->add_option("--frame-range", cal.frame_range, "Only frames at BEGIN:END within each traversal");
  c->add_option("--bins", cal.bins);
  c->add_option("--expansion", cal.expansion);
  c->add_option("--max-samples", cal.max_samples);
  c->add_option("--out", cal.out);

  AccumulateArgs acc;
  auto* ac = app.add_subcommand("accumulate", "Build one VDNA per frame window");
  ac->add_option("--spec", acc.spec)->required()->check(CLI::ExistingFile);
  ac->add_option("--manifest", acc.manifest)->required()->check(CLI::ExistingFile);
  ac->add_option("--activations", acc.activations)->required()->check(CLI::ExistingFile);
  ac->add_option("--seq-len", acc.seq_len);
  ac->add_option("--stride", acc.stride);
  ac->add_option("--max-samples", acc.max_samples);
  ac->add_option("--out", acc.out, "Output directory");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the histogram encoder with mined triplets");
  t->add_option("--spec", tr.spec)->required()->check(CLI::ExistingFile);
  auto* tv = t->add_option("--vdnas", tr.vdnas, "accumulate output directory")->check(CLI::ExistingDirectory);
  auto* tm = t->add_option("--manifest", tr.manifest, "Train from raw activations instead of --vdnas")
                 ->check(CLI::ExistingFile)
                 ->excludes(tv);
  auto* ta = t->add_option("--activations", tr.activations)->check(CLI::ExistingFile)->excludes(tv)->needs(tm);
  tm->needs(ta);
  t->add_option("--seq-len", tr.seq_len)->excludes(tv);
  t->add_option("--stride", tr.stride)->excludes(tv);
  t->add_option("--max-samples", tr.max_samples)->excludes(tv);
  t->add_option("--seed", tr.seed, "Training seed (required)");
  t->add_option("--out", tr.out, "Output directory");
  t->add_option("--config", tr.preset, "Encoder preset: standard or compact");
  t->add_option("--neuron-dim", tr.h, "Per-neuron descriptor length h");
  t->add_option("--head-dim", tr.d, "Head output width (default 128 standard, 32 compact)");
  t->add_option("--epochs", tr.epochs);
  t->add_option("--refreshes-per-epoch", tr.refreshes_per_epoch);
  t->add_option("--batch", tr.batch, "Triplets per optimizer step");
  t->add_option("--margin", tr.margin);
  t->add_option("--lr", tr.lr);
  t->add_option("--weight-decay", tr.weight_decay);
  t->add_option("--cache-queries", tr.cache.query_count);
  t->add_option("--cache-negatives", tr.cache.negative_pool);
  t->add_option("--carryover", tr.cache.carryover);
  t->add_option("--refresh-period", tr.cache.refresh_period);
  t->add_option("--negatives", tr.cache.negatives);
  t->add_option("--threshold", tr.threshold);
  t->add_option("--negative-factor", tr.negative_factor);
  t->add_option("--train-range", tr.train_range, "Windows inside BEGIN:END of each traversal");
  t->add_option("--val-range", tr.val_range);
  t->add_option("--reference", tr.reference, "Validation database traversal");
  t->add_option("--threads", tr.threads);

  EncodeArgs enc;
  auto* e = app.add_subcommand("encode", "Turn sequence VDNAs into descriptors");
  e->add_option("--spec", enc.spec)->required()->check(CLI::ExistingFile);
  e->add_option("--checkpoint", enc.checkpoint)->required()->check(CLI::ExistingFile);
  e->add_option("--vdnas", enc.vdnas)->required()->check(CLI::ExistingDirectory);
  e->add_option("--selection", enc.selection, "all | layer:L | layers:A:B | neurons:i,j,.. | w");
  e->add_option("--out", enc.out);
  e->add_option("--threads", enc.threads);

  IndexArgs idx;
  auto* ix = app.add_subcommand("index", "Select database or query rows from a descriptor file");
  ix->add_option("--db", idx.db)->required()->check(CLI::ExistingFile);
  ix->add_option("--traversal", idx.traversal);
  ix->add_option("--frame-range", idx.frame_range);
  ix->add_option("--out", idx.out);

  EvalArgs ev;
  auto* v = app.add_subcommand("eval", "Recall@N of queries against a database");
  v->add_option("--db", ev.db)->required()->check(CLI::ExistingFile);
  v->add_option("--queries", ev.queries)->required()->check(CLI::ExistingFile);
  v->add_option("--n", ev.ns);
  v->add_option("--threshold", ev.threshold);
  v->add_option("--out", ev.out);
  v->add_flag("--sweep", ev.sweep, "Evaluate every layer and --range of full descriptors");
  v->add_option("--spec", ev.spec)->check(CLI::ExistingFile);
  v->add_option("--range", ev.ranges, "Extra layer range FIRST:LAST for --sweep");
  v->add_option("--plot", ev.plot, "SVG chart of a sweep");

  EmdArgs em;
  auto* m = app.add_subcommand("emd", "Earth mover's distance between two VDNAs");
  m->add_option("a", em.a)->required()->check(CLI::ExistingFile);
  m->add_option("b", em.b)->required()->check(CLI::ExistingFile);
  m->add_option("--spec", em.spec, "Measure in activation units of this spec")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  if (*t && tr.vdnas.empty() && tr.manifest.empty()) {
    err << "train: one of --vdnas or --manifest/--activations is required\n";
    return 2;
  }

  try {
    if (*s) cmd_synth(synth, out);
    else if (*c) cmd_calibrate(cal, out);
    else if (*ac) cmd_accumulate(acc, out);
    else if (*t) cmd_train(tr, out);
    else if (*e) cmd_encode(enc, out);
    else if (*ix) cmd_index(idx, out);
    else if (*v) cmd_eval(ev, out);
    else if (*m) cmd_emd(em, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const fs::filesystem_error& e) {
    err << "error: IoError: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace vdnapr::cli
