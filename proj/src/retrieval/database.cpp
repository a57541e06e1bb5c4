#include <algorithm>

#include <fmt/format.h>

#include "vdnapr/binary_io.hpp"
#include "vdnapr/error.hpp"
#include "vdnapr/retrieval.hpp"

namespace vdnapr::retrieval {

void DescriptorDb::add(const world::SequenceRecord& record, std::span<const double> values) {
  if (records.empty() && matrix.empty() && dim == 0) dim = static_cast<std::uint32_t>(values.size());
  if (values.size() != dim)
    fail(ErrorKind::ShapeError, fmt::format("descriptor of length {} added to a database of dim {}", values.size(), dim));
  for (double v : values) matrix.push_back(static_cast<float>(v));
  records.push_back(record);
}

void DescriptorDb::save(const std::filesystem::path& path) const {
  auto out = io::open_output(path);
  io::BinaryWriter w(out);
  w.magic("VPDB");
  w.u32(kDbFormatVersion);
  w.u32(dim);
  w.u64(records.size());
  w.u8(static_cast<std::uint8_t>(kind));
  w.short_string(selection);
  io::write_f32_array(w, matrix, out);
  for (const auto& r : records) {
    w.short_string(r.seq_id);
    w.short_string(r.traversal_id);
    w.u32(r.first_index);
    w.u32(r.middle_index);
    w.f64(r.x);
    w.f64(r.y);
    w.u32(static_cast<std::uint32_t>(r.frame_ids.size()));
    for (const auto& f : r.frame_ids) w.short_string(f);
  }
  out.flush();
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

DescriptorDb DescriptorDb::load(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  io::BinaryReader r(in, path.string());
  r.expect_magic("VPDB");
  const auto version = r.u32("version");
  if (version != kDbFormatVersion)
    fail(ErrorKind::FormatError, fmt::format("{}: unsupported database version {}", path.string(), version));
  DescriptorDb db;
  db.dim = r.u32("dim");
  const auto rows = r.u64("row count");
  const auto kind = r.u8("kind");
  if (kind > 1) fail(ErrorKind::FormatError, fmt::format("{}: unknown descriptor kind {}", path.string(), kind));
  db.kind = static_cast<encoder::DescriptorKind>(kind);
  db.selection = r.short_string("selection");
  db.matrix.resize(rows * db.dim);
  r.f32_array(db.matrix, "descriptor matrix");
  db.records.resize(rows);
  for (auto& rec : db.records) {
    rec.seq_id = r.short_string("seq id");
    rec.traversal_id = r.short_string("traversal id");
    rec.first_index = r.u32("first index");
    rec.middle_index = r.u32("middle index");
    rec.x = r.f64("x");
    rec.y = r.f64("y");
    rec.frame_ids.resize(r.u32("frame count"));
    for (auto& f : rec.frame_ids) f = r.short_string("frame id");
  }
  if (!r.at_end()) fail(ErrorKind::FormatError, path.string() + ": trailing bytes after database");
  return db;
}

DescriptorDb slice_db(const DescriptorDb& full, std::span<const std::uint32_t> neurons, std::size_t h,
                      const std::string& selection) {
  if (full.kind != encoder::DescriptorKind::NeuronConcat)
    fail(ErrorKind::SelectionError, "only neuron-concat databases can be sliced");
  DescriptorDb out;
  out.kind = full.kind;
  out.selection = selection;
  out.dim = static_cast<std::uint32_t>(neurons.size() * h);
  out.records = full.records;
  out.matrix.reserve(full.size() * out.dim);
  for (std::size_t i = 0; i < full.size(); ++i) {
    const auto row = full.row(i);
    for (auto n : neurons) {
      if ((n + 1) * h > full.dim)
        fail(ErrorKind::SelectionError, fmt::format("neuron {} outside a database of dim {}", n, full.dim));
      out.matrix.insert(out.matrix.end(), row.begin() + n * h, row.begin() + (n + 1) * h);
    }
  }
  return out;
}

DescriptorDb build_db(const vdna::HistogramSpec& spec, const encoder::EncoderParams& params,
                      const std::vector<world::SequenceRecord>& records, const std::vector<vdna::NormalizedVdna>& vdnas,
                      const encoder::NeuronSelection& selection, bool use_w, std::size_t threads) {
  if (records.size() != vdnas.size()) fail(ErrorKind::ShapeError, "one VDNA per record required");
  DescriptorDb db;
  db.kind = use_w ? encoder::DescriptorKind::WOutput : encoder::DescriptorKind::NeuronConcat;
  db.selection = use_w ? "W" : selection.to_string();
  if (use_w) db.dim = params.config().d;
  else db.dim = static_cast<std::uint32_t>(selection.resolve(spec).size() * params.config().h);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto e = encoder::encode_vdna(spec, vdnas[i], params, use_w ? encoder::NeuronSelection::all() : selection,
                                        threads);
    if (use_w) db.add(records[i], encoder::project_w(e.values, params).values);
    else db.add(records[i], e.values);
  }
  return db;
}

}  // namespace vdnapr::retrieval
