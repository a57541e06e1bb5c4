#include "vdnapr/nn/checkpoint.hpp"

#include "vdnapr/binary_io.hpp"
#include "vdnapr/error.hpp"

namespace vdnapr::nn {

namespace {

constexpr char kMagic[] = "VPRW";

void write_tensor(io::BinaryWriter& w, const std::string& name, const Tensor& t) {
  w.short_string(name);
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u64(d);
  for (double v : t.data()) w.f64(v);
}

NamedTensor read_tensor(io::BinaryReader& r) {
  NamedTensor nt;
  nt.name = r.short_string("tensor name");
  const auto rank = r.u32("tensor rank");
  if (rank > 8) fail(ErrorKind::FormatError, r.source() + ": implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = r.u64("tensor dim");
  std::vector<double> data(shape_size(shape));
  for (auto& v : data) v = r.f64("tensor data");
  nt.tensor = Tensor(std::move(shape), std::move(data));
  return nt;
}

}  // namespace

const std::string* Checkpoint::find_metadata(const std::string& key) const {
  for (const auto& [k, v] : metadata)
    if (k == key) return &v;
  return nullptr;
}

const Tensor* Checkpoint::find_tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return &t.tensor;
  return nullptr;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  auto out = io::open_output(path);
  io::BinaryWriter w(out);
  w.magic(kMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(checkpoint.metadata.size()));
  for (const auto& [k, v] : checkpoint.metadata) {
    w.short_string(k);
    w.u32(static_cast<std::uint32_t>(v.size()));
    w.magic(v);
  }
  w.u32(static_cast<std::uint32_t>(checkpoint.tensors.size()));
  for (const auto& t : checkpoint.tensors) write_tensor(w, t.name, t.tensor);
  w.u8(checkpoint.optimizer ? 1 : 0);
  if (checkpoint.optimizer) {
    const auto& s = *checkpoint.optimizer;
    w.u64(s.step);
    w.f64(s.config.lr);
    w.f64(s.config.beta1);
    w.f64(s.config.beta2);
    w.f64(s.config.eps);
    w.f64(s.config.weight_decay);
    if (s.m.size() != s.v.size()) fail(ErrorKind::ShapeError, "optimizer moment lists differ in length");
    w.u32(static_cast<std::uint32_t>(s.m.size()));
    for (std::size_t i = 0; i < s.m.size(); ++i) {
      write_tensor(w, "adamw.m." + std::to_string(i), s.m[i]);
      write_tensor(w, "adamw.v." + std::to_string(i), s.v[i]);
    }
  }
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  auto in = io::open_input(path);
  io::BinaryReader r(in, path.string());
  r.expect_magic(kMagic);
  const auto version = r.u32("version");
  if (version != kCheckpointVersion)
    fail(ErrorKind::FormatError, path.string() + ": unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  const auto meta = r.u32("metadata count");
  for (std::uint32_t i = 0; i < meta; ++i) {
    std::string k = r.short_string("metadata key");
    const auto n = r.u32("metadata length");
    std::string v;
    v.reserve(n);
    for (std::uint32_t j = 0; j < n; ++j) v.push_back(static_cast<char>(r.u8("metadata value")));
    c.metadata.emplace_back(std::move(k), std::move(v));
  }
  const auto count = r.u32("tensor count");
  for (std::uint32_t i = 0; i < count; ++i) c.tensors.push_back(read_tensor(r));
  if (r.u8("optimizer flag")) {
    AdamWState s;
    s.step = r.u64("optimizer step");
    s.config.lr = r.f64("lr");
    s.config.beta1 = r.f64("beta1");
    s.config.beta2 = r.f64("beta2");
    s.config.eps = r.f64("eps");
    s.config.weight_decay = r.f64("weight decay");
    const auto n = r.u32("moment count");
    for (std::uint32_t i = 0; i < n; ++i) {
      s.m.push_back(read_tensor(r).tensor);
      s.v.push_back(read_tensor(r).tensor);
    }
    c.optimizer = std::move(s);
  }
  if (!r.at_end()) fail(ErrorKind::FormatError, path.string() + ": trailing bytes at offset " + std::to_string(r.offset()));
  return c;
}

}  // namespace vdnapr::nn
