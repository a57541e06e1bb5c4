#include "vdnapr/sequence_vdna.hpp"

#include <map>
#include <optional>

#include "vdnapr/error.hpp"

namespace vdnapr::vdna {

std::vector<Vdna> accumulate_sequences(const HistogramSpec& spec, activation::ActivationSource& source,
                                       const std::vector<world::SequenceRecord>& records) {
  struct FrameUse {
    std::vector<std::size_t> records;
    std::size_t pending = 0;  // records still waiting for their merge
    std::optional<Vdna> vdna;
    bool seen = false;
  };
  std::map<std::string, FrameUse> uses;
  std::vector<std::size_t> missing(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (records[r].frame_ids.empty()) fail(ErrorKind::ConfigError, "sequence " + records[r].seq_id + " has no frames");
    for (const auto& id : records[r].frame_ids) {
      auto& u = uses[id];
      u.records.push_back(r);
      ++u.pending;
      ++missing[r];
    }
  }

  std::vector<std::optional<Vdna>> out(records.size());
  auto complete = [&](std::size_t r) {
    Vdna v(spec);
    for (const auto& id : records[r].frame_ids) {
      auto& u = uses.at(id);
      v.merge_from(*u.vdna);
      if (--u.pending == 0) u.vdna.reset();
    }
    out[r] = std::move(v);
  };

  while (auto frame = source.next()) {
    auto it = uses.find(frame->frame_id);
    if (it == uses.end() || it->second.seen) continue;
    it->second.seen = true;
    it->second.vdna = accumulate(Vdna(spec), *frame, spec);
    for (auto r : it->second.records)
      if (--missing[r] == 0) complete(r);
  }
  std::vector<Vdna> result;
  result.reserve(records.size());
  for (std::size_t r = 0; r < records.size(); ++r) {
    if (!out[r]) {
      for (const auto& id : records[r].frame_ids)
        if (!uses.at(id).seen)
          fail(ErrorKind::FormatError, "frame " + id + " of sequence " + records[r].seq_id + " not found in activations");
      fail(ErrorKind::FormatError, "sequence " + records[r].seq_id + " is incomplete");
    }
    result.push_back(std::move(*out[r]));
  }
  return result;
}

}  // namespace vdnapr::vdna
