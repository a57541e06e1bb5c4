#pragma once

#include <vector>

#include "vdnapr/activation.hpp"
#include "vdnapr/histogram_spec.hpp"
#include "vdnapr/vdna.hpp"
#include "vdnapr/world.hpp"

namespace vdnapr::vdna {

/// One VDNA per record, built from the frames of a single pass over `source`.
/// Per-frame VDNAs are kept only until every window using them is complete.
/// A frame referenced by a record but absent from the source is a FormatError.
std::vector<Vdna> accumulate_sequences(const HistogramSpec& spec, activation::ActivationSource& source,
                                       const std::vector<world::SequenceRecord>& records);

}  // namespace vdnapr::vdna
