#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vdnapr/nn/adamw.hpp"
#include "vdnapr/nn/tensor.hpp"

namespace vdnapr::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

/// Contents of a VPRW file: string metadata, a named f64 tensor table and,
/// for mid-training saves, the optimizer state.
struct Checkpoint {
  std::vector<std::pair<std::string, std::string>> metadata;
  std::vector<NamedTensor> tensors;
  std::optional<AdamWState> optimizer;

  const std::string* find_metadata(const std::string& key) const;
  const Tensor* find_tensor(const std::string& name) const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vdnapr::nn
