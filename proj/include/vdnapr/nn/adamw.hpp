#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vdnapr/nn/tensor.hpp"

namespace vdnapr::nn {

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-2;

  friend bool operator==(const AdamWConfig&, const AdamWConfig&) = default;
};

/// Moment buffers are created on the first step, one pair per parameter in
/// the order the parameters are passed.
struct AdamWState {
  AdamWConfig config;
  std::uint64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  friend bool operator==(const AdamWState&, const AdamWState&) = default;
};

/// One AdamW update with decoupled weight decay:
///   theta -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)
/// using each parameter's `grad`.
void adamw_step(std::span<Parameter* const> params, AdamWState& state);

}  // namespace vdnapr::nn
