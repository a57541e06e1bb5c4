#include "vdnapr/nn/adamw.hpp"

#include <cmath>

#include "vdnapr/error.hpp"

namespace vdnapr::nn {

void adamw_step(std::span<Parameter* const> params, AdamWState& state) {
  if (state.m.empty() && state.v.empty() && state.step == 0) {
    for (const Parameter* p : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size())
    fail(ErrorKind::ShapeError, "optimizer state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                                    std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = *params[i];
    if (p.grad.shape() != p.value.shape() || state.m[i].shape() != p.value.shape() ||
        state.v[i].shape() != p.value.shape())
      fail(ErrorKind::ShapeError, "parameter '" + p.name + "' shape " + shape_string(p.value.shape()) +
                                      " disagrees with its gradient or moment buffers");
  }
  const auto& c = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(c.beta1, t);
  const double bias2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    auto theta = p.value.data();
    const auto g = p.grad.data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < theta.size(); ++j) {
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * g[j];
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bias1;
      const double v_hat = v[j] / bias2;
      theta[j] -= c.lr * (m_hat / (std::sqrt(v_hat) + c.eps)) + c.lr * c.weight_decay * theta[j];
    }
  }
}

}  // namespace vdnapr::nn
