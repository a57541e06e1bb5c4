#pragma once

#include <cstdint>
#include <vector>

#include "vdnapr/nn/tensor.hpp"

// Forward/backward kernels shared by the autodiff tape and the forward-only
// inference path, so both produce bit-identical activations.
namespace vdnapr::nn::kernels {

struct Conv1dGeometry {
  std::size_t batch = 0;
  std::size_t in_channels = 0;
  std::size_t length = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t out_length = 0;
};

/// floor((length + 2 * padding - kernel) / stride) + 1; ShapeError if < 1.
std::size_t conv1d_out_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding);

/// x [B, Cin, L] (a 2D [Cin, L] input is treated as B = 1), w [Cout, Cin, K], b [Cout].
Conv1dGeometry conv1d_geometry(const Shape& x, const Shape& w, const Shape& b, std::size_t stride, std::size_t padding);
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t padding);
void conv1d_backward(const Conv1dGeometry& g, const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw,
                     Tensor* db);

/// x [B, in], w [out, in], b [out] -> [B, out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw, Tensor* db);

/// x [B, n], w [n, d] -> [B, d].
Tensor matmul(const Tensor& x, const Tensor& w);
void matmul_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw);

void relu_inplace(Tensor& x);

inline constexpr double kNormEpsilon = 1e-12;

/// Each row of a [B, n] tensor scaled to unit L2 norm; rows with norm below
/// `eps` become zero. `norms` receives the per-row norms.
Tensor l2_normalize_rows(const Tensor& x, std::vector<double>* norms = nullptr, double eps = kNormEpsilon);

}  // namespace vdnapr::nn::kernels
