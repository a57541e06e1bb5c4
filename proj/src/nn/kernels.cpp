#include "vdnapr/nn/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "vdnapr/error.hpp"

namespace vdnapr::nn::kernels {

std::size_t conv1d_out_length(std::size_t length, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0 || kernel == 0) fail(ErrorKind::ShapeError, "conv1d stride and kernel must be >= 1");
  if (length + 2 * padding < kernel)
    fail(ErrorKind::ShapeError, "conv1d output length < 1 (length " + std::to_string(length) + ", padding " +
                                    std::to_string(padding) + ", kernel " + std::to_string(kernel) + ")");
  return (length + 2 * padding - kernel) / stride + 1;
}

Conv1dGeometry conv1d_geometry(const Shape& x, const Shape& w, const Shape& b, std::size_t stride,
                               std::size_t padding) {
  Conv1dGeometry g;
  if (x.size() == 2) {
    g.batch = 1;
    g.in_channels = x[0];
    g.length = x[1];
  } else if (x.size() == 3) {
    g.batch = x[0];
    g.in_channels = x[1];
    g.length = x[2];
  } else {
    fail(ErrorKind::ShapeError, "conv1d input must be [C, L] or [B, C, L], got " + shape_string(x));
  }
  if (w.size() != 3 || w[1] != g.in_channels)
    fail(ErrorKind::ShapeError, "conv1d weight " + shape_string(w) + " incompatible with input " + shape_string(x));
  if (b.size() != 1 || b[0] != w[0]) fail(ErrorKind::ShapeError, "conv1d bias " + shape_string(b));
  g.out_channels = w[0];
  g.kernel = w[2];
  g.stride = stride;
  g.padding = padding;
  g.out_length = conv1d_out_length(g.length, g.kernel, stride, padding);
  return g;
}

namespace {

// Output positions t whose tap k lands inside the input: 0 <= t*s + k - p < L.
struct TapRange {
  std::size_t lo;
  std::size_t hi;  // exclusive
};

TapRange tap_range(const Conv1dGeometry& g, std::size_t k) {
  // t*s >= p - k
  std::size_t lo = 0;
  if (g.padding > k) lo = (g.padding - k + g.stride - 1) / g.stride;
  // t*s + k - p <= L - 1  ->  t <= (L - 1 + p - k) / s
  std::size_t hi = 0;
  if (g.length + g.padding >= k + 1) hi = std::min(g.out_length, (g.length - 1 + g.padding - k) / g.stride + 1);
  if (hi < lo) hi = lo;
  return {lo, hi};
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, std::size_t padding) {
  const auto g = conv1d_geometry(x.shape(), w.shape(), b.shape(), stride, padding);
  Shape out_shape = x.rank() == 2 ? Shape{g.out_channels, g.out_length}
                                  : Shape{g.batch, g.out_channels, g.out_length};
  Tensor y(out_shape);
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  double* yd = y.data().data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    const double* xb = xd + n * g.in_channels * g.length;
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      double* yr = yd + (n * g.out_channels + co) * g.out_length;
      std::fill(yr, yr + g.out_length, b[co]);
      for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        const double* xr = xb + ci * g.length;
        const double* wr = wd + (co * g.in_channels + ci) * g.kernel;
        for (std::size_t k = 0; k < g.kernel; ++k) {
          const double wk = wr[k];
          const auto [lo, hi] = tap_range(g, k);
          const double* src = xr + (lo * g.stride + k - g.padding);
          if (g.stride == 1) {
            for (std::size_t t = lo; t < hi; ++t) yr[t] += wk * src[t - lo];
          } else {
            for (std::size_t t = lo; t < hi; ++t) yr[t] += wk * src[(t - lo) * g.stride];
          }
        }
      }
    }
  }
  return y;
}

void conv1d_backward(const Conv1dGeometry& g, const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw,
                     Tensor* db) {
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  const double* dyd = dy.data().data();
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t co = 0; co < g.out_channels; ++co) {
      const double* gy = dyd + (n * g.out_channels + co) * g.out_length;
      if (db) {
        double s = 0.0;
        for (std::size_t t = 0; t < g.out_length; ++t) s += gy[t];
        (*db)[co] += s;
      }
      for (std::size_t ci = 0; ci < g.in_channels; ++ci) {
        const std::size_t xoff = (n * g.in_channels + ci) * g.length;
        const std::size_t woff = (co * g.in_channels + ci) * g.kernel;
        for (std::size_t k = 0; k < g.kernel; ++k) {
          const auto [lo, hi] = tap_range(g, k);
          const std::size_t base = lo * g.stride + k - g.padding;
          if (dw) {
            const double* src = xd + xoff + base;
            double s = 0.0;
            for (std::size_t t = lo; t < hi; ++t) s += gy[t] * src[(t - lo) * g.stride];
            (*dw)[woff + k] += s;
          }
          if (dx) {
            const double wk = wd[woff + k];
            double* dst = dx->data().data() + xoff + base;
            for (std::size_t t = lo; t < hi; ++t) dst[(t - lo) * g.stride] += wk * gy[t];
          }
        }
      }
    }
  }
}

namespace {

void require_rank2(const Tensor& t, const char* what) {
  if (t.rank() != 2) fail(ErrorKind::ShapeError, std::string(what) + " must be 2D, got " + shape_string(t.shape()));
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  require_rank2(x, "linear input");
  require_rank2(w, "linear weight");
  const std::size_t batch = x.dim(0), in = x.dim(1), out = w.dim(0);
  if (w.dim(1) != in || b.rank() != 1 || b.dim(0) != out)
    fail(ErrorKind::ShapeError, "linear shapes " + shape_string(x.shape()) + " x " + shape_string(w.shape()) + " + " +
                                    shape_string(b.shape()));
  // Transposed copy so the inner loop runs over contiguous outputs.
  std::vector<double> wt(in * out);
  for (std::size_t o = 0; o < out; ++o)
    for (std::size_t i = 0; i < in; ++i) wt[i * out + o] = w[o * in + i];
  Tensor y(Shape{batch, out});
  for (std::size_t n = 0; n < batch; ++n) {
    double* yr = y.data().data() + n * out;
    for (std::size_t o = 0; o < out; ++o) yr[o] = b[o];
    const double* xr = x.data().data() + n * in;
    for (std::size_t i = 0; i < in; ++i) {
      const double xv = xr[i];
      const double* wr = wt.data() + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += xv * wr[o];
    }
  }
  return y;
}

void linear_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw, Tensor* db) {
  const std::size_t batch = x.dim(0), in = x.dim(1), out = w.dim(0);
  for (std::size_t n = 0; n < batch; ++n) {
    const double* gy = dy.data().data() + n * out;
    const double* xr = x.data().data() + n * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = gy[o];
      if (db) (*db)[o] += g;
      if (g == 0.0) continue;
      const double* wr = w.data().data() + o * in;
      if (dx) {
        double* dxr = dx->data().data() + n * in;
        for (std::size_t i = 0; i < in; ++i) dxr[i] += g * wr[i];
      }
      if (dw) {
        double* dwr = dw->data().data() + o * in;
        for (std::size_t i = 0; i < in; ++i) dwr[i] += g * xr[i];
      }
    }
  }
}

Tensor matmul(const Tensor& x, const Tensor& w) {
  require_rank2(x, "matmul input");
  require_rank2(w, "matmul weight");
  const std::size_t batch = x.dim(0), n = x.dim(1), d = w.dim(1);
  if (w.dim(0) != n)
    fail(ErrorKind::ShapeError, "matmul shapes " + shape_string(x.shape()) + " x " + shape_string(w.shape()));
  Tensor y(Shape{batch, d});
  for (std::size_t r = 0; r < batch; ++r) {
    double* yr = y.data().data() + r * d;
    const double* xr = x.data().data() + r * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double xv = xr[i];
      const double* wr = w.data().data() + i * d;
      for (std::size_t j = 0; j < d; ++j) yr[j] += xv * wr[j];
    }
  }
  return y;
}

void matmul_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw) {
  const std::size_t batch = x.dim(0), n = x.dim(1), d = w.dim(1);
  for (std::size_t r = 0; r < batch; ++r) {
    const double* gy = dy.data().data() + r * d;
    const double* xr = x.data().data() + r * n;
    for (std::size_t i = 0; i < n; ++i) {
      const double* wr = w.data().data() + i * d;
      if (dx) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += gy[j] * wr[j];
        (*dx)[r * n + i] += s;
      }
      if (dw) {
        const double xv = xr[i];
        double* dwr = dw->data().data() + i * d;
        for (std::size_t j = 0; j < d; ++j) dwr[j] += xv * gy[j];
      }
    }
  }
}

void relu_inplace(Tensor& x) {
  for (auto& v : x.data()) v = v > 0.0 ? v : 0.0;
}

Tensor l2_normalize_rows(const Tensor& x, std::vector<double>* norms, double eps) {
  require_rank2(x, "l2_normalize input");
  const std::size_t rows = x.dim(0), n = x.dim(1);
  Tensor y(x.shape());
  if (norms) norms->assign(rows, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x.data().data() + r * n;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += xr[i] * xr[i];
    const double norm = std::sqrt(ss);
    if (norms) (*norms)[r] = norm;
    if (norm < eps) continue;
    double* yr = y.data().data() + r * n;
    for (std::size_t i = 0; i < n; ++i) yr[i] = xr[i] / norm;
  }
  return y;
}

}  // namespace vdnapr::nn::kernels
