#pragma once

// Independent reference implementations and random generators shared by the
// unit tests and the acceptance binary. Nothing here calls the code it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vdnapr/activation.hpp"
#include "vdnapr/histogram_spec.hpp"
#include "vdnapr/nn/autodiff.hpp"
#include "vdnapr/nn/tensor.hpp"

namespace testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
inline std::size_t uniform_index(Rng& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

/// Random probability vector of length b; some bins are forced to zero.
inline std::vector<double> random_histogram(Rng& rng, std::size_t b) {
  std::vector<double> p(b);
  double total = 0.0;
  for (auto& v : p) {
    v = uniform(rng, 0.0, 1.0) < 0.3 ? 0.0 : uniform(rng, 0.0, 1.0);
    total += v;
  }
  if (total == 0.0) {
    p[uniform_index(rng, 0, b - 1)] = 1.0;
    total = 1.0;
  }
  for (auto& v : p) v /= total;
  return p;
}

/// Optimal 1D transport cost between two histograms on unit-spaced bins,
/// computed by greedy north-west-corner matching of the mass in bin order
/// (optimal for convex ground cost on the line).
inline double greedy_transport(std::vector<double> p, std::vector<double> q) {
  std::size_t i = 0, j = 0;
  double cost = 0.0;
  while (i < p.size() && j < q.size()) {
    if (p[i] <= 0.0) {
      ++i;
      continue;
    }
    if (q[j] <= 0.0) {
      ++j;
      continue;
    }
    const double moved = std::min(p[i], q[j]);
    cost += moved * std::abs(static_cast<double>(i) - static_cast<double>(j));
    p[i] -= moved;
    q[j] -= moved;
    if (p[i] <= 1e-300) ++i;
    if (q[j] <= 1e-300) ++j;
  }
  return cost;
}

/// Direct-definition 1D convolution: y[n,co,t] = b[co] + sum_ci sum_k w[co,ci,k] * x[n,ci,t*s+k-p].
inline vdnapr::nn::Tensor naive_conv1d(const vdnapr::nn::Tensor& x, const vdnapr::nn::Tensor& w,
                                       const vdnapr::nn::Tensor& b, std::size_t stride, std::size_t padding) {
  const std::size_t batch = x.dim(0), cin = x.dim(1), len = x.dim(2);
  const std::size_t cout = w.dim(0), k = w.dim(2);
  const std::size_t out_len = (len + 2 * padding - k) / stride + 1;
  vdnapr::nn::Tensor y({batch, cout, out_len});
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t co = 0; co < cout; ++co)
      for (std::size_t t = 0; t < out_len; ++t) {
        double s = b[co];
        for (std::size_t ci = 0; ci < cin; ++ci)
          for (std::size_t kk = 0; kk < k; ++kk) {
            const long pos = static_cast<long>(t * stride + kk) - static_cast<long>(padding);
            if (pos < 0 || pos >= static_cast<long>(len)) continue;
            s += w[(co * cin + ci) * k + kk] * x[(n * cin + ci) * len + static_cast<std::size_t>(pos)];
          }
        y[(n * cout + co) * out_len + t] = s;
      }
  return y;
}

struct Neighbor {
  std::size_t index;
  double distance;
};

/// Every row's squared distance, fully sorted by (distance, index).
inline std::vector<Neighbor> full_sort_knn(const std::vector<float>& matrix, std::size_t dim,
                                           const std::vector<float>& query, std::size_t k) {
  const std::size_t rows = dim ? matrix.size() / dim : 0;
  std::vector<Neighbor> all;
  for (std::size_t i = 0; i < rows; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double d = static_cast<double>(matrix[i * dim + j]) - static_cast<double>(query[j]);
      s += d * d;
    }
    all.push_back({i, s});
  }
  std::sort(all.begin(), all.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.index < b.index;
  });
  if (all.size() > k) all.resize(k);
  return all;
}

/// Result of a central finite-difference gradient check.
struct GradientReport {
  std::size_t probes = 0;
  std::size_t resampled = 0;  // probes rejected because +-h crossed a kink
  std::size_t nonzero = 0;    // probes whose gradient is not identically zero
  double max_rel_error = 0.0;
  std::string worst;
};

/// Relative error with a 1e-6 floor on the scale so near-zero gradients are
/// compared absolutely.
inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

/// `build` records a scalar loss on the tape from the given parameter leaves.
/// Analytic gradients come from one backward pass; each probe perturbs one
/// coordinate by +-h. Probes whose perturbed evaluations take a different
/// piecewise branch (ReLU mask, hinge activity) are resampled. With `only`
/// set, probes are confined to that parameter; `prefer_nonzero` then draws
/// every other probe from coordinates whose analytic gradient is non-zero.
inline GradientReport check_gradients(
    std::vector<vdnapr::nn::Parameter*> params,
    const std::function<vdnapr::nn::Var(vdnapr::nn::Tape&, const std::vector<vdnapr::nn::Var>&)>& build,
    std::size_t probes, Rng& rng, double h = 1e-3, std::optional<std::size_t> only = std::nullopt,
    bool prefer_nonzero = false) {
  using namespace vdnapr::nn;
  auto evaluate = [&](bool backward, std::vector<std::uint8_t>* pattern) {
    Tape tape;
    std::vector<Var> leaves;
    for (auto* p : params) leaves.push_back(tape.parameter(*p));
    Var loss = build(tape, leaves);
    if (backward) tape.backward(loss);
    if (pattern) *pattern = tape.branch_pattern();
    return loss.value().item();
  };
  for (auto* p : params) p->zero_grad();
  std::vector<std::uint8_t> base;
  evaluate(true, &base);
  std::vector<Tensor> analytic;
  for (auto* p : params) analytic.push_back(p->grad);

  std::size_t total = 0;
  for (auto* p : params) total += p->value.size();
  std::vector<std::size_t> live;
  if (only && prefer_nonzero)
    for (std::size_t i = 0; i < analytic[*only].size(); ++i)
      if (std::abs(analytic[*only][i]) > 1e-9) live.push_back(i);
  GradientReport report;
  std::size_t attempts = 0;
  while (report.probes < probes && attempts < probes * 50) {
    ++attempts;
    std::size_t flat = 0, which = 0;
    if (only) {
      which = *only;
      flat = !live.empty() && attempts % 2 == 0 ? live[uniform_index(rng, 0, live.size() - 1)]
                                                : uniform_index(rng, 0, params[which]->value.size() - 1);
    } else {
      flat = uniform_index(rng, 0, total - 1);
      while (flat >= params[which]->value.size()) flat -= params[which++]->value.size();
    }
    Parameter& p = *params[which];
    const double old = p.value[flat];
    std::vector<std::uint8_t> plus_pattern, minus_pattern;
    p.value[flat] = old + h;
    const double fp = evaluate(false, &plus_pattern);
    p.value[flat] = old - h;
    const double fm = evaluate(false, &minus_pattern);
    p.value[flat] = old;
    if (plus_pattern != base || minus_pattern != base) {
      ++report.resampled;
      continue;
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double err = relative_error(analytic[which][flat], numeric);
    if (std::abs(analytic[which][flat]) > 1e-9 || std::abs(numeric) > 1e-9) ++report.nonzero;
    if (err > report.max_rel_error) {
      report.max_rel_error = err;
      report.worst = p.name + "[" + std::to_string(flat) + "] analytic " + std::to_string(analytic[which][flat]) +
                     " numeric " + std::to_string(numeric);
    }
    ++report.probes;
  }
  return report;
}

inline vdnapr::nn::Parameter random_parameter(const std::string& name, vdnapr::nn::Shape shape, Rng& rng,
                                              double lo = -1.0, double hi = 1.0) {
  vdnapr::nn::Tensor t(std::move(shape));
  for (auto& v : t.data()) v = uniform(rng, lo, hi);
  return vdnapr::nn::Parameter(name, std::move(t));
}

/// Frame with the given per-layer neuron counts and samples, values from `gen`.
inline vdnapr::activation::ActivationFrame make_frame(const std::string& id,
                                                      const std::vector<vdnapr::activation::LayerShape>& shapes,
                                                      const std::function<float(std::size_t, std::size_t, std::size_t)>& gen) {
  vdnapr::activation::ActivationFrame f;
  f.frame_id = id;
  f.shapes = shapes;
  for (std::size_t l = 0; l < shapes.size(); ++l) {
    std::vector<float> values(static_cast<std::size_t>(shapes[l].neuron_count) * shapes[l].samples);
    for (std::size_t n = 0; n < shapes[l].neuron_count; ++n)
      for (std::size_t s = 0; s < shapes[l].samples; ++s) values[n * shapes[l].samples + s] = gen(l, n, s);
    f.layers.push_back(std::move(values));
  }
  return f;
}

/// Spec with `layers` x `neurons` neurons, all ranges [low, high).
inline vdnapr::vdna::HistogramSpec uniform_spec(std::size_t layers, std::uint32_t neurons, std::uint32_t bins,
                                                double low = 0.0, double high = 1.0) {
  std::vector<vdnapr::vdna::LayerInfo> topo;
  for (std::size_t l = 0; l < layers; ++l) topo.push_back({static_cast<std::int32_t>(l + 1), neurons});
  return vdnapr::vdna::HistogramSpec(topo, bins,
                                     std::vector<vdnapr::vdna::BinRange>(layers * neurons, vdnapr::vdna::BinRange{low, high}));
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("vdnapr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testing
