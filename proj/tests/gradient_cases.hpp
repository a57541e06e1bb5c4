#pragma once

// Finite-difference cases for every differentiable op and for the full
// encoder + head triplet graph.

#include <memory>
#include <string>
#include <vector>

#include "support.hpp"
#include "vdnapr/encoder.hpp"
#include "vdnapr/nn/autodiff.hpp"

namespace testing {

struct GradientCase {
  std::string name;
  std::vector<vdnapr::nn::Parameter*> params;
  std::function<vdnapr::nn::Var(vdnapr::nn::Tape&, const std::vector<vdnapr::nn::Var>&)> build;
};

/// Owns the random parameters the op cases read.
struct OpCases {
  vdnapr::nn::Parameter x, w, b, m, lw, lb, mw, v;
  vdnapr::nn::Tensor probe_weights;
  std::vector<GradientCase> cases;

  explicit OpCases(Rng& rng) {
    using namespace vdnapr::nn;
    x = random_parameter("x", {2, 2, 9}, rng);
    w = random_parameter("w", {3, 2, 3}, rng);
    b = random_parameter("b", {3}, rng);
    m = random_parameter("m", {4, 5}, rng);
    lw = random_parameter("lw", {3, 5}, rng);
    lb = random_parameter("lb", {3}, rng);
    mw = random_parameter("mw", {5, 2}, rng);
    v = random_parameter("v", {4, 5}, rng);
    probe_weights = random_parameter("pw", {4, 5}, rng).value;

    // A fixed random linear functional turns any op output into a scalar.
    auto weighted = [this](Tape& t, Var out) {
      Tensor pw(out.shape());
      for (std::size_t i = 0; i < pw.size(); ++i)
        pw[i] = probe_weights[i % probe_weights.size()] + 0.1 * static_cast<double>(i % 7);
      return sum(mul(out, t.constant(pw)));
    };
    cases = {
        {"conv1d", {&x, &w, &b}, [=](Tape& t, const auto& p) { return weighted(t, conv1d(p[0], p[1], p[2], 2, 1)); }},
        {"linear", {&m, &lw, &lb}, [=](Tape& t, const auto& p) { return weighted(t, linear(p[0], p[1], p[2])); }},
        {"matmul", {&m, &mw}, [=](Tape& t, const auto& p) { return weighted(t, matmul(p[0], p[1])); }},
        {"relu", {&m}, [=](Tape& t, const auto& p) { return weighted(t, relu(p[0])); }},
        {"l2_normalize_rows", {&m}, [=](Tape& t, const auto& p) { return weighted(t, l2_normalize_rows(p[0])); }},
        {"reshape", {&m}, [=](Tape& t, const auto& p) { return weighted(t, reshape(p[0], {5, 4})); }},
        {"row", {&m}, [=](Tape& t, const auto& p) { return weighted(t, row(p[0], 2)); }},
        {"add", {&m, &v}, [=](Tape& t, const auto& p) { return weighted(t, add(p[0], p[1])); }},
        {"mul", {&m, &v}, [=](Tape& t, const auto& p) { return weighted(t, mul(p[0], p[1])); }},
        {"scale", {&m}, [=](Tape& t, const auto& p) { return weighted(t, scale(p[0], -2.5)); }},
        {"sum", {&m}, [](Tape&, const auto& p) { return sum(mul(p[0], p[0])); }},
        {"mean", {&m, &v}, [=](Tape& t, const auto& p) {
           std::vector<Var> s = {weighted(t, p[0]), weighted(t, mul(p[1], p[1]))};
           return mean(s);
         }},
        {"triplet_loss", {&m}, [](Tape&, const auto& p) {
           std::vector<Var> negs = {row(p[0], 2), row(p[0], 3)};
           return triplet_loss(row(p[0], 0), row(p[0], 1), negs, 2.0);
         }},
    };
  }
  OpCases(const OpCases&) = delete;
  OpCases& operator=(const OpCases&) = delete;
};

/// Encoder E plus head W on `samples` histograms per neuron, one triplet per
/// anchor, batched the way training batches them.
inline vdnapr::nn::Var encoder_triplet_graph(vdnapr::nn::Tape& tape, const std::vector<vdnapr::nn::Var>& leaves,
                                             const vdnapr::encoder::EncoderConfig& config, std::size_t neurons,
                                             const vdnapr::nn::Tensor& rows, double margin) {
  using namespace vdnapr;
  encoder::EncoderVars vars;
  for (std::size_t i = 0; i < encoder::kConvLayers; ++i) {
    vars.conv_w.push_back(leaves[2 * i]);
    vars.conv_b.push_back(leaves[2 * i + 1]);
  }
  for (std::size_t i = 0; i < encoder::kLinearLayers; ++i) {
    vars.lin_w.push_back(leaves[2 * encoder::kConvLayers + 2 * i]);
    vars.lin_b.push_back(leaves[2 * encoder::kConvLayers + 2 * i + 1]);
  }
  vars.head = leaves.back();
  const std::size_t count = rows.dim(0) / neurons;
  auto e = encoder::encoder_forward(vars, config, tape.constant(rows));
  auto flat = nn::reshape(e, {count, neurons * config.h});
  auto g = nn::l2_normalize_rows(nn::matmul(flat, vars.head));
  // Samples 0,1 form (anchor, positive) with negatives 2,3; samples 1,0 with 3.
  std::vector<nn::Var> losses;
  std::vector<nn::Var> negs = {nn::row(g, 2), nn::row(g, 3)};
  losses.push_back(nn::triplet_loss(nn::row(g, 0), nn::row(g, 1), negs, margin));
  std::vector<nn::Var> negs2 = {nn::row(g, 3)};
  losses.push_back(nn::triplet_loss(nn::row(g, 1), nn::row(g, 0), negs2, margin));
  return nn::mean(losses);
}

}  // namespace testing
