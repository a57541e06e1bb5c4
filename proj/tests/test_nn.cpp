#include <cmath>
#include <fstream>

#include "doctest.h"
#include "gradient_cases.hpp"
#include "support.hpp"
#include "vdnapr/error.hpp"
#include "vdnapr/nn/adamw.hpp"
#include "vdnapr/nn/autodiff.hpp"
#include "vdnapr/nn/checkpoint.hpp"
#include "vdnapr/nn/kernels.hpp"

using namespace vdnapr;
using namespace vdnapr::nn;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::ConfigError;
}

Tensor random_tensor(Shape shape, testing::Rng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = testing::uniform(rng, -1.0, 1.0);
  return t;
}

}  // namespace

TEST_CASE("conv1d examples") {
  Tensor x({1, 3}, {1.0, 2.0, 3.0});
  CHECK(kernels::conv1d(x, Tensor({1, 1, 1}, {1.0}), Tensor({1}, {0.0}), 1, 0).data()[2] == 3.0);
  const auto y = kernels::conv1d(x, Tensor({1, 1, 3}, 1.0), Tensor({1}, 0.0), 1, 1);
  CHECK(y.shape() == Shape{1, 3});
  CHECK(std::vector<double>(y.data().begin(), y.data().end()) == std::vector<double>{3.0, 6.0, 5.0});
  CHECK(kernels::conv1d_out_length(500, 5, 2, 2) == 250);
  CHECK(kernels::conv1d_out_length(125, 5, 2, 2) == 63);
  CHECK(kind_of([] { kernels::conv1d_out_length(2, 5, 1, 0); }) == ErrorKind::ShapeError);
}

TEST_CASE("conv1d matches the nested-loop reference") {
  testing::Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t b = testing::uniform_index(rng, 1, 3), cin = testing::uniform_index(rng, 1, 3);
    const std::size_t cout = testing::uniform_index(rng, 1, 4), k = testing::uniform_index(rng, 1, 5);
    const std::size_t len = testing::uniform_index(rng, k, 20), stride = testing::uniform_index(rng, 1, 3);
    const std::size_t pad = testing::uniform_index(rng, 0, 2);
    const auto x = random_tensor({b, cin, len}, rng), w = random_tensor({cout, cin, k}, rng), bias = random_tensor({cout}, rng);
    const auto got = kernels::conv1d(x, w, bias, stride, pad);
    const auto want = testing::naive_conv1d(x, w, bias, stride, pad);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(std::abs(got[i] - want[i]) <= 1e-6);
  }
}

TEST_CASE("linear, matmul and l2 normalization kernels") {
  Tensor x({1, 2}, {1.0, 2.0});
  Tensor w({2, 2}, {1.0, 0.0, 1.0, 1.0});
  const auto y = kernels::linear(x, w, Tensor({2}, {0.5, -0.5}));
  CHECK(y[0] == 1.5);
  CHECK(y[1] == 2.5);
  const auto m = kernels::matmul(x, w);
  CHECK(m[0] == 3.0);
  CHECK(m[1] == 2.0);
  const auto n = kernels::l2_normalize_rows(Tensor({2, 2}, {3.0, 4.0, 0.0, 0.0}));
  CHECK(n[0] == doctest::Approx(0.6));
  CHECK(n[1] == doctest::Approx(0.8));
  CHECK(n[2] == 0.0);
  CHECK(n[3] == 0.0);
  CHECK(kind_of([&] { kernels::matmul(x, Tensor({3, 2})); }) == ErrorKind::ShapeError);
}

TEST_CASE("backward of sum gives unit gradients") {
  testing::Rng rng(1);
  auto p = testing::random_parameter("p", {3, 4}, rng);
  Tape tape;
  tape.backward(sum(tape.parameter(p)));
  for (double g : p.grad.data()) CHECK(g == 1.0);
}

TEST_CASE("backward of squared norm of Wx matches the closed form") {
  testing::Rng rng(2);
  auto w = testing::random_parameter("W", {3, 4}, rng);
  const Tensor x({1, 4}, {0.5, -1.0, 2.0, 0.25});
  Tape tape;
  Var wx = linear(tape.constant(x), tape.parameter(w), tape.constant(Tensor({3})));
  tape.backward(sum(mul(wx, wx)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(w.grad[i * 4 + j] == doctest::Approx(2.0 * wx.value()[i] * x[j]).epsilon(1e-12));
}

TEST_CASE("parameter gradients accumulate until zeroed") {
  auto p = Parameter("p", Tensor({2}, {1.0, 2.0}));
  for (int i = 0; i < 2; ++i) {
    Tape tape;
    tape.backward(sum(tape.parameter(p)));
  }
  CHECK(p.grad[0] == 2.0);
  p.zero_grad();
  CHECK(p.grad[0] == 0.0);
}

TEST_CASE("graph errors") {
  Tape empty;
  Var never;
  CHECK(kind_of([&] { empty.backward(never); }) == ErrorKind::GraphError);
  Tape a, b;
  Var x = a.constant(Tensor({2}, 1.0));
  Var y = b.constant(Tensor({2}, 1.0));
  CHECK(kind_of([&] { add(x, y); }) == ErrorKind::GraphError);
  CHECK(kind_of([&] { a.backward(x); }) == ErrorKind::GraphError);  // not a scalar
  CHECK(kind_of([&] { b.backward(sum(x)); }) == ErrorKind::GraphError);
  CHECK(kind_of([&] { relu(never); }) == ErrorKind::GraphError);
}

TEST_CASE("triplet loss examples") {
  Tape t;
  Var a = t.constant(Tensor({2}, {0.0, 0.0}));
  Var p = t.constant(Tensor({2}, {0.0, 0.0}));
  std::vector<Var> far = {t.constant(Tensor({2}, {1.0, 0.0})), t.constant(Tensor({2}, {0.0, 0.5}))};
  CHECK(triplet_loss(a, p, far, 0.1).value().item() == 0.0);

  Var p1 = t.constant(Tensor({2}, {1.0, 0.0}));
  std::vector<Var> same = {a};
  CHECK(triplet_loss(a, p1, same, 0.1).value().item() == doctest::Approx(1.1).epsilon(1e-15));

  const std::vector<double> av = {0.0, 0.0}, pv = {1.0, 0.0}, nv = {0.0, 0.0};
  std::vector<std::span<const double>> negs = {nv};
  CHECK(triplet_loss_value(av, pv, negs, 0.1) == doctest::Approx(1.1).epsilon(1e-15));

  std::vector<Var> wrong = {t.constant(Tensor({3}))};
  CHECK(kind_of([&] { triplet_loss(a, p, wrong); }) == ErrorKind::ShapeError);
  CHECK(kind_of([&] { triplet_loss(a, p, std::vector<Var>{}); }) == ErrorKind::ShapeError);
  CHECK(kind_of([&] { triplet_loss(a, p, far, -1.0); }) == ErrorKind::ConfigError);
}

TEST_CASE("finite-difference checks of each op") {
  testing::Rng rng(17);
  testing::OpCases ops(rng);
  for (const auto& c : ops.cases) {
    CAPTURE(c.name);
    const auto report = testing::check_gradients(c.params, c.build, 100, rng);
    CAPTURE(report.worst);
    CHECK(report.probes == 100);
    CHECK(report.max_rel_error <= 1e-4);
  }
}

TEST_CASE("adamw closed form") {
  AdamWConfig cfg;
  cfg.lr = 0.1;
  cfg.weight_decay = 0.0;
  Parameter p("p", Tensor({2}, {1.0, -2.0}));
  std::vector<Parameter*> ps = {&p};
  AdamWState state;
  state.config = cfg;
  adamw_step(ps, state);
  CHECK(p.value[0] == 1.0);
  CHECK(p.value[1] == -2.0);

  cfg.weight_decay = 0.01;
  AdamWState s2;
  s2.config = cfg;
  Parameter q("q", Tensor({1}, {3.0}));
  q.grad[0] = 0.5;
  std::vector<Parameter*> qs = {&q};
  adamw_step(qs, s2);
  // t = 1: m_hat = g, v_hat = g^2.
  const double expected = 3.0 - 0.1 * (0.5 / (0.5 + 1e-8)) - 0.1 * 0.01 * 3.0;
  CHECK(q.value[0] == doctest::Approx(expected).epsilon(1e-14));
  CHECK(s2.step == 1);

  Parameter r("r", Tensor({3}));
  std::vector<Parameter*> rs = {&r};
  CHECK(kind_of([&] { adamw_step(rs, s2); }) == ErrorKind::ShapeError);
}

TEST_CASE("checkpoint round trip and corruption") {
  const auto dir = testing::scratch_dir("ckpt");
  testing::Rng rng(3);
  Checkpoint c;
  c.metadata = {{"kind", "test"}, {"note", "two words"}};
  c.tensors = {{"a", random_tensor({2, 3}, rng)}, {"b", random_tensor({4}, rng)}, {"s", Tensor::scalar(1.5)}};
  save_checkpoint(dir / "c.vprw", c);
  CHECK(load_checkpoint(dir / "c.vprw") == c);

  AdamWState s;
  s.step = 3;
  s.m = {random_tensor({2}, rng)};
  s.v = {random_tensor({2}, rng)};
  c.optimizer = s;
  save_checkpoint(dir / "o.vprw", c);
  const auto back = load_checkpoint(dir / "o.vprw");
  CHECK(back == c);
  CHECK(*back.find_metadata("note") == "two words");
  CHECK(back.find_tensor("missing") == nullptr);

  std::ifstream in(dir / "o.vprw", std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::ofstream(dir / "t.vprw", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK(kind_of([&] { load_checkpoint(dir / "t.vprw"); }) == ErrorKind::FormatError);
  std::ofstream(dir / "x.vprw", std::ios::binary) << bytes << "junk";
  CHECK(kind_of([&] { load_checkpoint(dir / "x.vprw"); }) == ErrorKind::FormatError);
}
