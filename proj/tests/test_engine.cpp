#include <cmath>
#include <limits>
#include <string>

#include "doctest.h"
#include "lowlight/adam.hpp"
#include "lowlight/error.hpp"
#include "lowlight/ops.hpp"
#include "lowlight/tensor.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace lowlight;
using namespace lowlight::engine;
using lowlight::testing::check_gradients;
using lowlight::testing::GradCheckOptions;

namespace {

void require_grads_pass(const std::vector<lowlight::testing::GradCheckResult>& results,
                        double tol) {
  for (const auto& r : results) {
    INFO(r.name << " rel_err=" << r.rel_error() << " |a|=" << r.analytic_norm
                << " |n|=" << r.numeric_norm);
    CHECK(r.analytic_norm > 0.0);
    CHECK(r.pass(tol));
  }
}

double max_abs_diff(std::span<const float> a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("tensor copies share storage, clones do not") {
  Tensor a({2, 3}, 1.5f);
  Tensor b = a;
  Tensor c = a.clone();
  CHECK(b.shares_storage(a));
  CHECK_FALSE(c.shares_storage(a));
  a.mutable_data()[0] = 7.0f;
  CHECK(b.data()[0] == 7.0f);
  CHECK(c.data()[0] == 1.5f);
  CHECK(a.numel() == 6);
  CHECK(shape_string(a.shape()) == "[2,3]");
}

TEST_CASE("tensor rejects value count mismatch") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), ShapeError);
}

TEST_CASE("conv2d matches the loop-nest oracle") {
  struct Case {
    std::size_t n, cin, cout, h, w, k;
    int stride, pad;
  };
  const Case cases[] = {
      {1, 4, 8, 16, 16, 3, 1, 1},  {2, 3, 5, 9, 7, 3, 1, 1},  {1, 8, 8, 8, 8, 1, 1, 0},
      {1, 2, 3, 11, 13, 5, 1, 2},  {1, 3, 4, 12, 12, 7, 1, 3}, {1, 5, 6, 10, 10, 3, 2, 1},
      {1, 16, 70, 4, 20, 3, 1, 1}, {2, 6, 2, 7, 9, 3, 1, 0},
  };
  std::uint64_t seed = 10;
  for (const auto& c : cases) {
    const Tensor x = lowlight::testing::random_tensor({c.n, c.cin, c.h, c.w}, seed++);
    const Tensor k = lowlight::testing::random_tensor({c.cout, c.cin, c.k, c.k}, seed++);
    const Tensor b = lowlight::testing::random_tensor({c.cout}, seed++);
    std::size_t oh = 0, ow = 0;
    const auto ref = lowlight::testing::conv2d_oracle(x, k, b, c.stride, c.pad, oh, ow);
    for (auto algo : {ConvAlgorithm::kDirect, ConvAlgorithm::kIm2col}) {
      const Tensor y = conv2d(x, k, b, {c.stride, c.pad, algo});
      INFO("cin=" << c.cin << " cout=" << c.cout << " k=" << c.k << " algo="
                  << static_cast<int>(algo));
      REQUIRE(y.dim(2) == oh);
      REQUIRE(y.dim(3) == ow);
      CHECK(max_abs_diff(y.data(), ref) <= 1e-5);
    }
  }
}

TEST_CASE("conv2d errors name the offending dimension") {
  const Tensor x({1, 3, 8, 8});
  try {
    conv2d(x, Tensor({4, 2, 3, 3}), Tensor({4}));
    FAIL("expected a shape error");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("dim 1") != std::string::npos);
  }
  CHECK_THROWS_AS(conv2d(x, Tensor({4, 3, 2, 2}), Tensor({4})), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor({4, 3, 3, 3}), Tensor({5})), ShapeError);
  CHECK_THROWS_AS(conv2d(Tensor({3, 8, 8}), Tensor({4, 3, 3, 3}), Tensor({4})), ShapeError);
}

TEST_CASE("conv2d_backward refuses a missing saved input") {
  const Tensor up({1, 2, 4, 4}, 1.0f);
  CHECK_THROWS_AS(conv2d_backward(up, Tensor(), Tensor({2, 3, 3, 3}), {1, 1}), Error);
}

TEST_CASE("conv2d gradients pass finite differences") {
  for (auto algo : {ConvAlgorithm::kDirect, ConvAlgorithm::kIm2col}) {
    for (int k : {1, 3, 5}) {
      const ConvParams p{1, k / 2, algo};
      auto results = check_gradients(
          [p](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], p); },
          {{"input", lowlight::testing::random_tensor({2, 3, 6, 5}, 1)},
           {"kernel", lowlight::testing::random_tensor({4, 3, static_cast<std::size_t>(k),
                                                          static_cast<std::size_t>(k)}, 2)},
           {"bias", lowlight::testing::random_tensor({4}, 3)}},
          GradCheckOptions{1e-2});
      require_grads_pass(results, 1e-3);
    }
  }
  auto strided = check_gradients(
      [](const std::vector<Tensor>& in) { return conv2d(in[0], in[1], in[2], {2, 1}); },
      {{"input", lowlight::testing::random_tensor({1, 2, 7, 7}, 4)},
       {"kernel", lowlight::testing::random_tensor({3, 2, 3, 3}, 5)},
       {"bias", lowlight::testing::random_tensor({3}, 6)}},
      GradCheckOptions{1e-2});
  require_grads_pass(strided, 1e-3);
}

TEST_CASE("leaky_relu forward and gradient") {
  const Tensor x({4}, std::vector<float>{-2.0f, -0.5f, 0.5f, 3.0f});
  const Tensor y = leaky_relu(x, 0.2f);
  CHECK(y.data()[0] == doctest::Approx(-0.4f));
  CHECK(y.data()[3] == 3.0f);
  CHECK_THROWS_AS(leaky_relu(x, 1.0f), Error);
  auto r = check_gradients([](const std::vector<Tensor>& in) { return leaky_relu(in[0], 0.2f); },
                           {{"x", lowlight::testing::random_away_from_zero({2, 3, 4, 4}, 7)}});
  require_grads_pass(r, 1e-3);
}

TEST_CASE("kink-aware probes step off a nearby kink") {
  // Within one step of zero; the last entry sits on the kink itself.
  const std::vector<float> v{4e-4f, -3e-4f, 6e-4f, -7e-4f, 0.5f, -0.5f, 2e-4f, 0.0f};
  auto fn = [](const std::vector<Tensor>& in) { return leaky_relu(in[0], 0.2f); };
  const auto plain = check_gradients(fn, {{"x", Tensor({8}, v)}});
  CHECK(plain[0].rel_error() > 0.1);
  GradCheckOptions opts;
  opts.kink_aware = true;
  const auto aware = check_gradients(fn, {{"x", Tensor({8}, v)}}, opts);
  CHECK(aware[0].rel_error() < 1e-3);
  CHECK(aware[0].one_sided == 5);
  CHECK(aware[0].unresolved == 1);
}

TEST_CASE("max_pool2 routes gradient to the first maximum") {
  const Tensor x({1, 1, 2, 2}, std::vector<float>{1.0f, 5.0f, 5.0f, 2.0f});
  Tensor xx = x;
  xx.set_requires_grad(true);
  GradTape tape;
  Tensor y = max_pool2(xx);
  CHECK(y.data()[0] == 5.0f);
  Tensor loss = l1_loss(y, Tensor({1, 1, 1, 1}, 0.0f));
  tape.backward(loss);
  CHECK(xx.grad()[1] == 1.0f);
  CHECK(xx.grad()[2] == 0.0f);
  CHECK_THROWS_AS(max_pool2(Tensor({1, 1, 3, 4})), ShapeError);
}

TEST_CASE("structural ops pass finite differences") {
  const GradCheckOptions opt{1e-2};
  require_grads_pass(
      check_gradients([](const std::vector<Tensor>& in) { return max_pool2(in[0]); },
                      {{"x", lowlight::testing::random_distinct({2, 3, 6, 4}, 8)}},
                      GradCheckOptions{1e-3}),
      1e-3);
  require_grads_pass(
      check_gradients([](const std::vector<Tensor>& in) { return upsample2(in[0]); },
                      {{"x", lowlight::testing::random_tensor({1, 3, 3, 5}, 9)}}, opt),
      1e-3);
  require_grads_pass(
      check_gradients(
          [](const std::vector<Tensor>& in) { return concat_channels(in[0], in[1]); },
          {{"a", lowlight::testing::random_tensor({2, 2, 3, 3}, 10)},
           {"b", lowlight::testing::random_tensor({2, 5, 3, 3}, 11)}},
          opt),
      1e-3);
  require_grads_pass(
      check_gradients([](const std::vector<Tensor>& in) { return depth_to_space(in[0]); },
                      {{"x", lowlight::testing::random_tensor({1, 12, 3, 4}, 12)}}, opt),
      1e-3);
  require_grads_pass(
      check_gradients([](const std::vector<Tensor>& in) { return space_to_depth(in[0]); },
                      {{"x", lowlight::testing::random_tensor({1, 3, 4, 6}, 13)}}, opt),
      1e-3);
}

TEST_CASE("l1_loss value and gradient") {
  const Tensor p({4}, std::vector<float>{1, 2, 3, 4});
  const Tensor t({4}, std::vector<float>{0, 2.5, 3, 6});
  CHECK(l1_loss(p, t).data()[0] == doctest::Approx((1 + 0.5 + 0 + 2) / 4.0));
  auto r = check_gradients(
      [](const std::vector<Tensor>& in) {
        return l1_loss(in[0], lowlight::testing::random_tensor({3, 5}, 99, 5.0f, 6.0f));
      },
      {{"p", lowlight::testing::random_tensor({3, 5}, 14)}}, GradCheckOptions{0.1});
  require_grads_pass(r, 1e-3);
}

TEST_CASE("depth_to_space matches the index oracle and space_to_depth inverts it") {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const std::size_t c = 1 + s % 3, h = 1 + s % 5, w = 2 + s % 4;
    const Tensor x = lowlight::testing::random_tensor({2, 4 * c, h, w}, 100 + s);
    const Tensor y = depth_to_space(x);
    const Tensor ref = lowlight::testing::depth_to_space_oracle(x);
    REQUIRE(y.shape() == ref.shape());
    CHECK(std::equal(y.data().begin(), y.data().end(), ref.data().begin()));
    const Tensor back = space_to_depth(y);
    CHECK(std::equal(back.data().begin(), back.data().end(), x.data().begin()));
  }
  CHECK_THROWS_AS(depth_to_space(Tensor({1, 6, 2, 2})), ShapeError);
}

TEST_CASE("no recording without a tape or under NoGradGuard") {
  Tensor x = lowlight::testing::random_tensor({1, 1, 2, 2}, 1);
  x.set_requires_grad(true);
  CHECK(GradTape::active() == nullptr);
  GradTape tape;
  {
    NoGradGuard guard;
    leaky_relu(x, 0.1f);
    CHECK(tape.size() == 0);
  }
  leaky_relu(x, 0.1f);
  CHECK(tape.size() == 1);
}

TEST_CASE("adam first step moves each weight by about the learning rate") {
  Tensor w({3}, std::vector<float>{1.0f, -2.0f, 0.5f});
  const auto g = w.mutable_grad();
  g[0] = 0.3f;
  g[1] = -5.0f;
  g[2] = 1e-3f;
  std::vector<NamedTensor> params{{"w", w}};
  AdamState state(params, AdamConfig{1e-2f});
  adam_step(params, state);
  CHECK(state.step() == 1);
  CHECK(w.data()[0] == doctest::Approx(1.0f - 1e-2f).epsilon(1e-4));
  CHECK(w.data()[1] == doctest::Approx(-2.0f + 1e-2f).epsilon(1e-4));
  CHECK(w.data()[2] == doctest::Approx(0.5f - 1e-2f).epsilon(1e-3));
}

TEST_CASE("adam matches a hand-rolled update over several steps") {
  Tensor w({1}, std::vector<float>{0.0f});
  std::vector<NamedTensor> params{{"w", w}};
  const AdamConfig cfg{1e-3f, 0.9f, 0.999f, 1e-8f};
  AdamState state(params, cfg);
  double m = 0, v = 0, ref = 0;
  const double grads[] = {1.0, -0.5, 0.25, 2.0};
  for (int t = 1; t <= 4; ++t) {
    w.zero_grad();
    w.mutable_grad()[0] = static_cast<float>(grads[t - 1]);
    adam_step(params, state);
    m = 0.9 * m + 0.1 * grads[t - 1];
    v = 0.999 * v + 0.001 * grads[t - 1] * grads[t - 1];
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    ref -= 1e-3 * mh / (std::sqrt(vh) + 1e-8);
    CHECK(w.data()[0] == doctest::Approx(ref).epsilon(1e-5));
  }
}

TEST_CASE("adam aborts on a non-finite gradient and names the parameter") {
  Tensor a({2}, 1.0f), b({2}, 1.0f);
  a.mutable_grad()[0] = 1.0f;
  b.mutable_grad()[1] = std::numeric_limits<float>::quiet_NaN();
  std::vector<NamedTensor> params{{"enc0.conv1.weight", a}, {"head.bias", b}};
  AdamState state(params, {});
  try {
    adam_step(params, state);
    FAIL("expected a numeric error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kNumeric);
    CHECK(std::string(e.what()).find("head.bias") != std::string::npos);
  }
  CHECK(a.data()[0] == 1.0f);
  CHECK(state.step() == 0);
}

}  // TEST_SUITE
