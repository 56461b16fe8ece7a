#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>
#include <vector>

#include "iomarket/net.hpp"
#include "iomarket/rng.hpp"

using namespace iomarket;

TEST_CASE("zero-weight network outputs its bias") {
  Rng rng(7);
  net::Mlp mlp({3, 4, 2}, net::Activation::Tanh, rng);
  for (auto& layer : mlp.layers)
    for (auto& w : layer.W) w = 0.0;
  mlp.layers[0].b = {0.3, -0.1, 0.0, 0.9};
  mlp.layers[1].b = {1.5, -2.5};
  const std::vector<double> y = mlp.forward(std::vector<double>{9.0, -3.0, 0.5});
  // tanh(bias) feeds a zero weight matrix, so only the output bias survives.
  CHECK(y[0] == 1.5);
  CHECK(y[1] == -2.5);
}

TEST_CASE("forward matches a hand-rolled two-layer evaluation") {
  Rng rng(8);
  net::Mlp mlp({2, 2, 1}, net::Activation::Tanh, rng);
  mlp.layers[0].W = {1.0, -1.0, 0.5, 0.25};  // row-major [out x in]
  mlp.layers[0].b = {0.1, -0.2};
  mlp.layers[1].W = {2.0, -3.0};
  mlp.layers[1].b = {0.05};
  const double x0 = 0.7, x1 = -0.4;
  const double h0 = std::tanh(1.0 * x0 - 1.0 * x1 + 0.1);
  const double h1 = std::tanh(0.5 * x0 + 0.25 * x1 - 0.2);
  const double want = 2.0 * h0 - 3.0 * h1 + 0.05;
  const std::vector<double> y = mlp.forward(std::vector<double>{x0, x1});
  CHECK(y[0] == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("backprop matches central finite differences") {
  Rng rng(9);
  for (int trial = 0; trial < 8; ++trial) {
    net::Mlp mlp({4, 6, 3}, net::Activation::Tanh, rng);
    const std::vector<double> x{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    const std::vector<double> target{rng.normal(), rng.normal(), rng.normal()};
    auto loss = [&]() {
      const std::vector<double> y = mlp.forward(x);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += 0.5 * (y[i] - target[i]) * (y[i] - target[i]);
      return s;
    };
    net::Mlp grad = mlp.zeros_like();
    net::Mlp::Trace trace;
    const std::vector<double> y = mlp.forward(x, trace);
    std::vector<double> dLdy(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) dLdy[i] = y[i] - target[i];
    mlp.backward(trace, dLdy, grad);

    for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
      auto probe = [&](double& p, double g) {
        const double save = p;
        const double h = 1e-5 * std::max(1.0, std::abs(save));
        p = save + h;
        const double up = loss();
        p = save - h;
        const double dn = loss();
        p = save;
        const double fd = (up - dn) / (2.0 * h);
        const double rel = std::abs(fd - g) / std::max(1e-6, std::abs(fd) + std::abs(g));
        CHECK(rel < 1e-4);
      };
      for (std::size_t i = 0; i < mlp.layers[l].W.size(); ++i)
        probe(mlp.layers[l].W[i], grad.layers[l].W[i]);
      for (std::size_t i = 0; i < mlp.layers[l].b.size(); ++i)
        probe(mlp.layers[l].b[i], grad.layers[l].b[i]);
    }
  }
}

TEST_CASE("backward also returns the input gradient") {
  Rng rng(10);
  net::Mlp mlp({3, 5, 1}, net::Activation::Tanh, rng);
  std::vector<double> x{0.2, -0.7, 1.1};
  net::Mlp grad = mlp.zeros_like();
  net::Mlp::Trace trace;
  const std::vector<double> y = mlp.forward(x, trace);
  const std::vector<double> dx = mlp.backward(trace, std::vector<double>{1.0}, grad);
  REQUIRE(dx.size() == 3);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double save = x[i];
    const double h = 1e-6;
    x[i] = save + h;
    const double up = mlp.forward(x)[0];
    x[i] = save - h;
    const double dn = mlp.forward(x)[0];
    x[i] = save;
    const double fd = (up - dn) / (2.0 * h);
    CHECK(dx[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("parameter arithmetic helpers") {
  Rng rng(11);
  net::Mlp a({2, 3, 2}, net::Activation::Tanh, rng);
  CHECK(a.param_count() == (2 * 3 + 3) + (3 * 2 + 2));
  net::Mlp z = a.zeros_like();
  CHECK(z.param_count() == a.param_count());
  CHECK(z.grad_norm() == 0.0);
  z.add_scaled(a, 2.0);
  z.add_scaled(a, -2.0);
  CHECK(z.grad_norm() == doctest::Approx(0.0).epsilon(1e-18));
  net::Mlp s = a;
  s.scale(0.0);
  CHECK(s.grad_norm() == 0.0);
}

TEST_CASE("adam descends a quadratic and honors lr=0") {
  Rng rng(12);
  net::Mlp mlp({1, 1}, net::Activation::Identity, rng);
  mlp.layers[0].W = {4.0};
  mlp.layers[0].b = {-3.0};
  net::Adam opt(0.05);
  auto loss = [&]() {
    const double y = mlp.forward(std::vector<double>{1.0})[0];
    return 0.5 * y * y;
  };
  const double before = loss();
  for (int it = 0; it < 2000; ++it) {
    net::Mlp grad = mlp.zeros_like();
    net::Mlp::Trace trace;
    const std::vector<double> y = mlp.forward(std::vector<double>{1.0}, trace);
    mlp.backward(trace, std::vector<double>{y[0]}, grad);
    opt.step(mlp, grad);
  }
  CHECK(loss() < 1e-6);
  CHECK(loss() < before);

  net::Mlp frozen({3, 3}, net::Activation::Identity, rng);
  const net::Mlp snapshot = frozen;
  net::Adam zero_lr(0.0);
  net::Mlp g = frozen.zeros_like();
  g.add_scaled(frozen, 1.0);  // arbitrary nonzero gradient
  zero_lr.step(frozen, g);
  for (std::size_t l = 0; l < frozen.layers.size(); ++l) {
    CHECK(frozen.layers[l].W == snapshot.layers[l].W);
    CHECK(frozen.layers[l].b == snapshot.layers[l].b);
  }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Rng rng(13);
  net::Mlp mlp({5, 7, 4}, net::Activation::Tanh, rng);
  std::stringstream ms;
  mlp.save(ms);
  const net::Mlp back = net::Mlp::load(ms);
  REQUIRE(back.layers.size() == mlp.layers.size());
  for (std::size_t l = 0; l < mlp.layers.size(); ++l) {
    CHECK(back.layers[l].W == mlp.layers[l].W);
    CHECK(back.layers[l].b == mlp.layers[l].b);
  }
  const std::vector<double> x{0.1, 0.2, 0.3, 0.4, 0.5};
  CHECK(back.forward(x) == mlp.forward(x));

  // Optimizer state round-trips too: continuing from a restored optimizer
  // reproduces the continued trajectory exactly.
  net::Adam opt(1e-2);
  net::Mlp g = mlp.zeros_like();
  g.add_scaled(mlp, 0.1);
  opt.step(mlp, g);
  std::stringstream os;
  opt.save(os);
  net::Adam opt2 = net::Adam::load(os);
  net::Mlp m1 = mlp, m2 = mlp;
  opt.step(m1, g);
  opt2.step(m2, g);
  for (std::size_t l = 0; l < m1.layers.size(); ++l) {
    CHECK(m1.layers[l].W == m2.layers[l].W);
    CHECK(m1.layers[l].b == m2.layers[l].b);
  }

  net::RunningNorm norm;
  for (double v : {1.0, 2.0, 3.0, 4.0}) norm.observe(v);
  std::stringstream ns;
  norm.save(ns);
  const net::RunningNorm nback = net::RunningNorm::load(ns);
  CHECK(nback.count() == norm.count());
  CHECK(nback.mean() == norm.mean());
  CHECK(nback.stddev() == norm.stddev());
  CHECK(nback.normalize(2.5) == norm.normalize(2.5));
}

TEST_CASE("running normalizer tracks mean and deviation") {
  net::RunningNorm norm;
  for (double v : {2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0}) norm.observe(v);
  CHECK(norm.mean() == doctest::Approx(5.0).epsilon(1e-15));
  CHECK(norm.stddev() == doctest::Approx(std::sqrt(32.0 / 7.0)).epsilon(1e-12));  // sample std
  CHECK(norm.normalize(5.0) == doctest::Approx(0.0).epsilon(1e-12));
  // Degenerate history: the floor keeps normalize finite.
  net::RunningNorm flat;
  flat.observe(3.0);
  flat.observe(3.0);
  CHECK(std::isfinite(flat.normalize(100.0)));
}
