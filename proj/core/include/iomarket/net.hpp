#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "iomarket/rng.hpp"
#include "iomarket/types.hpp"

namespace iomarket::net {

enum class Activation { Tanh, Identity };

// One fully connected layer; weights are row-major [out x in].
struct Layer {
  int in = 0;
  int out = 0;
  Activation act = Activation::Identity;
  std::vector<double> W;
  std::vector<double> b;
};

// Plain multilayer perceptron with explicit backprop. Hidden layers share one
// activation; the output layer is always linear.
class Mlp {
 public:
  Mlp() = default;
  // sizes = {input, hidden..., output}. output_scale shrinks the final
  // layer's init so fresh policy heads start near zero.
  Mlp(const std::vector<int>& sizes, Activation hidden, Rng& rng, double output_scale = 1.0);

  std::vector<double> forward(std::span<const double> x) const;

  // Forward pass retaining every activation, for a subsequent backward pass.
  struct Trace {
    std::vector<std::vector<double>> acts;  // acts[0] = input, acts[L] = output
  };
  std::vector<double> forward(std::span<const double> x, Trace& trace) const;

  // Accumulates dL/dparam into grad (same shape as *this, not zeroed here)
  // and returns dL/dinput.
  std::vector<double> backward(const Trace& trace, std::span<const double> dLdy, Mlp& grad) const;

  Mlp zeros_like() const;
  void zero();
  void scale(double s);
  void add_scaled(const Mlp& other, double s);
  std::size_t param_count() const;
  double grad_norm() const;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out; }

  void save(std::ostream& os) const;
  static Mlp load(std::istream& is);

  std::vector<Layer> layers;
};

// Adam with bias correction; step() applies gradient descent on net in place.
class Adam {
 public:
  explicit Adam(double lr = 3e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(Mlp& net, const Mlp& grad);
  void reset();

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

  void save(std::ostream& os) const;
  static Adam load(std::istream& is);

 private:
  double lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<double> m_, v_;
};

// Running mean/variance tracker (Welford) used to normalize observations and
// rewards without any cross-agent communication.
class RunningNorm {
 public:
  void observe(double x);
  double normalize(double x) const;  // (x - mean) / std, std floored at 1e-8
  double mean() const { return mean_; }
  double stddev() const;
  std::uint64_t count() const { return count_; }

  void save(std::ostream& os) const;
  static RunningNorm load(std::istream& is);

 private:
  std::uint64_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace iomarket::net
