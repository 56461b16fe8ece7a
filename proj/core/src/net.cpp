#include "iomarket/net.hpp"

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>

namespace iomarket::net {

namespace {

const char* act_name(Activation a) { return a == Activation::Tanh ? "tanh" : "identity"; }

Activation act_from(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "identity") return Activation::Identity;
  throw IoError("checkpoint: unknown activation '" + s + "'");
}

void write_doubles(std::ostream& os, const std::vector<double>& v) {
  char buf[40];
  for (std::size_t i = 0; i < v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", v[i]);
    os << (i ? " " : "") << buf;
  }
  os << "\n";
}

void read_doubles(std::istream& is, std::vector<double>& v) {
  for (double& x : v)
    if (!(is >> x)) throw IoError("checkpoint: truncated value block");
}

}  // namespace

Mlp::Mlp(const std::vector<int>& sizes, Activation hidden, Rng& rng, double output_scale) {
  if (sizes.size() < 2) throw DomainError("Mlp: need at least input and output sizes");
  layers.resize(sizes.size() - 1);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Layer& layer = layers[l];
    layer.in = sizes[l];
    layer.out = sizes[l + 1];
    if (layer.in <= 0 || layer.out <= 0) throw DomainError("Mlp: layer sizes must be positive");
    const bool last = (l + 2 == sizes.size());
    layer.act = last ? Activation::Identity : hidden;
    layer.W.resize(static_cast<std::size_t>(layer.out) * static_cast<std::size_t>(layer.in));
    layer.b.assign(static_cast<std::size_t>(layer.out), 0.0);
    // Glorot uniform; the output head optionally shrunk toward zero.
    const double bound = std::sqrt(6.0 / (layer.in + layer.out)) * (last ? output_scale : 1.0);
    for (double& w : layer.W) w = rng.uniform(-bound, bound);
  }
}

std::vector<double> Mlp::forward(std::span<const double> x) const {
  Trace scratch;
  return forward(x, scratch);
}

std::vector<double> Mlp::forward(std::span<const double> x, Trace& trace) const {
  if (static_cast<int>(x.size()) != input_dim()) throw LengthMismatch("Mlp::forward: input size");
  trace.acts.assign(layers.size() + 1, {});
  trace.acts[0].assign(x.begin(), x.end());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& layer = layers[l];
    const std::vector<double>& a = trace.acts[l];
    std::vector<double>& out = trace.acts[l + 1];
    out.assign(static_cast<std::size_t>(layer.out), 0.0);
    for (int o = 0; o < layer.out; ++o) {
      double z = layer.b[static_cast<std::size_t>(o)];
      const double* wrow = layer.W.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(layer.in);
      for (int i = 0; i < layer.in; ++i) z += wrow[i] * a[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(o)] = layer.act == Activation::Tanh ? std::tanh(z) : z;
    }
  }
  return trace.acts.back();
}

std::vector<double> Mlp::backward(const Trace& trace, std::span<const double> dLdy,
                                  Mlp& grad) const {
  if (trace.acts.size() != layers.size() + 1) throw DomainError("Mlp::backward: stale trace");
  if (static_cast<int>(dLdy.size()) != output_dim()) throw LengthMismatch("Mlp::backward: dLdy size");
  if (grad.layers.size() != layers.size()) throw LengthMismatch("Mlp::backward: grad shape");

  std::vector<double> delta(dLdy.begin(), dLdy.end());
  for (std::size_t l = layers.size(); l-- > 0;) {
    const Layer& layer = layers[l];
    Layer& g = grad.layers[l];
    const std::vector<double>& a_prev = trace.acts[l];
    const std::vector<double>& a_out = trace.acts[l + 1];
    // dL/dz = dL/da * act'(z); tanh'(z) = 1 - a^2 using the cached output.
    if (layer.act == Activation::Tanh)
      for (int o = 0; o < layer.out; ++o)
        delta[static_cast<std::size_t>(o)] *=
            1.0 - a_out[static_cast<std::size_t>(o)] * a_out[static_cast<std::size_t>(o)];
    for (int o = 0; o < layer.out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      g.b[static_cast<std::size_t>(o)] += d;
      double* grow = g.W.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(layer.in);
      for (int i = 0; i < layer.in; ++i) grow[i] += d * a_prev[static_cast<std::size_t>(i)];
    }
    if (l == 0) {
      std::vector<double> dx(static_cast<std::size_t>(layer.in), 0.0);
      for (int o = 0; o < layer.out; ++o) {
        const double d = delta[static_cast<std::size_t>(o)];
        const double* wrow = layer.W.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(layer.in);
        for (int i = 0; i < layer.in; ++i) dx[static_cast<std::size_t>(i)] += d * wrow[i];
      }
      return dx;
    }
    std::vector<double> next(static_cast<std::size_t>(layer.in), 0.0);
    for (int o = 0; o < layer.out; ++o) {
      const double d = delta[static_cast<std::size_t>(o)];
      const double* wrow = layer.W.data() + static_cast<std::size_t>(o) * static_cast<std::size_t>(layer.in);
      for (int i = 0; i < layer.in; ++i) next[static_cast<std::size_t>(i)] += d * wrow[i];
    }
    delta = std::move(next);
  }
  return {};
}

Mlp Mlp::zeros_like() const {
  Mlp z;
  z.layers.resize(layers.size());
  for (std::size_t l = 0; l < layers.size(); ++l) {
    z.layers[l].in = layers[l].in;
    z.layers[l].out = layers[l].out;
    z.layers[l].act = layers[l].act;
    z.layers[l].W.assign(layers[l].W.size(), 0.0);
    z.layers[l].b.assign(layers[l].b.size(), 0.0);
  }
  return z;
}

void Mlp::zero() {
  for (Layer& l : layers) {
    std::fill(l.W.begin(), l.W.end(), 0.0);
    std::fill(l.b.begin(), l.b.end(), 0.0);
  }
}

void Mlp::scale(double s) {
  for (Layer& l : layers) {
    for (double& w : l.W) w *= s;
    for (double& b : l.b) b *= s;
  }
}

void Mlp::add_scaled(const Mlp& other, double s) {
  if (other.layers.size() != layers.size()) throw LengthMismatch("Mlp::add_scaled: shape");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    for (std::size_t i = 0; i < layers[l].W.size(); ++i) layers[l].W[i] += s * other.layers[l].W[i];
    for (std::size_t i = 0; i < layers[l].b.size(); ++i) layers[l].b[i] += s * other.layers[l].b[i];
  }
}

std::size_t Mlp::param_count() const {
  std::size_t n = 0;
  for (const Layer& l : layers) n += l.W.size() + l.b.size();
  return n;
}

double Mlp::grad_norm() const {
  double s = 0.0;
  for (const Layer& l : layers) {
    for (double w : l.W) s += w * w;
    for (double b : l.b) s += b * b;
  }
  return std::sqrt(s);
}

void Mlp::save(std::ostream& os) const {
  os << "mlp " << layers.size() << "\n";
  for (const Layer& l : layers) {
    os << "layer " << l.in << " " << l.out << " " << act_name(l.act) << "\n";
    write_doubles(os, l.W);
    write_doubles(os, l.b);
  }
}

Mlp Mlp::load(std::istream& is) {
  std::string tag;
  std::size_t n_layers = 0;
  if (!(is >> tag >> n_layers) || tag != "mlp") throw IoError("checkpoint: expected 'mlp' header");
  Mlp net;
  net.layers.resize(n_layers);
  for (Layer& l : net.layers) {
    std::string act;
    if (!(is >> tag >> l.in >> l.out >> act) || tag != "layer")
      throw IoError("checkpoint: expected 'layer' header");
    if (l.in <= 0 || l.out <= 0) throw IoError("checkpoint: bad layer shape");
    l.act = act_from(act);
    l.W.resize(static_cast<std::size_t>(l.in) * static_cast<std::size_t>(l.out));
    l.b.resize(static_cast<std::size_t>(l.out));
    read_doubles(is, l.W);
    read_doubles(is, l.b);
  }
  return net;
}

void Adam::step(Mlp& net, const Mlp& grad) {
  const std::size_t n = net.param_count();
  if (grad.param_count() != n) throw LengthMismatch("Adam::step: grad shape");
  if (m_.size() != n) {
    m_.assign(n, 0.0);
    v_.assign(n, 0.0);
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  std::size_t k = 0;
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    auto update = [&](double& p, double g) {
      m_[k] = b1_ * m_[k] + (1.0 - b1_) * g;
      v_[k] = b2_ * v_[k] + (1.0 - b2_) * g * g;
      p -= lr_ * (m_[k] / bc1) / (std::sqrt(v_[k] / bc2) + eps_);
      ++k;
    };
    for (std::size_t i = 0; i < net.layers[l].W.size(); ++i)
      update(net.layers[l].W[i], grad.layers[l].W[i]);
    for (std::size_t i = 0; i < net.layers[l].b.size(); ++i)
      update(net.layers[l].b[i], grad.layers[l].b[i]);
  }
}

void Adam::reset() {
  t_ = 0;
  m_.clear();
  v_.clear();
}

void Adam::save(std::ostream& os) const {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g", lr_, b1_, b2_, eps_);
  os << "adam " << buf << " " << t_ << " " << m_.size() << "\n";
  write_doubles(os, m_);
  write_doubles(os, v_);
}

Adam Adam::load(std::istream& is) {
  std::string tag;
  double lr, b1, b2, eps;
  std::uint64_t t;
  std::size_t n;
  if (!(is >> tag >> lr >> b1 >> b2 >> eps >> t >> n) || tag != "adam")
    throw IoError("checkpoint: expected 'adam' header");
  Adam a(lr, b1, b2, eps);
  a.t_ = t;
  a.m_.resize(n);
  a.v_.resize(n);
  read_doubles(is, a.m_);
  read_doubles(is, a.v_);
  return a;
}

void RunningNorm::observe(double x) {
  ++count_;
  const double d = x - mean_;
  mean_ += d / static_cast<double>(count_);
  m2_ += d * (x - mean_);
}

double RunningNorm::stddev() const {
  if (count_ < 2) return 1.0;
  return std::sqrt(m2_ / static_cast<double>(count_ - 1));
}

double RunningNorm::normalize(double x) const {
  if (count_ < 2) return x - mean_;
  return (x - mean_) / std::max(stddev(), 1e-8);
}

void RunningNorm::save(std::ostream& os) const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.17g %.17g", mean_, m2_);
  os << "norm " << count_ << " " << buf << "\n";
}

RunningNorm RunningNorm::load(std::istream& is) {
  std::string tag;
  RunningNorm n;
  if (!(is >> tag >> n.count_ >> n.mean_ >> n.m2_) || tag != "norm")
    throw IoError("checkpoint: expected 'norm' header");
  return n;
}

}  // namespace iomarket::net
