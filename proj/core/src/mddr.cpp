#include "iomarket/mddr.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <numeric>
#include <ostream>

#include "iomarket/config.hpp"

namespace iomarket::mddr {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274;  // 0.5 * ln(2*pi)

double clampd(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

}  // namespace

// ---- MarketEnv --------------------------------------------------------------

MarketEnv::MarketEnv(TradingConfig cfg, const ChannelState& initial_channel, Rng rng)
    : cfg_(std::move(cfg)), rng_(rng), channel_(initial_channel) {}

MarketEnv::Step MarketEnv::evaluate(const PriceMatrix& prices) {
  Step out;
  out.obs.assign(static_cast<std::size_t>(cfg_.N),
                 std::vector<double>(static_cast<std::size_t>(cfg_.M), 0.0));
  out.utilities.assign(static_cast<std::size_t>(cfg_.N), 0.0);
  std::vector<double> sum_v(static_cast<std::size_t>(cfg_.N), 0.0);
  std::vector<double> paid(static_cast<std::size_t>(cfg_.N), 0.0);
  for (int m = 0; m < cfg_.M; ++m) {
    const auto rs = eq::follower_best_response(cfg_, channel_, m, prices.mu_prices(m));
    for (int n = 0; n < cfg_.N; ++n) {
      const double v = rs[static_cast<std::size_t>(n)].V;
      out.obs[static_cast<std::size_t>(n)][static_cast<std::size_t>(m)] = v;
      sum_v[static_cast<std::size_t>(n)] += v;
      paid[static_cast<std::size_t>(n)] += prices.p.at(n, m) * v;
    }
  }
  for (int n = 0; n < cfg_.N; ++n)
    out.utilities[static_cast<std::size_t>(n)] =
        cfg_.msps[static_cast<std::size_t>(n)].mu * std::log1p(sum_v[static_cast<std::size_t>(n)]) -
        paid[static_cast<std::size_t>(n)];
  return out;
}

std::vector<std::vector<double>> MarketEnv::reset() {
  PriceMatrix prices(cfg_.N, cfg_.M);
  for (int n = 0; n < cfg_.N; ++n) {
    const MspProfile& msp = cfg_.msps[static_cast<std::size_t>(n)];
    for (int m = 0; m < cfg_.M; ++m) prices.p.at(n, m) = 0.5 * (msp.p_min + msp.p_max);
  }
  Step s = evaluate(prices);
  if (cfg_.channel_mode == ChannelMode::Dynamic) channel_ = sample_channel(cfg_, rng_);
  return std::move(s.obs);
}

MarketEnv::Step MarketEnv::step(const PriceMatrix& prices) {
  PriceMatrix clipped = prices;
  for (int n = 0; n < cfg_.N; ++n) {
    const MspProfile& msp = cfg_.msps[static_cast<std::size_t>(n)];
    for (int m = 0; m < cfg_.M; ++m)
      clipped.p.at(n, m) = clampd(clipped.p.at(n, m), msp.p_min, msp.p_max);
  }
  Step s = evaluate(clipped);
  if (cfg_.channel_mode == ChannelMode::Dynamic) channel_ = sample_channel(cfg_, rng_);
  return s;
}

// ---- Policy head ------------------------------------------------------------

PolicyOut actor_forward(const net::Mlp& actor, std::span<const double> obs, const Hyperparams& hp,
                        Rng& rng) {
  const std::vector<double> out = actor.forward(obs);
  const int M = static_cast<int>(out.size()) / 2;
  PolicyOut po;
  po.mean.assign(out.begin(), out.begin() + M);
  po.logstd.resize(static_cast<std::size_t>(M));
  po.u.resize(static_cast<std::size_t>(M));
  po.log_prob = 0.0;
  for (int i = 0; i < M; ++i) {
    const double ls = clampd(out[static_cast<std::size_t>(M + i)], hp.logstd_min, hp.logstd_max);
    po.logstd[static_cast<std::size_t>(i)] = ls;
    const double sigma = std::exp(ls);
    const double raw = po.mean[static_cast<std::size_t>(i)] + sigma * rng.normal();
    const double z = (raw - po.mean[static_cast<std::size_t>(i)]) / sigma;
    po.log_prob += -0.5 * z * z - ls - kHalfLog2Pi;
    po.u[static_cast<std::size_t>(i)] = clampd(raw, -1.0, 1.0);
  }
  return po;
}

// ---- GAE --------------------------------------------------------------------

GaeResult compute_gae(std::span<const double> utilities, std::span<const double> values,
                      double gamma, double lambda) {
  if (utilities.size() != values.size()) throw LengthMismatch("compute_gae: sequence lengths");
  const std::size_t K = utilities.size();
  GaeResult g;
  g.raw_advantages.assign(K, 0.0);
  g.returns.assign(K, 0.0);
  double next_adv = 0.0;
  for (std::size_t k = K; k-- > 0;) {
    const double next_value = (k + 1 < K) ? values[k + 1] : 0.0;
    const double delta = utilities[k] + gamma * next_value - values[k];
    next_adv = delta + gamma * lambda * next_adv;
    g.raw_advantages[k] = next_adv;
    g.returns[k] = next_adv + values[k];
  }
  g.advantages = g.raw_advantages;
  if (K > 0) {
    double mean = 0.0;
    for (double a : g.raw_advantages) mean += a;
    mean /= static_cast<double>(K);
    double var = 0.0;
    for (double a : g.raw_advantages) var += (a - mean) * (a - mean);
    var /= static_cast<double>(K);
    const double inv = 1.0 / (std::sqrt(var) + 1e-8);
    for (double& a : g.advantages) a = (a - mean) * inv;
  }
  return g;
}

// ---- PPO update -------------------------------------------------------------

UpdateStats ppo_update(net::Mlp& actor, net::Mlp& critic, net::Adam& actor_opt,
                       net::Adam& critic_opt, std::vector<Transition>& buffer,
                       const Hyperparams& hp, Rng& rng) {
  UpdateStats stats;
  const std::size_t K = buffer.size();
  if (K == 0) return stats;

  // GAE per episode segment, advantage normalization across the whole buffer.
  std::vector<double> advantages(K, 0.0), returns(K, 0.0);
  std::size_t start = 0;
  for (std::size_t k = 0; k < K; ++k) {
    if (!buffer[k].episode_end && k + 1 < K) continue;
    const std::size_t len = k - start + 1;
    std::vector<double> r(len), v(len);
    for (std::size_t i = 0; i < len; ++i) {
      r[i] = buffer[start + i].reward;
      v[i] = buffer[start + i].value;
    }
    GaeResult g = compute_gae(r, v, hp.gamma, hp.gae_lambda);
    for (std::size_t i = 0; i < len; ++i) {
      advantages[start + i] = g.raw_advantages[i];
      returns[start + i] = g.returns[i];
    }
    start = k + 1;
  }
  {
    double mean = 0.0;
    for (double a : advantages) mean += a;
    mean /= static_cast<double>(K);
    double var = 0.0;
    for (double a : advantages) var += (a - mean) * (a - mean);
    var /= static_cast<double>(K);
    const double inv = 1.0 / (std::sqrt(var) + 1e-8);
    for (double& a : advantages) a = (a - mean) * inv;
  }

  const int M = actor.output_dim() / 2;
  net::Mlp actor_grad = actor.zeros_like();
  net::Mlp critic_grad = critic.zeros_like();
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);

  double loss_p = 0.0, loss_v = 0.0, ent_sum = 0.0, clipped = 0.0;
  std::size_t samples_seen = 0;

  for (int epoch = 0; epoch < hp.update_epochs; ++epoch) {
    // Fisher-Yates with the agent's own stream keeps runs reproducible.
    for (std::size_t i = K; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t mb_start = 0; mb_start < K; mb_start += static_cast<std::size_t>(hp.minibatch)) {
      const std::size_t mb_end = std::min(K, mb_start + static_cast<std::size_t>(hp.minibatch));
      const double inv_mb = 1.0 / static_cast<double>(mb_end - mb_start);
      actor_grad.zero();
      critic_grad.zero();
      double mb_loss_p = 0.0, mb_loss_v = 0.0;

      for (std::size_t j = mb_start; j < mb_end; ++j) {
        const Transition& t = buffer[order[j]];
        net::Mlp::Trace trace;
        const std::vector<double> out = actor.forward(t.obs, trace);
        double logp = 0.0, entropy = 0.0;
        std::vector<double> dlogp_dmean(static_cast<std::size_t>(M));
        std::vector<double> dlogp_dls(static_cast<std::size_t>(M));
        std::vector<bool> ls_active(static_cast<std::size_t>(M));
        for (int i = 0; i < M; ++i) {
          const double mean = out[static_cast<std::size_t>(i)];
          const double ls_raw = out[static_cast<std::size_t>(M + i)];
          const double ls = clampd(ls_raw, hp.logstd_min, hp.logstd_max);
          ls_active[static_cast<std::size_t>(i)] = ls_raw > hp.logstd_min && ls_raw < hp.logstd_max;
          const double sigma = std::exp(ls);
          const double z = (t.action_u[static_cast<std::size_t>(i)] - mean) / sigma;
          logp += -0.5 * z * z - ls - kHalfLog2Pi;
          entropy += ls + 0.5 + kHalfLog2Pi;
          dlogp_dmean[static_cast<std::size_t>(i)] = z / sigma;
          dlogp_dls[static_cast<std::size_t>(i)] = z * z - 1.0;
        }
        const double diff = clampd(logp - t.log_prob, -30.0, 30.0);
        const double ratio = std::exp(diff);
        const double adv = advantages[order[j]];
        const double surr1 = ratio * adv;
        const double surr2 = clampd(ratio, 1.0 - hp.clip, 1.0 + hp.clip) * adv;
        const double policy_loss = -std::min(surr1, surr2) - hp.entropy_coef * entropy;
        mb_loss_p += policy_loss;
        ent_sum += entropy;
        if (std::abs(ratio - 1.0) > hp.clip) clipped += 1.0;
        ++samples_seen;

        // d(policy_loss)/d(logp): only the unclipped branch carries gradient.
        const double dL_dlogp = (surr1 <= surr2) ? -adv * ratio : 0.0;
        std::vector<double> dLdy(2 * static_cast<std::size_t>(M), 0.0);
        for (int i = 0; i < M; ++i) {
          dLdy[static_cast<std::size_t>(i)] = dL_dlogp * dlogp_dmean[static_cast<std::size_t>(i)] * inv_mb;
          if (ls_active[static_cast<std::size_t>(i)])
            dLdy[static_cast<std::size_t>(M + i)] =
                (dL_dlogp * dlogp_dls[static_cast<std::size_t>(i)] - hp.entropy_coef) * inv_mb;
        }
        actor.backward(trace, dLdy, actor_grad);

        net::Mlp::Trace vtrace;
        const double v = critic.forward(t.obs, vtrace)[0];
        const double verr = v - returns[order[j]];
        mb_loss_v += 0.5 * verr * verr;
        const std::vector<double> dv{verr * inv_mb};
        critic.backward(vtrace, dv, critic_grad);
      }

      if (!std::isfinite(mb_loss_p) || !std::isfinite(mb_loss_v))
        throw NonFiniteLoss("ppo_update: non-finite minibatch loss");

      if (hp.max_grad_norm > 0.0) {
        const double an = actor_grad.grad_norm();
        if (an > hp.max_grad_norm) actor_grad.scale(hp.max_grad_norm / an);
        const double cn = critic_grad.grad_norm();
        if (cn > hp.max_grad_norm) critic_grad.scale(hp.max_grad_norm / cn);
      }
      actor_opt.step(actor, actor_grad);
      critic_opt.step(critic, critic_grad);

      loss_p += mb_loss_p * inv_mb;
      loss_v += mb_loss_v * inv_mb;
      ++stats.minibatches;
    }
  }

  stats.policy_loss = loss_p / std::max(1, stats.minibatches);
  stats.value_loss = loss_v / std::max(1, stats.minibatches);
  stats.entropy = samples_seen ? ent_sum / static_cast<double>(samples_seen) : 0.0;
  stats.clip_fraction = samples_seen ? clipped / static_cast<double>(samples_seen) : 0.0;
  buffer.clear();
  return stats;
}

// ---- PpoAgent ---------------------------------------------------------------

PpoAgent::PpoAgent(int num_mus, double p_min, double p_max, const Hyperparams& hp, Rng rng)
    : hp_(hp),
      p_min_(p_min),
      p_max_(p_max),
      actor_opt_(hp.lr),
      critic_opt_(hp.lr),
      obs_norm_(static_cast<std::size_t>(num_mus)),
      rng_(rng) {
  // Small output scale starts the policy near the midpoint price with a unit
  // exploration deviation in u-space.
  actor_ = net::Mlp({num_mus, hp.hidden, 2 * num_mus}, net::Activation::Tanh, rng_, 0.01);
  critic_ = net::Mlp({num_mus, hp.hidden, 1}, net::Activation::Tanh, rng_);
}

PpoAgent::ActionSample PpoAgent::act(std::span<const double> obs_raw) {
  ActionSample s;
  s.obs_norm.resize(obs_raw.size());
  for (std::size_t i = 0; i < obs_raw.size(); ++i) {
    obs_norm_[i].observe(obs_raw[i]);
    s.obs_norm[i] = obs_norm_[i].normalize(obs_raw[i]);
  }
  PolicyOut po = actor_forward(actor_, s.obs_norm, hp_, rng_);
  s.u = po.u;
  s.log_prob = po.log_prob;
  s.prices.resize(s.u.size());
  for (std::size_t i = 0; i < s.u.size(); ++i)
    s.prices[i] = p_min_ + 0.5 * (s.u[i] + 1.0) * (p_max_ - p_min_);
  s.value = critic_.forward(s.obs_norm)[0];
  return s;
}

std::vector<double> PpoAgent::mean_prices(std::span<const double> obs_raw) const {
  std::vector<double> z(obs_raw.size());
  for (std::size_t i = 0; i < obs_raw.size(); ++i) z[i] = obs_norm_[i].normalize(obs_raw[i]);
  const std::vector<double> out = actor_.forward(z);
  const std::size_t M = out.size() / 2;
  std::vector<double> prices(M);
  for (std::size_t i = 0; i < M; ++i) {
    const double u = clampd(out[i], -1.0, 1.0);
    prices[i] = p_min_ + 0.5 * (u + 1.0) * (p_max_ - p_min_);
  }
  return prices;
}

void PpoAgent::record(const ActionSample& sample, double utility, bool episode_end) {
  util_norm_.observe(utility);
  Transition t;
  t.obs = sample.obs_norm;
  t.action_u = sample.u;
  t.log_prob = sample.log_prob;
  t.reward = utility / std::max(util_norm_.stddev(), 1e-8);
  t.value = sample.value;
  t.episode_end = episode_end;
  buffer_.push_back(std::move(t));
}

bool PpoAgent::maybe_update(UpdateStats* stats) {
  if (!buffer_full()) return false;
  UpdateStats s = ppo_update(actor_, critic_, actor_opt_, critic_opt_, buffer_, hp_, rng_);
  if (stats) *stats = s;
  return true;
}

void PpoAgent::save(std::ostream& os) const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.17g %.17g", p_min_, p_max_);
  os << "agent " << obs_norm_.size() << " " << buf << "\n";
  actor_.save(os);
  critic_.save(os);
  actor_opt_.save(os);
  critic_opt_.save(os);
  for (const auto& n : obs_norm_) n.save(os);
  util_norm_.save(os);
}

PpoAgent PpoAgent::load(std::istream& is, const Hyperparams& hp) {
  std::string tag;
  std::size_t m = 0;
  PpoAgent a;
  a.hp_ = hp;
  if (!(is >> tag >> m >> a.p_min_ >> a.p_max_) || tag != "agent")
    throw IoError("checkpoint: expected 'agent' header");
  a.actor_ = net::Mlp::load(is);
  a.critic_ = net::Mlp::load(is);
  a.actor_opt_ = net::Adam::load(is);
  a.critic_opt_ = net::Adam::load(is);
  a.obs_norm_.resize(m);
  for (auto& n : a.obs_norm_) n = net::RunningNorm::load(is);
  a.util_norm_ = net::RunningNorm::load(is);
  return a;
}

// ---- Training loop ----------------------------------------------------------

TrainResult train(const TradingConfig& cfg, const ChannelState& initial_channel, int episodes,
                  const Hyperparams& hp, Rng rng) {
  TrainResult result;
  MarketEnv env(cfg, initial_channel, rng.child(0));
  result.agents.reserve(static_cast<std::size_t>(cfg.N));
  for (int n = 0; n < cfg.N; ++n) {
    const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
    result.agents.emplace_back(cfg.M, msp.p_min, msp.p_max, hp,
                               rng.child(static_cast<std::uint64_t>(n) + 1));
  }

  result.episode_utilities.reserve(static_cast<std::size_t>(std::max(0, episodes)));
  for (int e = 0; e < episodes; ++e) {
    std::vector<std::vector<double>> obs = env.reset();
    std::vector<double> accum(static_cast<std::size_t>(cfg.N), 0.0);
    for (int k = 0; k < hp.episode_len; ++k) {
      std::vector<PpoAgent::ActionSample> samples(static_cast<std::size_t>(cfg.N));
      PriceMatrix prices(cfg.N, cfg.M);
      for (int n = 0; n < cfg.N; ++n) {
        samples[static_cast<std::size_t>(n)] =
            result.agents[static_cast<std::size_t>(n)].act(obs[static_cast<std::size_t>(n)]);
        for (int m = 0; m < cfg.M; ++m)
          prices.p.at(n, m) = samples[static_cast<std::size_t>(n)].prices[static_cast<std::size_t>(m)];
      }
      MarketEnv::Step step = env.step(prices);
      const bool ep_end = (k + 1 == hp.episode_len);
      for (int n = 0; n < cfg.N; ++n) {
        result.agents[static_cast<std::size_t>(n)].record(
            samples[static_cast<std::size_t>(n)], step.utilities[static_cast<std::size_t>(n)], ep_end);
        accum[static_cast<std::size_t>(n)] += step.utilities[static_cast<std::size_t>(n)];
        result.agents[static_cast<std::size_t>(n)].maybe_update();
      }
      obs = std::move(step.obs);
    }
    for (double& a : accum) a /= static_cast<double>(hp.episode_len);
    double total = 0.0;
    for (double a : accum) total += a;
    result.episode_utilities.push_back(std::move(accum));
    result.episode_total.push_back(total);
  }

  // Greedy read-out: deterministic policy means from a fresh reset.
  std::vector<std::vector<double>> obs = env.reset();
  result.greedy_prices = PriceMatrix(cfg.N, cfg.M);
  for (int n = 0; n < cfg.N; ++n) {
    const std::vector<double> prices =
        result.agents[static_cast<std::size_t>(n)].mean_prices(obs[static_cast<std::size_t>(n)]);
    for (int m = 0; m < cfg.M; ++m) result.greedy_prices.p.at(n, m) = prices[static_cast<std::size_t>(m)];
  }
  MarketEnv::Step readout = env.step(result.greedy_prices);
  result.greedy_utilities = readout.utilities;
  return result;
}

}  // namespace iomarket::mddr
