#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "iomarket/equilibrium.hpp"
#include "iomarket/net.hpp"
#include "iomarket/rng.hpp"
#include "iomarket/types.hpp"

namespace iomarket::mddr {

// PPO knobs. Defaults follow common practice; everything is overridable from
// the experiment config.
struct Hyperparams {
  double clip = 0.2;
  double gae_lambda = 0.95;
  double gamma = 0.95;
  int buffer_capacity = 128;
  int update_epochs = 4;
  int minibatch = 32;
  double lr = 3e-4;
  double entropy_coef = 0.01;
  int episode_len = 32;
  int hidden = 256;
  double logstd_min = -5.0;
  double logstd_max = 2.0;
  double max_grad_norm = 0.5;
};

// One stored stage transition. Observations are stored post-normalization
// (exactly what the networks saw); the action is the clipped u-space sample
// applied to the environment, while log_prob is the pre-clip sample density.
struct Transition {
  std::vector<double> obs;
  std::vector<double> action_u;
  double log_prob = 0.0;
  double reward = 0.0;
  double value = 0.0;
  bool episode_end = false;
};

// Stage-game market environment shared by all agents. Each agent only ever
// receives its own column of the outcome: the V-vector observation and its
// scalar utility.
class MarketEnv {
 public:
  MarketEnv(TradingConfig cfg, const ChannelState& initial_channel, Rng rng);

  int num_agents() const { return cfg_.N; }
  int obs_dim() const { return cfg_.M; }

  // Broadcasts the midpoint price from every provider and returns each
  // agent's V-vector; dynamic mode then redraws the channel.
  std::vector<std::vector<double>> reset();

  struct Step {
    std::vector<std::vector<double>> obs;  // per agent, length M
    std::vector<double> utilities;         // per agent
  };
  // Clips prices into bounds, lets every user best-respond, pays each agent
  // its utility; dynamic mode redraws the channel after observations.
  Step step(const PriceMatrix& prices);

  const TradingConfig& config() const { return cfg_; }
  const ChannelState& channel() const { return channel_; }

 private:
  Step evaluate(const PriceMatrix& prices);

  TradingConfig cfg_;
  Rng rng_;
  ChannelState channel_;
};

// Gaussian policy head output for one observation.
struct PolicyOut {
  std::vector<double> u;       // sample per dimension, clipped into [-1, 1]
  double log_prob = 0.0;       // density of the raw pre-clip sample
  std::vector<double> mean;
  std::vector<double> logstd;  // clamped
};

// Samples an action from the actor's diagonal Gaussian. The actor's output
// layer is [mean(M), logstd(M)]; logstd is clamped before use.
PolicyOut actor_forward(const net::Mlp& actor, std::span<const double> obs, const Hyperparams& hp,
                        Rng& rng);

struct GaeResult {
  std::vector<double> advantages;      // normalized to zero mean / unit variance
  std::vector<double> raw_advantages;  // pre-normalization
  std::vector<double> returns;         // raw advantage + value
};

// Generalized advantage estimation over one trajectory; the step after the
// last entry is treated as terminal (no bootstrap).
GaeResult compute_gae(std::span<const double> utilities, std::span<const double> values,
                      double gamma, double lambda);

struct UpdateStats {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
  int minibatches = 0;
};

// Clipped-surrogate PPO update over a full buffer; clears the buffer.
UpdateStats ppo_update(net::Mlp& actor, net::Mlp& critic, net::Adam& actor_opt,
                       net::Adam& critic_opt, std::vector<Transition>& buffer,
                       const Hyperparams& hp, Rng& rng);

// One fully distributed agent: owns its networks, optimizers, normalizers,
// buffer, and RNG. Nothing here references other agents or user internals.
class PpoAgent {
 public:
  PpoAgent(int num_mus, double p_min, double p_max, const Hyperparams& hp, Rng rng);

  struct ActionSample {
    std::vector<double> obs_norm;
    std::vector<double> u;       // pre-clip sample
    std::vector<double> prices;  // clipped and mapped into [p_min, p_max]
    double log_prob = 0.0;
    double value = 0.0;
  };

  // Normalizes the raw observation (updating the running stats), samples an
  // action, and evaluates the critic.
  ActionSample act(std::span<const double> obs_raw);

  // Deterministic greedy action (policy mean); does not touch running stats.
  std::vector<double> mean_prices(std::span<const double> obs_raw) const;

  // Stores the transition; scales the utility by its running deviation.
  void record(const ActionSample& sample, double utility, bool episode_end);

  bool buffer_full() const { return static_cast<int>(buffer_.size()) >= hp_.buffer_capacity; }
  std::size_t buffer_size() const { return buffer_.size(); }

  // Runs a PPO update when the buffer is full; returns whether one ran.
  bool maybe_update(UpdateStats* stats = nullptr);

  const net::Mlp& actor() const { return actor_; }
  const net::Mlp& critic() const { return critic_; }
  net::Mlp& mutable_actor() { return actor_; }
  double p_min() const { return p_min_; }
  double p_max() const { return p_max_; }

  void save(std::ostream& os) const;
  static PpoAgent load(std::istream& is, const Hyperparams& hp);

 private:
  PpoAgent() = default;

  Hyperparams hp_;
  double p_min_ = 0.0, p_max_ = 1.0;
  net::Mlp actor_, critic_;
  net::Adam actor_opt_, critic_opt_;
  std::vector<net::RunningNorm> obs_norm_;
  net::RunningNorm util_norm_;
  std::vector<Transition> buffer_;
  Rng rng_{0};
};

struct TrainResult {
  std::vector<PpoAgent> agents;
  // episode_utilities[e][n] = agent n's mean stage utility in episode e.
  std::vector<std::vector<double>> episode_utilities;
  std::vector<double> episode_total;  // sum over agents
  PriceMatrix greedy_prices;          // deterministic policy outputs after training
  std::vector<double> greedy_utilities;
};

// Algorithm: per episode, reset the environment, roll out episode_len stage
// games with every agent acting from its own observation, store transitions,
// and update whichever agents have full buffers.
TrainResult train(const TradingConfig& cfg, const ChannelState& initial_channel, int episodes,
                  const Hyperparams& hp, Rng rng);

}  // namespace iomarket::mddr
