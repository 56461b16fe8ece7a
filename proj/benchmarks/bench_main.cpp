// Microbenchmarks for the hot paths: follower responses dominate every solver
// loop, the equilibrium solve dominates the harness, and the PPO update
// dominates training.
#include <benchmark/benchmark.h>

#include <vector>

#include "iomarket/config.hpp"
#include "iomarket/equilibrium.hpp"
#include "iomarket/flsim.hpp"
#include "iomarket/mddr.hpp"

using namespace iomarket;

namespace {

struct Instance {
  TradingConfig cfg;
  ChannelState ch;

  explicit Instance(std::uint64_t seed) : cfg(default_config(seed)) {
    Rng rng(seed);
    ch = sample_channel(cfg, rng);
  }
};

void bm_follower_best_response(benchmark::State& state) {
  const Instance inst(1);
  const PriceMatrix prices = eq::midpoint_prices(inst.cfg);
  const std::vector<double> row = prices.mu_prices(0);
  for (auto _ : state) {
    auto rs = eq::follower_best_response(inst.cfg, inst.ch, 0, row);
    benchmark::DoNotOptimize(rs);
  }
}
BENCHMARK(bm_follower_best_response);

void bm_market_respond(benchmark::State& state) {
  const Instance inst(2);
  const PriceMatrix prices = eq::midpoint_prices(inst.cfg);
  for (auto _ : state) {
    auto resp = eq::respond(inst.cfg, inst.ch, prices);
    benchmark::DoNotOptimize(resp);
  }
}
BENCHMARK(bm_market_respond);

void bm_msp_best_response(benchmark::State& state) {
  const Instance inst(3);
  const PriceMatrix prices = eq::midpoint_prices(inst.cfg);
  for (auto _ : state) {
    auto br = eq::msp_best_response(inst.cfg, inst.ch, 0, prices);
    benchmark::DoNotOptimize(br);
  }
}
BENCHMARK(bm_msp_best_response);

void bm_solve_ne(benchmark::State& state) {
  const Instance inst(4);
  for (auto _ : state) {
    auto ne = eq::solve_ne(inst.cfg, inst.ch, eq::midpoint_prices(inst.cfg));
    benchmark::DoNotOptimize(ne);
  }
}
BENCHMARK(bm_solve_ne)->Unit(benchmark::kMillisecond);

void bm_ppo_update(benchmark::State& state) {
  const int M = 5;
  Rng rng(5);
  mddr::Hyperparams hp;
  net::Mlp actor({M, hp.hidden, 2 * M}, net::Activation::Tanh, rng);
  net::Mlp critic({M, hp.hidden, 1}, net::Activation::Tanh, rng);
  net::Adam aopt(hp.lr), copt(hp.lr);
  std::vector<mddr::Transition> proto;
  Rng srng(6);
  for (int k = 0; k < hp.buffer_capacity; ++k) {
    mddr::Transition t;
    t.obs.resize(M);
    for (double& v : t.obs) v = srng.normal();
    const mddr::PolicyOut po = mddr::actor_forward(actor, t.obs, hp, srng);
    t.action_u = po.u;
    t.log_prob = po.log_prob;
    t.reward = srng.normal();
    t.value = srng.normal();
    t.episode_end = (k + 1) % hp.episode_len == 0;
    proto.push_back(t);
  }
  for (auto _ : state) {
    std::vector<mddr::Transition> buffer = proto;
    auto stats = mddr::ppo_update(actor, critic, aopt, copt, buffer, hp, srng);
    benchmark::DoNotOptimize(stats);
  }
}
BENCHMARK(bm_ppo_update)->Unit(benchmark::kMillisecond);

void bm_flsim_rounds(benchmark::State& state) {
  const Instance inst(7);
  Rng rng(7);
  Rng setup_rng = rng.child(30);
  const flsim::FlSetup setup = flsim::make_fl_setup(inst.cfg, setup_rng);
  const eq::EquilibriumResult ne =
      eq::solve_ne(inst.cfg, inst.ch, eq::midpoint_prices(inst.cfg));
  for (auto _ : state) {
    auto run = flsim::run_synchronous_rounds(inst.cfg, inst.ch, setup, ne.alloc, rng.child(31));
    benchmark::DoNotOptimize(run);
  }
}
BENCHMARK(bm_flsim_rounds)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
