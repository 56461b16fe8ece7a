#include "iomarket/flsim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <tuple>

#include "iomarket/iom.hpp"

namespace iomarket::flsim {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

}  // namespace

ToyModel ToyModel::zeros(int d) {
  ToyModel m;
  m.d = d;
  m.w.assign(static_cast<std::size_t>(d) + 1, 0.0);
  return m;
}

ToyModel ToyModel::random_init(int d, double stddev, Rng& rng) {
  ToyModel m = zeros(d);
  for (double& wi : m.w) wi = stddev * rng.normal();
  return m;
}

Dataset synth_dataset(int d, int n_samples, double separation, double class1_prob, Rng& rng) {
  if (d < 2) throw DomainError("synth_dataset: d must be >= 2");
  if (separation < 0.0) throw DomainError("synth_dataset: separation must be >= 0");
  if (!(class1_prob >= 0.0 && class1_prob <= 1.0))
    throw DomainError("synth_dataset: class1_prob must lie in [0, 1]");
  Dataset ds;
  ds.d = d;
  ds.x.reserve(static_cast<std::size_t>(n_samples) * static_cast<std::size_t>(d));
  ds.y.reserve(static_cast<std::size_t>(n_samples));
  // Class means sit +-separation/2 along the unit all-ones direction.
  const double off = 0.5 * separation / std::sqrt(static_cast<double>(d));
  for (int i = 0; i < n_samples; ++i) {
    const double label = rng.uniform01() < class1_prob ? 1.0 : 0.0;
    const double mean = label > 0.5 ? off : -off;
    for (int j = 0; j < d; ++j) ds.x.push_back(mean + rng.normal());
    ds.y.push_back(label);
  }
  return ds;
}

double predict_prob(const ToyModel& model, const double* features) {
  double z = model.w[static_cast<std::size_t>(model.d)];
  for (int j = 0; j < model.d; ++j) z += model.w[static_cast<std::size_t>(j)] * features[j];
  return sigmoid(z);
}

std::vector<double> predict(const ToyModel& model, const Dataset& ds) {
  if (model.d != ds.d) throw LengthMismatch("predict: model/data dimension");
  std::vector<double> out(static_cast<std::size_t>(ds.size()));
  for (int i = 0; i < ds.size(); ++i)
    out[static_cast<std::size_t>(i)] = predict_prob(model, ds.x.data() + static_cast<std::size_t>(i) * ds.d);
  return out;
}

double mean_logloss(const ToyModel& model, const Dataset& ds) {
  if (ds.size() == 0) throw EmptyDataset();
  double total = 0.0;
  for (int i = 0; i < ds.size(); ++i) {
    const double p = predict_prob(model, ds.x.data() + static_cast<std::size_t>(i) * ds.d);
    const double y = ds.y[static_cast<std::size_t>(i)];
    const double eps = 1e-12;
    total += -(y * std::log(p + eps) + (1.0 - y) * std::log(1.0 - p + eps));
  }
  return total / ds.size();
}

double accuracy(const ToyModel& model, const Dataset& ds) {
  if (ds.size() == 0) throw EmptyDataset();
  int hits = 0;
  for (int i = 0; i < ds.size(); ++i) {
    const double p = predict_prob(model, ds.x.data() + static_cast<std::size_t>(i) * ds.d);
    const double pred = p >= 0.5 ? 1.0 : 0.0;
    if (pred == ds.y[static_cast<std::size_t>(i)]) ++hits;
  }
  return static_cast<double>(hits) / ds.size();
}

ToyModel local_train(const ToyModel& model, const Dataset& data, double theta, double lr,
                     double momentum, Rng& rng) {
  if (!(theta > 0.0 && theta < 1.0)) throw DomainError("local_train: theta must lie in (0, 1)");
  if (model.d != data.d) throw LengthMismatch("local_train: model/data dimension");
  const int epochs = static_cast<int>(std::ceil(std::log(1.0 / theta)));
  ToyModel out = model;
  if (data.size() == 0 || epochs == 0) return out;
  std::vector<double> vel(out.w.size(), 0.0);
  std::vector<std::size_t> order(static_cast<std::size_t>(data.size()));
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int e = 0; e < epochs; ++e) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t idx : order) {
      const double* xi = data.x.data() + idx * static_cast<std::size_t>(data.d);
      const double err = predict_prob(out, xi) - data.y[idx];
      for (int j = 0; j < data.d; ++j) {
        vel[static_cast<std::size_t>(j)] = momentum * vel[static_cast<std::size_t>(j)] + err * xi[j];
        out.w[static_cast<std::size_t>(j)] -= lr * vel[static_cast<std::size_t>(j)];
      }
      vel[static_cast<std::size_t>(data.d)] = momentum * vel[static_cast<std::size_t>(data.d)] + err;
      out.w[static_cast<std::size_t>(data.d)] -= lr * vel[static_cast<std::size_t>(data.d)];
    }
  }
  return out;
}

ToyModel fedavg_aggregate(const ToyModel& global,
                          const std::vector<std::pair<ToyModel, double>>& locals) {
  if (locals.empty()) throw EmptyRound();
  double total = 0.0;
  for (const auto& [model, size] : locals) {
    if (size <= 0.0) throw DomainError("fedavg_aggregate: data sizes must be positive");
    if (model.d != global.d) throw LengthMismatch("fedavg_aggregate: model dimension");
    total += size;
  }
  ToyModel out = ToyModel::zeros(global.d);
  for (const auto& [model, size] : locals)
    for (std::size_t j = 0; j < out.w.size(); ++j) out.w[j] += size / total * model.w[j];
  return out;
}

const char* event_kind_name(FlEventKind kind) {
  switch (kind) {
    case FlEventKind::TrainStart: return "train_start";
    case FlEventKind::ModelReceived: return "model_received";
    case FlEventKind::RoundDeadline: return "round_deadline";
  }
  return "unknown";
}

FlSetup make_fl_setup(const TradingConfig& cfg, Rng& rng) {
  FlSetup setup;
  setup.global.reserve(static_cast<std::size_t>(cfg.N));
  setup.holdout.reserve(static_cast<std::size_t>(cfg.N));
  for (int n = 0; n < cfg.N; ++n) {
    Rng model_rng = rng.child(100 + static_cast<std::uint64_t>(n));
    Rng holdout_rng = rng.child(200 + static_cast<std::uint64_t>(n));
    setup.global.push_back(ToyModel::random_init(cfg.fl.d, 0.5, model_rng));
    setup.holdout.push_back(
        synth_dataset(cfg.fl.d, cfg.fl.holdout_n, cfg.fl.separation, 0.5, holdout_rng));
  }
  return setup;
}

int samples_per_round(const TradingConfig& cfg, int m, int n) {
  const double cyc = cfg.mus[static_cast<std::size_t>(m)].x * cfg.msps[static_cast<std::size_t>(n)].tau;
  return std::max(1, static_cast<int>(std::floor(cyc / cfg.fl.cycles_per_sample)));
}

Mat compute_initial_omega(const TradingConfig& cfg, const FlSetup& setup, Rng& rng) {
  Mat omega(cfg.M, cfg.N);
  for (int m = 0; m < cfg.M; ++m) {
    const double skew = cfg.fl.class1_prob[static_cast<std::size_t>(m)];
    for (int n = 0; n < cfg.N; ++n) {
      Rng probe_rng = rng.child(1000 + static_cast<std::uint64_t>(m) * static_cast<std::uint64_t>(cfg.N) +
                                static_cast<std::uint64_t>(n));
      const Dataset probe =
          synth_dataset(cfg.fl.d, samples_per_round(cfg, m, n), cfg.fl.separation, skew, probe_rng);
      omega.at(m, n) = iom::potential_value(predict(setup.global[static_cast<std::size_t>(n)], probe),
                                            probe.y);
    }
  }
  return omega;
}

FlRunResult run_synchronous_rounds(const TradingConfig& cfg, const ChannelState& ch,
                                   const FlSetup& setup, const Allocation& alloc, Rng rng) {
  FlRunResult result;
  result.final_models = setup.global;
  result.acc_by_round.assign(static_cast<std::size_t>(cfg.N), {});
  result.time_to_target.assign(static_cast<std::size_t>(cfg.N),
                               std::numeric_limits<double>::infinity());

  for (int n = 0; n < cfg.N; ++n) {
    const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
    const int rounds = static_cast<int>(std::floor(cfg.T / msp.tau));
    ToyModel& global = result.final_models[static_cast<std::size_t>(n)];
    result.acc_by_round[static_cast<std::size_t>(n)].reserve(static_cast<std::size_t>(rounds));
    for (int r = 0; r < rounds; ++r) {
      const double t0 = r * msp.tau;
      std::vector<std::pair<ToyModel, double>> locals;
      for (int m = 0; m < cfg.M; ++m) {
        if (!alloc.participating[static_cast<std::size_t>(m)][static_cast<std::size_t>(n)]) continue;
        const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
        const double T_c = iom::local_training_time(mu.theta, mu.x, msp.tau, alloc.f.at(m, n));
        const double T_t = iom::upload_time(cfg.payload(m, n), alloc.B.at(m, n), ch.sinr.at(m, n));
        if (T_c + T_t > msp.tau * (1.0 + 1e-9))
          throw DeadlineViolation("pair (" + std::to_string(m) + ", " + std::to_string(n) +
                                  ") misses the round deadline: " + std::to_string(T_c + T_t) +
                                  " s > tau = " + std::to_string(msp.tau) + " s");
        const int spr = samples_per_round(cfg, m, n);
        const std::uint64_t tag =
            (static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(cfg.M) +
             static_cast<std::uint64_t>(m)) *
                static_cast<std::uint64_t>(cfg.N) +
            static_cast<std::uint64_t>(n);
        Rng data_rng = rng.child(2 * tag);
        Rng train_rng = rng.child(2 * tag + 1);
        const Dataset data = synth_dataset(cfg.fl.d, spr, cfg.fl.separation,
                                           cfg.fl.class1_prob[static_cast<std::size_t>(m)], data_rng);
        result.events.push_back({FlEventKind::TrainStart, t0, m, n, r});
        ToyModel local = local_train(global, data, mu.theta, cfg.fl.sgd_lr, cfg.fl.sgd_momentum,
                                     train_rng);
        result.events.push_back({FlEventKind::ModelReceived, t0 + T_c + T_t, m, n, r});
        locals.emplace_back(std::move(local), static_cast<double>(spr));
      }
      result.events.push_back({FlEventKind::RoundDeadline, (r + 1) * msp.tau, -1, n, r});
      if (!locals.empty()) global = fedavg_aggregate(global, locals);
      const double acc = accuracy(global, setup.holdout[static_cast<std::size_t>(n)]);
      result.accuracy.push_back({n, r, (r + 1) * msp.tau, acc});
      result.acc_by_round[static_cast<std::size_t>(n)].push_back(acc);
      if (std::isinf(result.time_to_target[static_cast<std::size_t>(n)]) &&
          acc >= cfg.fl.target_accuracy)
        result.time_to_target[static_cast<std::size_t>(n)] = (r + 1) * msp.tau;
    }
  }

  std::sort(result.events.begin(), result.events.end(), [](const FlEvent& a, const FlEvent& b) {
    return std::tuple(a.time, a.msp, a.mu, static_cast<int>(a.kind), a.round) <
           std::tuple(b.time, b.msp, b.mu, static_cast<int>(b.kind), b.round);
  });
  return result;
}

Mat aoi_timeline(const std::vector<FlEvent>& events, double horizon, int M, int N) {
  if (horizon <= 0.0) throw DomainError("aoi_timeline: horizon must be positive");
  Mat avg(M, N);
  std::map<std::tuple<int, int, int>, double> train_start;
  for (const FlEvent& e : events)
    if (e.kind == FlEventKind::TrainStart) train_start[{e.mu, e.msp, e.round}] = e.time;

  // Per-pair sweep: age starts at 0, grows at unit rate, and resets to
  // (reception time - matching train start) at every reception.
  Mat area(M, N);
  Mat last_t(M, N);
  Mat last_age(M, N);
  for (const FlEvent& e : events) {
    if (e.kind != FlEventKind::ModelReceived || e.time > horizon) continue;
    const auto it = train_start.find({e.mu, e.msp, e.round});
    if (it == train_start.end())
      throw DomainError("aoi_timeline: reception without matching train start");
    const double lt = last_t.at(e.mu, e.msp);
    const double la = last_age.at(e.mu, e.msp);
    const double grown = la + (e.time - lt);
    area.at(e.mu, e.msp) += 0.5 * (la + grown) * (e.time - lt);
    last_t.at(e.mu, e.msp) = e.time;
    last_age.at(e.mu, e.msp) = e.time - it->second;
  }
  for (int m = 0; m < M; ++m)
    for (int n = 0; n < N; ++n) {
      const double lt = last_t.at(m, n);
      const double la = last_age.at(m, n);
      const double grown = la + (horizon - lt);
      avg.at(m, n) = (area.at(m, n) + 0.5 * (la + grown) * (horizon - lt)) / horizon;
    }
  return avg;
}

}  // namespace iomarket::flsim
