#pragma once

#include <vector>

#include "iomarket/rng.hpp"
#include "iomarket/types.hpp"

namespace iomarket::flsim {

// Logistic regression over d features; w has d+1 entries, the last being the
// intercept. Stands in for each provider's model on a synthetic task.
struct ToyModel {
  int d = 0;
  std::vector<double> w;  // length d+1

  static ToyModel zeros(int d);
  static ToyModel random_init(int d, double stddev, Rng& rng);
};

struct Dataset {
  int d = 0;
  std::vector<double> x;  // row-major, size() * d
  std::vector<double> y;  // labels in {0, 1}

  int size() const { return d > 0 ? static_cast<int>(y.size()) : 0; }
};

// Two unit-variance Gaussian blobs whose means sit `separation` apart along
// the all-ones direction; labels drawn 1 with probability class1_prob.
Dataset synth_dataset(int d, int n_samples, double separation, double class1_prob, Rng& rng);

double predict_prob(const ToyModel& model, const double* features);
std::vector<double> predict(const ToyModel& model, const Dataset& ds);
double mean_logloss(const ToyModel& model, const Dataset& ds);
double accuracy(const ToyModel& model, const Dataset& ds);

// ceil(ln(1/theta)) epochs of per-sample SGD with momentum; sample order is
// reshuffled each epoch from the caller's stream.
ToyModel local_train(const ToyModel& model, const Dataset& data, double theta, double lr,
                     double momentum, Rng& rng);

// Data-size-weighted average of the local models.
ToyModel fedavg_aggregate(const ToyModel& global,
                          const std::vector<std::pair<ToyModel, double>>& locals);

enum class FlEventKind { TrainStart, ModelReceived, RoundDeadline };

const char* event_kind_name(FlEventKind kind);

struct FlEvent {
  FlEventKind kind = FlEventKind::TrainStart;
  double time = 0.0;  // simulated seconds
  int mu = -1;        // -1 on provider-level events (RoundDeadline)
  int msp = -1;
  int round = -1;
};

struct AccuracyPoint {
  int msp = -1;
  int round = -1;
  double time = 0.0;
  double acc = 0.0;
};

// Per-run federated state: one global model and one balanced holdout set per
// provider. User data distributions live in cfg.fl.
struct FlSetup {
  std::vector<ToyModel> global;   // per provider
  std::vector<Dataset> holdout;   // per provider
};

FlSetup make_fl_setup(const TradingConfig& cfg, Rng& rng);

// Data potential value per pair: squared error of the provider's current
// model on a probe batch from the user's distribution.
Mat compute_initial_omega(const TradingConfig& cfg, const FlSetup& setup, Rng& rng);

// Samples a user contributes per round to provider n: x * tau_n cycles-
// equivalent divided by cycles_per_sample, floored, at least 1.
int samples_per_round(const TradingConfig& cfg, int m, int n);

struct FlRunResult {
  std::vector<FlEvent> events;  // time-ordered
  std::vector<AccuracyPoint> accuracy;
  std::vector<std::vector<double>> acc_by_round;  // [provider][round]
  std::vector<ToyModel> final_models;
  std::vector<double> time_to_target;  // per provider; +inf when unreached
};

// Synchronous FedAvg rounds for every provider, timed by the allocation:
// round r trains at r*tau on data collected during round r-1, models arrive
// at r*tau + T_c + T_t, aggregation and evaluation happen at (r+1)*tau.
FlRunResult run_synchronous_rounds(const TradingConfig& cfg, const ChannelState& ch,
                                   const FlSetup& setup, const Allocation& alloc, Rng rng);

// Exact piecewise-linear average age over [0, horizon] per pair, replayed
// from the event log (age resets to now - train_start at each reception).
Mat aoi_timeline(const std::vector<FlEvent>& events, double horizon, int M, int N);

}  // namespace iomarket::flsim
