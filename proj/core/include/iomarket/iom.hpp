#pragma once

#include <span>

#include "iomarket/types.hpp"

namespace iomarket::iom {

// Immersion-of-Metaverse metric: a traded model's worth to a provider is the
// predicted contribution of the user's data, discounted by how stale the
// update is relative to the provider's round deadline.
//
//   V = I * (tau - avg_aoi),  avg_aoi = tau/2 + T_c + T_t
//
// V <= 0 means the pair should not trade; callers are expected to treat that
// as non-participation, not to clamp it away.

// Mean squared error between probabilistic predictions and binary labels;
// measures how much the provider's current model still has to learn from
// this user's data.
double potential_value(std::span<const double> predictions, std::span<const double> labels);

// Predicted model contribution:
//   I = omega * epsilon * ln(1 + eta * floor(T/tau) * x*tau) / theta
// floor(T/tau) counts the rounds that fit in the horizon; x*tau is the data
// collected per round.
double contribution_prediction(double omega, double theta, double x, double tau, double T,
                               double epsilon, double eta);

// Local training time to reach loss tolerance theta: T_c = ln(1/theta) * x*tau / f.
double local_training_time(double theta, double x, double tau, double f);

// Upload time of a b-bit model over bandwidth B at linear SINR: T_t = b / (B * log2(1+sinr)).
double upload_time(double b, double B, double sinr);

// Instantaneous age of information at time t for freshest generation time s.
double instantaneous_aoi(double t, double s);

// Long-run average age under synchronous tau-cycles: tau/2 + T_c + T_t.
double average_aoi(double tau, double T_c, double T_t);

// The IoM value itself.
double iom_value(double I, double tau, double avg_aoi);

// All pieces of the metric evaluated for pair (m, n) at allocation (f, B).
struct IomBreakdown {
  double omega = 0.0;
  double I = 0.0;
  double T_c = 0.0;
  double T_t = 0.0;
  double avg_aoi = 0.0;
  double V = 0.0;
};

IomBreakdown pair_breakdown(const TradingConfig& cfg, const ChannelState& ch, int m, int n,
                            double f, double B);

}  // namespace iomarket::iom
