#include "iomarket/iom.hpp"

#include <cmath>

namespace iomarket::iom {

double potential_value(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) throw LengthMismatch();
  if (predictions.empty()) throw EmptyDataset();
  double sum = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - labels[i];
    sum += e * e;
  }
  return sum / static_cast<double>(predictions.size());
}

double contribution_prediction(double omega, double theta, double x, double tau, double T,
                               double epsilon, double eta) {
  if (!(theta > 0.0 && theta < 1.0)) throw DomainError("contribution_prediction: theta outside (0,1)");
  if (!(tau > 0.0)) throw DomainError("contribution_prediction: tau must be positive");
  if (tau > T) throw DomainError("contribution_prediction: no round fits in the horizon (tau > T)");
  if (omega < 0.0) throw DomainError("contribution_prediction: omega must be nonnegative");
  if (x < 0.0 || epsilon < 0.0 || eta < 0.0)
    throw DomainError("contribution_prediction: x, epsilon, eta must be nonnegative");
  const double rounds = std::floor(T / tau);
  return omega * epsilon * std::log(1.0 + eta * rounds * x * tau) / theta;
}

double local_training_time(double theta, double x, double tau, double f) {
  if (!(theta > 0.0 && theta < 1.0)) throw DomainError("local_training_time: theta outside (0,1)");
  if (!(f > 0.0)) throw DomainError("local_training_time: compute must be positive");
  if (!(x > 0.0) || !(tau > 0.0)) throw DomainError("local_training_time: x and tau must be positive");
  return std::log(1.0 / theta) * x * tau / f;
}

double upload_time(double b, double B, double sinr) {
  if (!(b > 0.0)) throw DomainError("upload_time: payload must be positive");
  if (!(B > 0.0)) throw DomainError("upload_time: bandwidth must be positive");
  if (!(sinr > 0.0)) throw DomainError("upload_time: SINR must be positive");
  return b / (B * std::log2(1.0 + sinr));
}

double instantaneous_aoi(double t, double s) {
  if (t < s) throw NegativeAge();
  return t - s;
}

double average_aoi(double tau, double T_c, double T_t) {
  if (!(tau > 0.0)) throw DomainError("average_aoi: tau must be positive");
  if (T_c < 0.0 || T_t < 0.0) throw DomainError("average_aoi: times must be nonnegative");
  return tau / 2.0 + T_c + T_t;
}

double iom_value(double I, double tau, double avg_aoi) {
  return I * (tau - avg_aoi);
}

IomBreakdown pair_breakdown(const TradingConfig& cfg, const ChannelState& ch, int m, int n,
                            double f, double B) {
  const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
  const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
  IomBreakdown out;
  out.omega = cfg.omega.at(m, n);
  out.I = contribution_prediction(out.omega, mu.theta, mu.x, msp.tau, cfg.T, msp.epsilon, msp.eta);
  out.T_c = local_training_time(mu.theta, mu.x, msp.tau, f);
  out.T_t = upload_time(cfg.payload(m, n), B, ch.sinr.at(m, n));
  out.avg_aoi = average_aoi(msp.tau, out.T_c, out.T_t);
  out.V = iom_value(out.I, msp.tau, out.avg_aoi);
  return out;
}

}  // namespace iomarket::iom
