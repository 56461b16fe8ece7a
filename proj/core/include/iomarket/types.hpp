#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace iomarket {

// Minimal dense row-major matrix of doubles; all market quantities are small
// (M users x N providers), so no linear-algebra library is needed here.
struct Mat {
  int rows = 0;
  int cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, fill) {}

  double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  bool same_shape(const Mat& o) const { return rows == o.rows && cols == o.cols; }
  bool operator==(const Mat& o) const { return rows == o.rows && cols == o.cols && v == o.v; }
};

// Metaverse user (follower). Resources and costs are per device.
struct MuProfile {
  double f_max = 0.0;   // total compute budget (cycles/s)
  double B_max = 0.0;   // total bandwidth budget (Hz of capacity-equivalent)
  double c_f = 0.0;     // unit compute cost (currency per cycle/s per accuracy-round)
  double c_B = 0.0;     // unit bandwidth cost (currency per Hz)
  double x = 0.0;       // data collection rate (cycles-equivalent samples/s)
  double theta = 0.0;   // local training loss tolerance, in (0,1); smaller = more accurate
  double S = 0.0;       // compute reserved for the device's own baseline services (cycles)
  double T_req = 0.0;   // latency requirement for those baseline services (s)
  double p_tx = 0.0;    // transmit power (W); kept for completeness of the radio budget
};

// Metaverse service provider (leader). One trading task per provider.
struct MspProfile {
  double tau = 0.0;      // model update round length / deadline (s)
  double b = 0.0;        // model payload size (bits)
  double mu = 0.0;       // profit conversion factor on aggregate model value
  double epsilon = 0.0;  // contribution scale factor
  double eta = 0.0;      // diminishing-returns rate inside the contribution log
  double p_min = 0.0;    // price search lower bound (currency per unit value)
  double p_max = 0.0;    // price search upper bound
};

enum class ChannelMode { Static, Dynamic };

// Realized uplink SINR per (user, provider) pair, in linear scale.
struct ChannelState {
  Mat sinr;  // M x N, linear (not dB)
  ChannelMode mode = ChannelMode::Static;
};

// Price matrix posted by the leaders: N x M (provider-major).
struct PriceMatrix {
  Mat p;  // p.at(n, m) = price provider n posts to user m

  PriceMatrix() = default;
  PriceMatrix(int n, int m, double fill = 0.0) : p(n, m, fill) {}

  std::vector<double> mu_prices(int m) const {
    std::vector<double> row(static_cast<std::size_t>(p.rows));
    for (int n = 0; n < p.rows; ++n) row[n] = p.at(n, m);
    return row;
  }
};

// Resource allocation chosen by the followers: M x N matrices.
struct Allocation {
  Mat f;                                      // compute (cycles/s) per pair
  Mat B;                                      // bandwidth (Hz) per pair
  std::vector<std::vector<bool>> participating;  // true when the pair trades

  Allocation() = default;
  Allocation(int m, int n)
      : f(m, n), B(m, n), participating(static_cast<std::size_t>(m), std::vector<bool>(static_cast<std::size_t>(n), false)) {}
};

// Per-run flsim knobs (toy synthetic federated task).
struct FlConfig {
  int d = 8;                        // feature dimension
  double separation = 4.0;          // distance between class means (unit-variance blobs)
  double cycles_per_sample = 1e6;   // converts cycles-equivalent data rate to sample counts
  int holdout_n = 2000;             // balanced held-out set size per provider
  double sgd_lr = 0.001;            // local SGD learning rate
  double sgd_momentum = 0.9;        // local SGD momentum
  double target_accuracy = 0.9;     // time-to-target threshold used in comparisons
  std::vector<double> class1_prob;  // per-user class skew; defaults spread around 0.5
};

// Full trading instance. Everything the solvers need is in here plus a
// sampled ChannelState.
struct TradingConfig {
  int M = 0;                      // number of users
  int N = 0;                      // number of providers
  double T = 0.0;                 // service duration horizon (s)
  std::uint64_t seed = 0;         // master seed for sampling and simulation
  double sinr_db_lo = 0.0;        // channel draw range (dB)
  double sinr_db_hi = 0.0;
  ChannelMode channel_mode = ChannelMode::Static;
  std::vector<MuProfile> mus;     // size M
  std::vector<MspProfile> msps;   // size N
  Mat omega;                      // M x N potential value of local data per pair
  Mat b_override;                 // M x N payload override (NaN = use msps[n].b)
  FlConfig fl;

  double payload(int m, int n) const;
};

struct ConfigIssue {
  std::string field;
  std::string reason;
};

// ---- Error types -----------------------------------------------------------
// Modules throw these instead of clamping or returning sentinel values.

class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

class EmptyDataset : public DomainError {
 public:
  EmptyDataset() : DomainError("dataset is empty") {}
};

class LengthMismatch : public DomainError {
 public:
  LengthMismatch() : DomainError("prediction/label lengths differ") {}
  explicit LengthMismatch(const std::string& what) : DomainError(what) {}
};

class NegativeAge : public DomainError {
 public:
  NegativeAge() : DomainError("generation time is in the future (t < s)") {}
};

class InvalidConfig : public std::runtime_error {
 public:
  explicit InvalidConfig(std::vector<ConfigIssue> issues)
      : std::runtime_error(format(issues)), issues_(std::move(issues)) {}

  const std::vector<ConfigIssue>& issues() const { return issues_; }

 private:
  static std::string format(const std::vector<ConfigIssue>& issues) {
    std::string msg = "invalid config:";
    for (const auto& issue : issues) msg += " [" + issue.field + ": " + issue.reason + "]";
    return msg;
  }

  std::vector<ConfigIssue> issues_;
};

class InfeasibleAllocation : public std::runtime_error {
 public:
  explicit InfeasibleAllocation(const std::string& constraint)
      : std::runtime_error("allocation violates " + constraint), constraint_(constraint) {}

  const std::string& constraint() const { return constraint_; }

 private:
  std::string constraint_;
};

class NoFeasiblePoint : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConcavityViolation : public std::runtime_error {
 public:
  ConcavityViolation(const std::string& objective, double eigenvalue)
      : std::runtime_error("objective " + objective + " is not concave: max Hessian eigenvalue " +
                           std::to_string(eigenvalue)),
        eigenvalue_(eigenvalue) {}

  double eigenvalue() const { return eigenvalue_; }

 private:
  double eigenvalue_;
};

class DeadlineViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyRound : public std::runtime_error {
 public:
  EmptyRound() : std::runtime_error("aggregation round has no participants") {}
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace iomarket
