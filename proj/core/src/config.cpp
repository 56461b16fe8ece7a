#include "iomarket/config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace iomarket {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

// Raw key/value view of the file: duplicate keys are allowed, last one wins,
// which is what lets --override entries simply append to the canonical text.
class KvMap {
 public:
  void insert(const std::string& key, const std::string& value) { map_[key] = value; }

  bool has(const std::string& key) const { return map_.count(key) != 0; }

  std::string take_string(const std::string& key) {
    auto it = map_.find(key);
    if (it == map_.end()) throw IoError("config: missing required key '" + key + "'");
    consumed_.insert(key);
    return it->second;
  }

  double take_double(const std::string& key) { return parse_double(key, take_string(key)); }

  double take_double_or(const std::string& key, double fallback) {
    if (!has(key)) return fallback;
    return take_double(key);
  }

  long long take_int(const std::string& key) {
    const std::string s = take_string(key);
    char* end = nullptr;
    const long long value = std::strtoll(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0') throw IoError("config: key '" + key + "' is not an integer: '" + s + "'");
    return value;
  }

  long long take_int_or(const std::string& key, long long fallback) {
    if (!has(key)) return fallback;
    return take_int(key);
  }

  std::uint64_t take_u64(const std::string& key) {
    const std::string s = take_string(key);
    char* end = nullptr;
    const unsigned long long value = std::strtoull(s.c_str(), &end, 10);
    if (end == s.c_str() || *end != '\0' || s.find('-') != std::string::npos)
      throw IoError("config: key '" + key + "' is not an unsigned integer: '" + s + "'");
    return value;
  }

  void check_all_consumed() const {
    std::string unknown;
    for (const auto& [key, value] : map_) {
      (void)value;
      if (!consumed_.count(key)) unknown += (unknown.empty() ? "" : ", ") + key;
    }
    if (!unknown.empty()) throw IoError("config: unknown key(s): " + unknown);
  }

 private:
  double parse_double(const std::string& key, const std::string& s) const {
    char* end = nullptr;
    const double value = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') throw IoError("config: key '" + key + "' is not a number: '" + s + "'");
    return value;
  }

  std::map<std::string, std::string> map_;
  std::set<std::string> consumed_;
};

KvMap tokenize(const std::string& text) {
  KvMap kv;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw IoError("config: line " + std::to_string(lineno) + " is not 'key = value': '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty() || value.empty())
      throw IoError("config: line " + std::to_string(lineno) + " has an empty key or value");
    kv.insert(key, value);
  }
  return kv;
}

std::string pair_key(const std::string& prefix, int a, int b) {
  return prefix + "." + std::to_string(a) + "." + std::to_string(b);
}

}  // namespace

double TradingConfig::payload(int m, int n) const {
  if (b_override.rows == M && b_override.cols == N) {
    const double o = b_override.at(m, n);
    if (!std::isnan(o)) return o;
  }
  return msps[static_cast<std::size_t>(n)].b;
}

TradingConfig parse_config(const std::string& text) {
  KvMap kv = tokenize(text);
  TradingConfig cfg;

  cfg.M = static_cast<int>(kv.take_int("market.M"));
  cfg.N = static_cast<int>(kv.take_int("market.N"));
  cfg.T = kv.take_double("market.T");
  cfg.seed = kv.take_u64("market.seed");
  cfg.sinr_db_lo = kv.take_double("market.sinr_db_lo");
  cfg.sinr_db_hi = kv.take_double("market.sinr_db_hi");
  const std::string mode = kv.take_string("market.channel_mode");
  if (mode == "static")
    cfg.channel_mode = ChannelMode::Static;
  else if (mode == "dynamic")
    cfg.channel_mode = ChannelMode::Dynamic;
  else
    throw IoError("config: market.channel_mode must be 'static' or 'dynamic', got '" + mode + "'");

  if (cfg.M < 0 || cfg.N < 0 || cfg.M > 10000 || cfg.N > 10000)
    throw IoError("config: market.M/market.N out of supported range");

  cfg.mus.resize(static_cast<std::size_t>(cfg.M));
  for (int m = 0; m < cfg.M; ++m) {
    const std::string p = "mu." + std::to_string(m) + ".";
    MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
    mu.f_max = kv.take_double(p + "f_max");
    mu.B_max = kv.take_double(p + "B_max");
    mu.c_f = kv.take_double(p + "c_f");
    mu.c_B = kv.take_double(p + "c_B");
    mu.x = kv.take_double(p + "x");
    mu.theta = kv.take_double(p + "theta");
    mu.S = kv.take_double(p + "S");
    mu.T_req = kv.take_double(p + "T_req");
    mu.p_tx = kv.take_double(p + "p_tx");
  }

  cfg.msps.resize(static_cast<std::size_t>(cfg.N));
  for (int n = 0; n < cfg.N; ++n) {
    const std::string p = "msp." + std::to_string(n) + ".";
    MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
    msp.tau = kv.take_double(p + "tau");
    msp.b = kv.take_double(p + "b");
    msp.mu = kv.take_double(p + "mu");
    msp.epsilon = kv.take_double(p + "epsilon");
    msp.eta = kv.take_double(p + "eta");
    msp.p_min = kv.take_double(p + "p_min");
    msp.p_max = kv.take_double(p + "p_max");
  }

  cfg.omega = Mat(cfg.M, cfg.N, 0.25);
  for (int m = 0; m < cfg.M; ++m)
    for (int n = 0; n < cfg.N; ++n)
      if (kv.has(pair_key("omega", m, n))) cfg.omega.at(m, n) = kv.take_double(pair_key("omega", m, n));

  cfg.b_override = Mat(cfg.M, cfg.N, std::nan(""));
  for (int m = 0; m < cfg.M; ++m)
    for (int n = 0; n < cfg.N; ++n)
      if (kv.has(pair_key("b_override", m, n)))
        cfg.b_override.at(m, n) = kv.take_double(pair_key("b_override", m, n));

  FlConfig fl;
  fl.d = static_cast<int>(kv.take_int_or("fl.d", fl.d));
  fl.separation = kv.take_double_or("fl.separation", fl.separation);
  fl.cycles_per_sample = kv.take_double_or("fl.cycles_per_sample", fl.cycles_per_sample);
  fl.holdout_n = static_cast<int>(kv.take_int_or("fl.holdout_n", fl.holdout_n));
  fl.sgd_lr = kv.take_double_or("fl.sgd_lr", fl.sgd_lr);
  fl.sgd_momentum = kv.take_double_or("fl.sgd_momentum", fl.sgd_momentum);
  fl.target_accuracy = kv.take_double_or("fl.target_accuracy", fl.target_accuracy);
  fl.class1_prob.resize(static_cast<std::size_t>(cfg.M));
  for (int m = 0; m < cfg.M; ++m) {
    const double spread = cfg.M > 1 ? 0.2 + 0.6 * m / (cfg.M - 1) : 0.5;
    fl.class1_prob[static_cast<std::size_t>(m)] =
        kv.take_double_or("fl.class1_prob." + std::to_string(m), spread);
  }
  cfg.fl = fl;

  kv.check_all_consumed();
  return cfg;
}

TradingConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string serialize_config(const TradingConfig& cfg) {
  std::ostringstream out;
  out << "market.M = " << cfg.M << "\n";
  out << "market.N = " << cfg.N << "\n";
  out << "market.T = " << fmt_double(cfg.T) << "\n";
  out << "market.seed = " << cfg.seed << "\n";
  out << "market.sinr_db_lo = " << fmt_double(cfg.sinr_db_lo) << "\n";
  out << "market.sinr_db_hi = " << fmt_double(cfg.sinr_db_hi) << "\n";
  out << "market.channel_mode = " << (cfg.channel_mode == ChannelMode::Static ? "static" : "dynamic") << "\n";
  for (int m = 0; m < cfg.M; ++m) {
    const MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
    const std::string p = "mu." + std::to_string(m) + ".";
    out << p << "f_max = " << fmt_double(mu.f_max) << "\n";
    out << p << "B_max = " << fmt_double(mu.B_max) << "\n";
    out << p << "c_f = " << fmt_double(mu.c_f) << "\n";
    out << p << "c_B = " << fmt_double(mu.c_B) << "\n";
    out << p << "x = " << fmt_double(mu.x) << "\n";
    out << p << "theta = " << fmt_double(mu.theta) << "\n";
    out << p << "S = " << fmt_double(mu.S) << "\n";
    out << p << "T_req = " << fmt_double(mu.T_req) << "\n";
    out << p << "p_tx = " << fmt_double(mu.p_tx) << "\n";
  }
  for (int n = 0; n < cfg.N; ++n) {
    const MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
    const std::string p = "msp." + std::to_string(n) + ".";
    out << p << "tau = " << fmt_double(msp.tau) << "\n";
    out << p << "b = " << fmt_double(msp.b) << "\n";
    out << p << "mu = " << fmt_double(msp.mu) << "\n";
    out << p << "epsilon = " << fmt_double(msp.epsilon) << "\n";
    out << p << "eta = " << fmt_double(msp.eta) << "\n";
    out << p << "p_min = " << fmt_double(msp.p_min) << "\n";
    out << p << "p_max = " << fmt_double(msp.p_max) << "\n";
  }
  for (int m = 0; m < cfg.M; ++m)
    for (int n = 0; n < cfg.N; ++n)
      out << pair_key("omega", m, n) << " = " << fmt_double(cfg.omega.at(m, n)) << "\n";
  if (cfg.b_override.rows == cfg.M && cfg.b_override.cols == cfg.N) {
    for (int m = 0; m < cfg.M; ++m)
      for (int n = 0; n < cfg.N; ++n)
        if (!std::isnan(cfg.b_override.at(m, n)))
          out << pair_key("b_override", m, n) << " = " << fmt_double(cfg.b_override.at(m, n)) << "\n";
  }
  out << "fl.d = " << cfg.fl.d << "\n";
  out << "fl.separation = " << fmt_double(cfg.fl.separation) << "\n";
  out << "fl.cycles_per_sample = " << fmt_double(cfg.fl.cycles_per_sample) << "\n";
  out << "fl.holdout_n = " << cfg.fl.holdout_n << "\n";
  out << "fl.sgd_lr = " << fmt_double(cfg.fl.sgd_lr) << "\n";
  out << "fl.sgd_momentum = " << fmt_double(cfg.fl.sgd_momentum) << "\n";
  out << "fl.target_accuracy = " << fmt_double(cfg.fl.target_accuracy) << "\n";
  for (int m = 0; m < cfg.M && m < static_cast<int>(cfg.fl.class1_prob.size()); ++m)
    out << "fl.class1_prob." << m << " = " << fmt_double(cfg.fl.class1_prob[static_cast<std::size_t>(m)]) << "\n";
  return out.str();
}

std::vector<ConfigIssue> validate_config(const TradingConfig& cfg) {
  std::vector<ConfigIssue> issues;
  auto bad = [&issues](const std::string& field, const std::string& reason) {
    issues.push_back({field, reason});
  };

  if (cfg.M < 1) bad("market.M", "need at least one user");
  if (cfg.N < 1) bad("market.N", "need at least one provider");
  if (!(cfg.T > 0.0)) bad("market.T", "horizon must be positive");
  if (!(cfg.sinr_db_lo <= cfg.sinr_db_hi)) bad("market.sinr_db_lo", "SINR range is inverted");
  if (!std::isfinite(cfg.sinr_db_lo) || !std::isfinite(cfg.sinr_db_hi))
    bad("market.sinr_db_lo", "SINR range must be finite");

  if (static_cast<int>(cfg.mus.size()) != cfg.M) bad("mu", "profile count differs from market.M");
  if (static_cast<int>(cfg.msps.size()) != cfg.N) bad("msp", "profile count differs from market.N");

  for (std::size_t i = 0; i < cfg.mus.size(); ++i) {
    const MuProfile& mu = cfg.mus[i];
    const std::string p = "mu." + std::to_string(i) + ".";
    if (!(mu.f_max > 0.0)) bad(p + "f_max", "must be strictly positive");
    if (!(mu.B_max > 0.0)) bad(p + "B_max", "must be strictly positive");
    if (!(mu.c_f > 0.0)) bad(p + "c_f", "must be strictly positive");
    if (!(mu.c_B > 0.0)) bad(p + "c_B", "must be strictly positive");
    if (!(mu.x > 0.0)) bad(p + "x", "must be strictly positive");
    if (!(mu.theta > 0.0 && mu.theta < 1.0)) bad(p + "theta", "must lie strictly inside (0,1)");
    if (!(mu.S > 0.0)) bad(p + "S", "must be strictly positive");
    if (!(mu.T_req > 0.0)) bad(p + "T_req", "must be strictly positive");
    if (!(mu.p_tx > 0.0)) bad(p + "p_tx", "must be strictly positive");
    if (mu.f_max > 0.0 && mu.T_req > 0.0 && !(mu.S < mu.T_req * mu.f_max))
      bad(p + "S", "C3 infeasible: baseline services need S < T_req * f_max");
  }

  double tau_max = 0.0;
  for (std::size_t i = 0; i < cfg.msps.size(); ++i) {
    const MspProfile& msp = cfg.msps[i];
    const std::string p = "msp." + std::to_string(i) + ".";
    if (!(msp.tau > 0.0)) bad(p + "tau", "must be strictly positive");
    if (!(msp.b > 0.0)) bad(p + "b", "must be strictly positive");
    if (!(msp.mu > 0.0)) bad(p + "mu", "must be strictly positive");
    if (!(msp.epsilon > 0.0)) bad(p + "epsilon", "must be strictly positive");
    if (!(msp.eta > 0.0)) bad(p + "eta", "must be strictly positive");
    if (!(msp.p_min > 0.0)) bad(p + "p_min", "must be strictly positive");
    if (!(msp.p_min < msp.p_max)) bad(p + "p_max", "price interval is empty");
    tau_max = std::max(tau_max, msp.tau);
  }
  if (!cfg.msps.empty() && cfg.T > 0.0 && cfg.T < tau_max)
    bad("market.T", "horizon shorter than the longest round; no update fits");

  if (cfg.omega.rows != cfg.M || cfg.omega.cols != cfg.N) {
    bad("omega", "matrix shape must be M x N");
  } else {
    for (int m = 0; m < cfg.M; ++m)
      for (int n = 0; n < cfg.N; ++n) {
        const double w = cfg.omega.at(m, n);
        if (!(w >= 0.0 && w <= 1.0)) bad(pair_key("omega", m, n), "potential value must lie in [0,1]");
      }
  }
  if (cfg.b_override.rows != 0 && (cfg.b_override.rows != cfg.M || cfg.b_override.cols != cfg.N)) {
    bad("b_override", "matrix shape must be M x N when present");
  } else if (cfg.b_override.rows == cfg.M && cfg.b_override.cols == cfg.N) {
    for (int m = 0; m < cfg.M; ++m)
      for (int n = 0; n < cfg.N; ++n) {
        const double o = cfg.b_override.at(m, n);
        if (!std::isnan(o) && !(o > 0.0)) bad(pair_key("b_override", m, n), "payload must be positive");
      }
  }

  if (cfg.fl.d < 1) bad("fl.d", "need at least one feature");
  if (!(cfg.fl.separation > 0.0)) bad("fl.separation", "must be strictly positive");
  if (!(cfg.fl.cycles_per_sample > 0.0)) bad("fl.cycles_per_sample", "must be strictly positive");
  if (cfg.fl.holdout_n < 10) bad("fl.holdout_n", "held-out set too small to estimate accuracy");
  if (!(cfg.fl.sgd_lr > 0.0)) bad("fl.sgd_lr", "must be strictly positive");
  if (!(cfg.fl.sgd_momentum >= 0.0 && cfg.fl.sgd_momentum < 1.0)) bad("fl.sgd_momentum", "must lie in [0,1)");
  if (!(cfg.fl.target_accuracy > 0.0 && cfg.fl.target_accuracy < 1.0))
    bad("fl.target_accuracy", "must lie strictly inside (0,1)");
  if (static_cast<int>(cfg.fl.class1_prob.size()) != cfg.M) {
    bad("fl.class1_prob", "need one class skew entry per user");
  } else {
    for (int m = 0; m < cfg.M; ++m) {
      const double q = cfg.fl.class1_prob[static_cast<std::size_t>(m)];
      if (!(q > 0.0 && q < 1.0)) bad("fl.class1_prob." + std::to_string(m), "must lie strictly inside (0,1)");
    }
  }

  return issues;
}

void require_valid(const TradingConfig& cfg) {
  auto issues = validate_config(cfg);
  if (!issues.empty()) throw InvalidConfig(std::move(issues));
}

TradingConfig apply_overrides(const TradingConfig& cfg, const std::vector<std::string>& overrides) {
  std::string text = serialize_config(cfg);
  for (const auto& kv : overrides) {
    if (kv.find('=') == std::string::npos)
      throw IoError("override '" + kv + "' is not of the form key=value");
    text += kv + "\n";
  }
  return parse_config(text);
}

TradingConfig default_config(std::uint64_t seed, int M, int N) {
  if (M < 1 || N < 1) throw IoError("default_config: M and N must be at least 1");
  TradingConfig cfg;
  cfg.M = M;
  cfg.N = N;
  cfg.T = 30.0;
  cfg.seed = seed;
  cfg.sinr_db_lo = 0.0;
  cfg.sinr_db_hi = 10.0;
  cfg.channel_mode = ChannelMode::Static;

  Rng root(seed);
  Rng mu_rng = root.child(1);
  Rng msp_rng = root.child(2);
  Rng omega_rng = root.child(3);

  cfg.mus.resize(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    MuProfile& mu = cfg.mus[static_cast<std::size_t>(m)];
    mu.f_max = mu_rng.uniform(3e9, 5e9);
    mu.B_max = mu_rng.uniform(1e6, 4e6);
    // Unit costs low enough that decoupled optima overshoot the budgets:
    // the market then rations scarce compute/bandwidth instead of idling it.
    mu.c_f = mu_rng.uniform(6e-11, 1.1e-10);
    mu.c_B = mu_rng.uniform(8e-9, 1.5e-8);
    mu.x = mu_rng.uniform(1.5e8, 2.2e8);
    mu.theta = mu_rng.uniform(0.55, 0.75);
    mu.S = mu_rng.uniform(1e8, 3e8);
    mu.T_req = 1.0;
    mu.p_tx = 0.1;
  }

  cfg.msps.resize(static_cast<std::size_t>(N));
  for (int n = 0; n < N; ++n) {
    MspProfile& msp = cfg.msps[static_cast<std::size_t>(n)];
    msp.tau = msp_rng.uniform(4.0, 6.0);
    msp.b = msp_rng.uniform(5e5, 8e5);
    msp.mu = msp_rng.uniform(12.0, 26.0);
    msp.epsilon = 0.15;
    msp.eta = 1.0;
    msp.p_min = 1.0;
    msp.p_max = 2.5;
  }

  // Wide spread: heterogeneous data worth is what separates value-aware
  // allocation from volume- or uniform-weighted splits.
  cfg.omega = Mat(M, N);
  for (int m = 0; m < M; ++m)
    for (int n = 0; n < N; ++n) cfg.omega.at(m, n) = omega_rng.uniform(0.05, 0.9);

  cfg.b_override = Mat(M, N, std::nan(""));

  cfg.fl.class1_prob.resize(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m)
    cfg.fl.class1_prob[static_cast<std::size_t>(m)] = M > 1 ? 0.2 + 0.6 * m / (M - 1) : 0.5;

  return cfg;
}

std::uint64_t config_hash(const TradingConfig& cfg) {
  const std::string text = serialize_config(cfg);
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

ChannelState sample_channel(const TradingConfig& cfg, Rng& rng) {
  ChannelState ch;
  ch.mode = cfg.channel_mode;
  ch.sinr = Mat(cfg.M, cfg.N);
  for (int m = 0; m < cfg.M; ++m)
    for (int n = 0; n < cfg.N; ++n) {
      const double db = rng.uniform(cfg.sinr_db_lo, cfg.sinr_db_hi);
      ch.sinr.at(m, n) = std::pow(10.0, db / 10.0);
    }
  return ch;
}

}  // namespace iomarket
