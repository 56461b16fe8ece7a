#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "iomarket/config.hpp"
#include "iomarket/rng.hpp"
#include "iomarket/types.hpp"

using namespace iomarket;

TEST_CASE("rng reproducibility and stream independence") {
  Rng a(123), b(123);
  for (int i = 0; i < 200; ++i) CHECK(a.next_u64() == b.next_u64());

  // Child streams must not depend on how much the parent has been consumed.
  Rng c(123);
  Rng child_first = c.child(5);
  for (int i = 0; i < 37; ++i) c.uniform01();
  Rng child_second = c.child(5);
  for (int i = 0; i < 50; ++i) CHECK(child_first.next_u64() == child_second.next_u64());

  // Distinct tags give distinct streams.
  Rng d(123);
  Rng s1 = d.child(1), s2 = d.child(2);
  int equal = 0;
  for (int i = 0; i < 64; ++i) equal += s1.next_u64() == s2.next_u64();
  CHECK(equal == 0);
}

TEST_CASE("rng uniform and normal moments") {
  Rng rng(7);
  double mean = 0.0, var = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    mean += u;
  }
  mean /= n;
  CHECK(std::abs(mean - 0.5) < 0.01);

  double nm = 0.0;
  for (int i = 0; i < n; ++i) {
    const double z = rng.normal();
    nm += z;
    var += z * z;
  }
  nm /= n;
  var = var / n - nm * nm;
  CHECK(std::abs(nm) < 0.03);
  CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("channel samples follow the dB identities") {
  TradingConfig cfg = default_config(3);
  cfg.sinr_db_lo = 0.0;
  cfg.sinr_db_hi = 0.0;
  Rng rng(3);
  ChannelState ch = sample_channel(cfg, rng);
  for (double s : ch.sinr.v) CHECK(s == doctest::Approx(1.0));  // 0 dB

  cfg.sinr_db_lo = 10.0;
  cfg.sinr_db_hi = 10.0;
  Rng rng2(3);
  ch = sample_channel(cfg, rng2);
  for (double s : ch.sinr.v) CHECK(s == doctest::Approx(10.0));  // 10 dB

  cfg.sinr_db_lo = 0.0;
  cfg.sinr_db_hi = 10.0;
  Rng r1(42), r2(42);
  const ChannelState c1 = sample_channel(cfg, r1);
  const ChannelState c2 = sample_channel(cfg, r2);
  CHECK(c1.sinr == c2.sinr);  // same seed, identical draw
  for (double s : c1.sinr.v) {
    CHECK(s >= 1.0);
    CHECK(s <= 10.0);
  }
}

TEST_CASE("config round-trips bit-exactly") {
  const TradingConfig cfg = default_config(11);
  const std::string text = serialize_config(cfg);
  const TradingConfig back = parse_config(text);
  CHECK(serialize_config(back) == text);
  CHECK(config_hash(back) == config_hash(cfg));

  // Every numeric field survives, including ones with no short decimal form.
  CHECK(back.mus[0].c_f == cfg.mus[0].c_f);
  CHECK(back.msps[0].tau == cfg.msps[0].tau);
  CHECK(back.omega == cfg.omega);
  CHECK(back.seed == cfg.seed);
}

TEST_CASE("validation rejects out-of-domain configs") {
  TradingConfig cfg = default_config(5);
  CHECK(validate_config(cfg).empty());

  SUBCASE("theta outside (0,1)") {
    cfg.mus[0].theta = 1.2;
    const auto issues = validate_config(cfg);
    REQUIRE(!issues.empty());
    bool mentions_theta = false;
    for (const auto& i : issues)
      mentions_theta = mentions_theta || i.field.find("theta") != std::string::npos;
    CHECK(mentions_theta);
  }
  SUBCASE("baseline service leaves no compute headroom") {
    cfg.mus[0].S = cfg.mus[0].T_req * cfg.mus[0].f_max;
    const auto issues = validate_config(cfg);
    REQUIRE(!issues.empty());
    bool mentions_c3 = false;
    for (const auto& i : issues)
      mentions_c3 = mentions_c3 || (i.field + i.reason).find("C3") != std::string::npos;
    CHECK(mentions_c3);
  }
  SUBCASE("horizon shorter than one round") {
    cfg.T = 0.1 * cfg.msps[0].tau;
    CHECK(!validate_config(cfg).empty());
  }
  SUBCASE("require_valid throws with the issue list") {
    cfg.mus[0].theta = -1.0;
    CHECK_THROWS_AS(require_valid(cfg), InvalidConfig);
  }
}

TEST_CASE("overrides apply before validation") {
  const TradingConfig base = default_config(9);
  const TradingConfig cfg = apply_overrides(base, {"market.T=64", "mu.0.theta=0.6"});
  CHECK(cfg.T == 64.0);
  CHECK(cfg.mus[0].theta == 0.6);
  CHECK_THROWS_AS(apply_overrides(base, {"no_such_key=1"}), IoError);
}

TEST_CASE("default instance matches the published ranges") {
  std::set<std::uint64_t> hashes;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    const TradingConfig cfg = default_config(seed);
    CHECK(cfg.M == 5);
    CHECK(cfg.N == 3);
    for (const auto& mu : cfg.mus) {
      CHECK(mu.f_max >= 3e9);
      CHECK(mu.f_max <= 5e9);
      CHECK(mu.B_max >= 1e6);
      CHECK(mu.B_max <= 4e6);
      CHECK(mu.theta > 0.0);
      CHECK(mu.theta < 1.0);
    }
    CHECK(cfg.sinr_db_lo == 0.0);
    CHECK(cfg.sinr_db_hi == 10.0);
    hashes.insert(config_hash(cfg));
  }
  CHECK(hashes.size() == 8);  // different seeds, different instances
}

TEST_CASE("matrix container basics") {
  Mat m(2, 3, 1.5);
  CHECK(m.at(1, 2) == 1.5);
  m.at(0, 1) = -2.0;
  CHECK(m.at(0, 1) == -2.0);
  const Mat copy = m;
  CHECK(copy == m);

  PriceMatrix prices(2, 3);
  prices.p.at(1, 0) = 0.7;
  const auto row = prices.mu_prices(0);
  REQUIRE(row.size() == 2);
  CHECK(row[1] == 0.7);
}
