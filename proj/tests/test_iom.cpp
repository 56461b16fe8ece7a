#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "iomarket/config.hpp"
#include "iomarket/iom.hpp"
#include "iomarket/rng.hpp"
#include "iomarket/types.hpp"
#include "support/oracles.hpp"

using namespace iomarket;

TEST_CASE("potential value fixtures") {
  const std::vector<double> same{0.2, -1.0, 3.5};
  CHECK(iom::potential_value(same, same) == 0.0);

  // differences (1, -1, 2) -> (1 + 1 + 4)/3 = 2
  const std::vector<double> pred{1.0, 0.0, 2.0};
  const std::vector<double> lab{0.0, 1.0, 0.0};
  CHECK(iom::potential_value(pred, lab) == doctest::Approx(2.0).epsilon(1e-15));

  Rng rng(17);
  std::vector<double> a(100), b(100);
  for (int i = 0; i < 100; ++i) {
    a[static_cast<std::size_t>(i)] = rng.normal();
    b[static_cast<std::size_t>(i)] = rng.normal();
  }
  CHECK(iom::potential_value(a, b) == doctest::Approx(oracles::naive_mse(a, b)).epsilon(1e-14));

  const std::vector<double> empty;
  const std::vector<double> one{1.0};
  const std::vector<double> two{1.0, 2.0};
  CHECK_THROWS_AS(iom::potential_value(empty, empty), EmptyDataset);
  CHECK_THROWS_AS(iom::potential_value(one, two), LengthMismatch);
}

TEST_CASE("contribution prediction fixtures") {
  CHECK(iom::contribution_prediction(0.0, 0.5, 4.0, 2.0, 4.0, 0.5, 1.0) == 0.0);
  CHECK(iom::contribution_prediction(2.0, 0.5, 4.0, 2.0, 4.0, 0.5, 0.0) == 0.0);  // ln 1

  // omega=2, eps=0.5, theta=0.5, x=4, tau=2, T=4, eta=1 -> 2*ln(17)
  const double I = iom::contribution_prediction(2.0, 0.5, 4.0, 2.0, 4.0, 0.5, 1.0);
  CHECK(I == doctest::Approx(2.0 * std::log(17.0)).epsilon(1e-14));
  CHECK(I == doctest::Approx(5.6664).epsilon(1e-4));

  CHECK_THROWS_AS(iom::contribution_prediction(1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0), DomainError);
  CHECK_THROWS_AS(iom::contribution_prediction(1.0, 0.0, 1.0, 1.0, 2.0, 1.0, 1.0), DomainError);
  CHECK_THROWS_AS(iom::contribution_prediction(1.0, 0.5, 1.0, 3.0, 2.0, 1.0, 1.0),
                  DomainError);  // tau > T
}

TEST_CASE("training and upload time fixtures") {
  // theta = 1/e, x=2, tau=4, f=8 -> 1*8/8 = 1
  CHECK(iom::local_training_time(std::exp(-1.0), 2.0, 4.0, 8.0) == doctest::Approx(1.0).epsilon(1e-14));
  // theta -> 1 => T_c -> 0
  CHECK(iom::local_training_time(0.999999, 2.0, 4.0, 8.0) < 1e-5);
  // theta=0.5, x=3, tau=2, f=6 -> ln 2
  CHECK(iom::local_training_time(0.5, 3.0, 2.0, 6.0) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  CHECK_THROWS_AS(iom::local_training_time(0.5, 3.0, 2.0, 0.0), DomainError);

  // b=3, B=1, sinr=3 -> 3/log2(4) = 1.5
  CHECK(iom::upload_time(3.0, 1.0, 3.0) == doctest::Approx(1.5).epsilon(1e-14));
  // sinr=1, b=B -> 1
  CHECK(iom::upload_time(7.0, 7.0, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
  // b=1e6, B=2e5, sinr=5 -> 1e6/(2e5*log2 6) ~ 1.9342
  CHECK(iom::upload_time(1e6, 2e5, 5.0) ==
        doctest::Approx(1e6 / (2e5 * std::log2(6.0))).epsilon(1e-14));
  CHECK(iom::upload_time(1e6, 2e5, 5.0) == doctest::Approx(1.9342).epsilon(1e-4));
  CHECK_THROWS_AS(iom::upload_time(1.0, 0.0, 1.0), DomainError);
  CHECK_THROWS_AS(iom::upload_time(1.0, 1.0, 0.0), DomainError);
}

TEST_CASE("age of information fixtures") {
  CHECK(iom::average_aoi(6.0, 0.0, 0.0) == 3.0);                    // tau/2
  CHECK(iom::average_aoi(4.0, 1.0, 1.5) == doctest::Approx(4.5));   // direct sum

  CHECK(iom::instantaneous_aoi(3.0, 3.0) == 0.0);
  CHECK(iom::instantaneous_aoi(7.0, 3.0) == 4.0);
  CHECK_THROWS_AS(iom::instantaneous_aoi(1.0, 2.0), NegativeAge);
}

TEST_CASE("iom value fixtures and composition") {
  // I=2, tau=4, aoi=4.5 -> V = -1 (non-participating sign)
  CHECK(iom::iom_value(2.0, 4.0, 4.5) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(iom::iom_value(2.0, 4.0, 4.0) == 0.0);  // aoi = tau

  // Composition of the prior fixtures: I = 2*ln17, tau=4, aoi=3 -> V = I.
  const double I = iom::contribution_prediction(2.0, 0.5, 4.0, 2.0, 4.0, 0.5, 1.0);
  CHECK(iom::iom_value(I, 4.0, 3.0) == doctest::Approx(I).epsilon(1e-14));
}

TEST_CASE("value strictly increases in both resources") {
  // V through the breakdown must rise when f or B rises (aoi falls).
  TradingConfig cfg = default_config(2, 1, 1);
  Rng rng(2);
  const ChannelState ch = sample_channel(cfg, rng);
  const double f = 1e9, B = 1e6;
  const iom::IomBreakdown base = iom::pair_breakdown(cfg, ch, 0, 0, f, B);
  const iom::IomBreakdown more_f = iom::pair_breakdown(cfg, ch, 0, 0, f * 1.01, B);
  const iom::IomBreakdown more_B = iom::pair_breakdown(cfg, ch, 0, 0, f, B * 1.01);
  CHECK(more_f.V > base.V);
  CHECK(more_B.V > base.V);
  CHECK(base.omega >= 0.0);
  CHECK(base.I >= 0.0);
  CHECK(base.T_c > 0.0);
  CHECK(base.T_t > 0.0);
  CHECK(base.avg_aoi >= cfg.msps[0].tau / 2.0);
}
