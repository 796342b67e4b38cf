#include <doctest.h>

#include <random>
#include <vector>

#include "cellsleep/errors.hpp"
#include "cellsleep/network.hpp"
#include "support.hpp"

using namespace cellsleep;
using namespace cellsleep::net;

namespace {

MacroCellConfig cell(std::vector<BsClass> classes,
                     OffloadScaling mode = OffloadScaling::BandwidthScaled) {
  MacroCellConfig c;
  c.sbs_classes = std::move(classes);
  c.offload_scaling = mode;
  return c;
}

SwitchVector sv(std::vector<std::uint8_t> bits) { return SwitchVector(std::move(bits)); }

}  // namespace

TEST_CASE("offloaded_mbs_load examples") {
  const ProfileTable t;
  const auto two = cell({BsClass::Rrh, BsClass::Femto});
  const std::vector<double> loads{0.3, 0.2, 0.1};
  CHECK(offloaded_mbs_load(loads, SwitchVector::all_on(3), two, t) == 0.3);

  const std::vector<double> one{0.3, 0.2};
  CHECK(offloaded_mbs_load(one, sv({1, 0}), cell({BsClass::Rrh}, OffloadScaling::Literal), t) ==
        doctest::Approx(0.5).epsilon(1e-15));
  CHECK(offloaded_mbs_load(one, sv({1, 0}), cell({BsClass::Femto}), t) ==
        doctest::Approx(0.33).epsilon(1e-15));
  // No clamping above 1.
  const std::vector<double> high{0.95, 1.0};
  CHECK(offloaded_mbs_load(high, sv({1, 0}), cell({BsClass::Rrh}), t) > 1.0);
}

TEST_CASE("qos_feasible is inclusive") {
  MacroCellConfig c = cell({BsClass::Pico});
  CHECK(qos_feasible(0.5, c));
  CHECK_FALSE(qos_feasible(1.2, c));
  CHECK(qos_feasible(1.0, c));
  c.mbs_capacity_limit = 0.8;
  CHECK_FALSE(qos_feasible(0.81, c));
}

TEST_CASE("config validation") {
  MacroCellConfig c = cell({BsClass::Macro});
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = cell({BsClass::Pico});
  c.mbs_capacity_limit = 0.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c.mbs_capacity_limit = 1.1;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  CHECK(parse_offload_scaling(to_string(OffloadScaling::Literal)) == OffloadScaling::Literal);
}

TEST_CASE("snapshot invariants") {
  const ProfileTable t;
  const auto c = cell({BsClass::Micro, BsClass::Pico});
  const std::vector<double> loads{0.4, 0.3, 0.6};
  const auto on = make_snapshot(loads, SwitchVector::all_on(3), c, t);
  CHECK(on.effective_mbs_load == 0.4);
  const auto off = make_snapshot(loads, sv({1, 0, 0}), c, t);
  CHECK(off.effective_mbs_load >= loads[0]);
}

TEST_CASE("power_saved examples") {
  const ProfileTable t;
  const std::vector<double> loads{0.3, 0.2};
  CHECK(power_saved(loads, SwitchVector::all_on(2), t, cell({BsClass::Rrh})) == 0.0);
  CHECK(power_saved(loads, sv({1, 0}), t, cell({BsClass::Rrh})) ==
        doctest::Approx(25.1).epsilon(1e-12));
  CHECK(power_saved(loads, sv({1, 0}), t, cell({BsClass::Femto})) ==
        doctest::Approx(-0.84).epsilon(1e-12));
}

TEST_CASE("single-SBS saving matches the symbolic form for every class") {
  const ProfileTable t;
  const auto& m = t[BsClass::Macro];
  for (auto c : {BsClass::Rrh, BsClass::Micro, BsClass::Pico, BsClass::Femto}) {
    const auto& s = t[c];
    for (double psi : {0.0, 0.5, 1.0}) {
      const std::vector<double> loads{0.0, psi};
      const double scale = s.bandwidth_mhz / m.bandwidth_mhz;
      const double oracle = (s.p_fixed - s.p_sleep) + psi * s.amp_eff * s.p_tx_max -
                            psi * scale * m.amp_eff * m.p_tx_max;
      CHECK(power_saved(loads, sv({1, 0}), t, cell({c})) == doctest::Approx(oracle).epsilon(1e-12));
    }
  }
}

TEST_CASE("energy accounting") {
  const std::vector<double> flat(144, 100.0);
  CHECK(energy_over_horizon(flat, 10.0) == doctest::Approx(8'640'000.0));
  const std::vector<double> zero{0.0};
  CHECK(energy_over_horizon(zero, 10.0) == 0.0);
  const std::vector<double> one{1.0};
  CHECK(energy_over_horizon(one, 1.0) == 60.0);
  CHECK(energy_over_horizon({}, 10.0) == 0.0);
  CHECK_THROWS_AS(energy_over_horizon(one, 0.0), DomainError);
  CHECK(energy_saved(100, 100) == 0);
  CHECK(energy_saved(100, 60) == 40);
}

TEST_CASE("energy saved on a 2-SBS desk instance matches brute force") {
  const ProfileTable t;
  support::Instance in;
  in.cfg = cell({BsClass::Rrh, BsClass::Pico});
  in.loads = {0.4, 0.3, 0.5};
  const auto best = support::enumerate_all(in, t);
  const std::vector<double> aao_series(144, network_power(in.loads, SwitchVector::all_on(3), in.cfg, t));
  const std::vector<double> es_series(144, best.power);
  const double saved = energy_saved(energy_over_horizon(aao_series, 10), energy_over_horizon(es_series, 10));
  CHECK(saved > 0.0);
  CHECK(saved == doctest::Approx((aao_series[0] - best.power) * 600 * 144));
}

TEST_CASE("coverage loss") {
  CHECK(coverage_loss(10, 10) == 0.0);
  CHECK(coverage_loss(10, 0) == 100.0);
  CHECK(coverage_loss(10, 9) == doctest::Approx(10.0));
  CHECK_THROWS_AS(coverage_loss(0, 0), DomainError);
}

TEST_CASE("feasible switching conserves traffic") {
  const ProfileTable t;
  std::mt19937_64 rng(3);
  std::bernoulli_distribution coin(0.5);
  int feasible = 0;
  for (int i = 0; i < 2000; ++i) {
    auto in = support::random_instance(rng, 10);
    if (coin(rng)) in.cfg.offload_scaling = OffloadScaling::Literal;
    std::vector<std::uint8_t> bits{1};
    for (std::size_t j = 1; j < in.cfg.num_bs(); ++j) bits.push_back(coin(rng) ? 1 : 0);
    const SwitchVector g(bits);
    if (!qos_feasible(offloaded_mbs_load(in.loads, g, in.cfg, t), in.cfg)) continue;
    ++feasible;
    const double before = total_demand(in.loads, in.cfg, t);
    const double after = served_traffic(in.loads, g, in.cfg, t);
    CHECK(after == before);
    if (before > 0) CHECK(coverage_loss(before, after) == 0.0);
  }
  CHECK(feasible > 100);
}

TEST_CASE("network_power rejects macro overload") {
  const ProfileTable t;
  const std::vector<double> loads{0.95, 1.0};
  CHECK_THROWS_AS(network_power(loads, sv({1, 0}), cell({BsClass::Rrh}), t), DomainError);
  CHECK_THROWS_AS(network_power(loads, sv({1, 0, 1}), cell({BsClass::Rrh}), t), ShapeError);
}
