#include <doctest.h>

#include <cmath>
#include <random>
#include <sstream>
#include <type_traits>
#include <vector>

#include "cellsleep/errors.hpp"
#include "cellsleep/fedlearn.hpp"
#include "cellsleep/traffic.hpp"

using namespace cellsleep;
using namespace cellsleep::fl;

namespace {

std::vector<double> diurnal(std::size_t days, std::uint64_t seed) {
  traffic::SynthParams p;
  p.n_days = days;
  p.n_series = 1;
  p.seed = seed;
  return traffic::synth_diurnal(p).begin()->second;
}

// The server's interface admits parameter updates only.
static_assert(std::is_invocable_v<decltype(&FederatedServer::apply_round), FederatedServer&,
                                  std::span<const ClientUpdate>>);
static_assert(!std::is_invocable_v<decltype(&FederatedServer::apply_round), FederatedServer&,
                                   std::span<const ClientDataset>>);
static_assert(!std::is_constructible_v<ClientUpdate, ClientDataset>);

}  // namespace

TEST_CASE("client datasets window the series") {
  const std::vector<double> s{0, 1, 2, 3, 4, 5};
  const ClientDataset d("sbs1", s, 2);
  CHECK(d.size() == 4);
  CHECK(d.input(0)[0] == 0);
  CHECK(d.input(0)[1] == 1);
  CHECK(d.target(0) == 2);
  CHECK(d.target(3) == 5);
  CHECK(ClientDataset::samples_in(6, 2) == 4);
  CHECK(ClientDataset::samples_in(2, 2) == 0);

  const auto split = make_client_split("sbs1", diurnal(31, 1), kDefaultWindow);
  CHECK(split.train.size() + split.val.size() + split.test.size() == 4464 - kDefaultWindow);
  CHECK(split.train.size() == 2643);
}

TEST_CASE("aggregate is the sample-weighted mean") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> n(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> count(1, 500), clients(1, 8), width(1, 40);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t w = width(rng);
    std::vector<ClientUpdate> ups(clients(rng));
    for (auto& u : ups) {
      u.delta = nn::ParamVector(w);
      for (auto& v : u.delta.values) v = n(rng);
      u.sample_count = count(rng);
    }
    const auto agg = aggregate(ups);
    double total = 0;
    for (const auto& u : ups) total += static_cast<double>(u.sample_count);
    for (std::size_t i = 0; i < w; ++i) {
      double ref = 0;
      for (const auto& u : ups) ref += static_cast<double>(u.sample_count) * u.delta.values[i];
      CHECK(std::abs(agg.values[i] - ref / total) < 1e-12);
    }
  }
}

TEST_CASE("aggregate edge cases") {
  ClientUpdate a{nn::ParamVector(std::vector<double>{1, 2}), 5};
  ClientUpdate b{nn::ParamVector(std::vector<double>{3, 6}), 5};
  const std::vector<ClientUpdate> one{a};
  CHECK(aggregate(one) == a.delta);
  const std::vector<ClientUpdate> two{a, b};
  CHECK(aggregate(two).values == std::vector<double>{2, 4});
  CHECK_THROWS_AS(aggregate(std::span<const ClientUpdate>{}), ValidationError);
  const std::vector<ClientUpdate> mism{a, ClientUpdate{nn::ParamVector(3), 1}};
  CHECK_THROWS_AS(aggregate(mism), ShapeError);
}

TEST_CASE("server update algebra") {
  GlobalModel g{predictor_spec(3, {2}), nn::ParamVector(std::vector<double>(11, 1.0))};
  const nn::ParamVector d(std::vector<double>(11, 0.5));
  CHECK(server_update(g, d, 1.0).params.values == std::vector<double>(11, 1.5));
  CHECK(server_update(g, d, -1.0).params.values == std::vector<double>(11, 0.5));
  FederatedServer s(g);
  const std::vector<ClientUpdate> ups{{d, 4}, {d, 9}};
  s.apply_round(ups);
  CHECK(s.rounds_applied() == 1);
  CHECK(s.broadcast().params.values == std::vector<double>(11, 1.5));
}

TEST_CASE("two identical clients equal one client") {
  const auto series = diurnal(3, 4);
  const ClientDataset c("sbs1", series, 12);
  const ClientDataset twin("sbs1", series, 12);
  const auto init = initial_model(predictor_spec(12, {8}), 3);
  FederationConfig cfg;
  cfg.rounds = 2;
  cfg.local_epochs = 2;
  const std::vector<ClientDataset> solo{c};
  const std::vector<ClientDataset> pair{c, twin};
  const auto a = run_federation(solo, {}, init, cfg, 5);
  const auto b = run_federation(pair, {}, init, cfg, 5);
  for (std::size_t i = 0; i < a.model.params.size(); ++i) {
    CHECK(a.model.params.values[i] == doctest::Approx(b.model.params.values[i]).epsilon(1e-12));
  }
}

TEST_CASE("single-client federation reproduces solo training bit-for-bit") {
  const auto series = diurnal(3, 6);
  const ClientDataset c("sbs7", series, 10);
  const auto init = initial_model(predictor_spec(10, {6, 4}), 8);
  FederationConfig cfg;
  cfg.rounds = 4;
  cfg.local_epochs = 3;
  const std::vector<ClientDataset> clients{c};
  const auto fed = run_federation(clients, {}, init, cfg, 99);

  GlobalModel solo = init;
  for (std::size_t r = 1; r <= cfg.rounds; ++r) {
    const auto res = local_training(c, solo, cfg, client_stream(99, r, c.sbs_id()));
    solo.params.vec() += res.update.delta.vec();
  }
  CHECK(fed.model.params == solo.params);
}

TEST_CASE("parallel and sequential clients agree") {
  std::vector<ClientDataset> clients;
  for (int i = 0; i < 3; ++i) {
    clients.emplace_back("sbs" + std::to_string(i + 1), diurnal(2, 10 + i), 8);
  }
  const auto init = initial_model(predictor_spec(8, {6}), 1);
  FederationConfig cfg;
  cfg.rounds = 3;
  cfg.local_epochs = 1;
  const auto seq = run_federation(clients, clients, init, cfg, 2);
  cfg.parallel_clients = true;
  const auto par = run_federation(clients, clients, init, cfg, 2);
  CHECK(seq.model.params == par.model.params);
  REQUIRE(seq.log.size() == par.log.size());
  for (std::size_t i = 0; i < seq.log.size(); ++i) CHECK(seq.log[i].rmse == par.log[i].rmse);
}

TEST_CASE("federation lowers validation error on diurnal clients") {
  std::vector<ClientDataset> train, val;
  for (int i = 0; i < 4; ++i) {
    auto s = make_client_split("sbs" + std::to_string(i + 1), diurnal(7, 30 + i), 24);
    train.push_back(std::move(s.train));
    val.push_back(std::move(s.val));
  }
  FederationConfig cfg;
  cfg.rounds = 5;
  cfg.local_epochs = 2;
  const auto r = run_federation(train, val, initial_model(predictor_spec(24, {16}), 4), cfg, 1);
  REQUIRE(r.log.front().round == 0);
  CHECK(r.log.front().client == "global");
  CHECK(r.log.back().client == "global");
  CHECK(r.log.back().rmse < r.log.front().rmse);
  std::ostringstream csv;
  write_round_log_csv(csv, r.log);
  CHECK(csv.str().rfind("round,client_id,rmse\n", 0) == 0);
}

TEST_CASE("rmse") {
  const std::vector<double> a{1, 2, 3}, b{3, 4, 5}, z{0, 0}, h{1, 3};
  CHECK(rmse(a, a) == 0.0);
  CHECK(rmse(a, b) == doctest::Approx(2.0));
  CHECK(rmse(h, z) == doctest::Approx(std::sqrt(5.0)));
  CHECK_THROWS_AS(rmse(a, h), ShapeError);
  CHECK_THROWS_AS(rmse({}, {}), ShapeError);
}

TEST_CASE("predict_loads") {
  const std::vector<double> zeros(200, 0.0);
  const std::vector<ClientDataset> clients{ClientDataset("sbs1", zeros, 6)};
  FederationConfig cfg;
  cfg.rounds = 3;
  const auto m = run_federation(clients, {}, initial_model(predictor_spec(6, {4}), 2), cfg, 1).model;
  const std::vector<std::vector<double>> hist{std::vector<double>(6, 0.0)};
  CHECK(std::abs(predict_loads(m, hist)[0]) < 0.05);

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  GlobalModel wild{predictor_spec(6, {4}), nn::ParamVector(predictor_spec(6, {4}).param_count())};
  for (auto& v : wild.params.values) v = u(rng);
  std::vector<std::vector<double>> many(50, std::vector<double>(6));
  for (auto& h : many) {
    for (auto& v : h) v = u(rng);
  }
  const auto p1 = predict_loads(wild, many);
  for (double v : p1) CHECK((v >= 0.0 && v <= 1.0));
  CHECK(predict_loads(wild, many) == p1);
  const std::vector<std::vector<double>> short_hist{std::vector<double>(5, 0.0)};
  CHECK_THROWS(predict_loads(wild, short_hist));
}

TEST_CASE("model checkpoint round-trip") {
  const auto m = initial_model(predictor_spec(5, {3}), 12);
  const auto back = from_checkpoint(to_checkpoint(m));
  CHECK(back.spec == m.spec);
  CHECK(back.params == m.params);
}
