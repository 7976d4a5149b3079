#include "invopt/bench.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"

using namespace invopt;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream is(path);
  REQUIRE(is.good());
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

std::filesystem::path tmp_dir(const std::string& tag) {
  auto dir = std::filesystem::temp_directory_path() / ("invopt_bench_" + tag);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("toy generator: policy, feasibility and oracle agreement") {
  SplitDataset split = gen_toy(60, 40, 7);
  REQUIRE(split.train.size() == 60);
  REQUIRE(split.test.size() == 40);
  CHECK(split.train.meta.split == "train");
  CHECK(split.test.meta.split == "test");
  // disjoint sub-seeding: train and test draws differ
  CHECK(split.train.signals(0, 0) != split.test.signals(0, 0));

  const NormSpec norm{NormKind::L2Squared};
  for (const IODataset* d : {&split.train, &split.test}) {
    REQUIRE(d->oracle != nullptr);
    for (int i = 0; i < d->size(); ++i) {
      const double s = d->signals(i, 0);
      const Eigen::VectorXd x = d->decisions.row(i);
      CHECK(x(0) + x(1) == 1.0);  // exact vertex coordinates
      if (s < 0.5) {
        CHECK(x(0) == 1.0);
      } else {
        CHECK(x(1) == 1.0);
      }
      if (i < 10) {
        auto tl = true_losses(*d->oracle, norm, x, d->signals.row(i));
        CHECK(tl.l_p <= 1e-6);
        CHECK(tl.l_sub <= 1e-6);
      }
    }
  }
  // determinism
  SplitDataset again = gen_toy(60, 40, 7);
  CHECK(again.train.signals == split.train.signals);
  CHECK(again.test.decisions == split.test.decisions);
}

TEST_CASE("l1 generator matches the closed-form vertex and an LP oracle") {
  // closed-form spot checks
  {
    Eigen::VectorXd c(5), e = Eigen::VectorXd::Ones(5);
    c << 0.9, 0.1, 0.2, 0.3, 0.4;
    Eigen::VectorXd x = l1_vertex(c, e, 1.0);
    Eigen::VectorXd want(5);
    want << 0, 1, 1, 1, 1;
    CHECK((x - want).lpNorm<Eigen::Infinity>() == 0.0);
  }
  {
    Eigen::Vector2d c(-0.5, 0.2);
    Eigen::VectorXd x = l1_vertex(c, Eigen::VectorXd::Ones(2), 1.0);
    CHECK(x(0) == 2.0);
    CHECK(x(1) == 1.0);
  }

  const int n = 3;
  const double h = 0.8;
  Eigen::VectorXd e(n);
  e << 1.0, -0.5, 2.0;
  SplitDataset split = gen_synthetic_l1(n, -1.0, 1.0, e, h, 30, 20, 3);
  REQUIRE(split.train.oracle != nullptr);
  for (int i = 0; i < split.train.size(); ++i) {
    const Eigen::VectorXd c = split.train.signals.row(i);
    const Eigen::VectorXd x = split.train.decisions.row(i);
    CHECK((x - e).lpNorm<1>() == doctest::Approx(h).epsilon(1e-12));

    // independent vertex-enumeration oracle on the lifted LP
    ProgramBuilder pb;
    const int x0 = pb.add_vars(n);
    for (int j = 0; j < n; ++j) pb.set_cost(x0 + j, c(j));
    split.train.oracle->add_feasible_set(pb, x0, c);
    auto lp = oracles::lp_vertex_oracle(pb.build());
    REQUIRE(lp.feasible);
    CHECK(c.dot(x) == doctest::Approx(lp.value).epsilon(1e-9));

    auto tl = true_losses(*split.train.oracle, NormSpec{NormKind::L2Squared}, x, c);
    CHECK(tl.l_sub <= 1e-6);
  }
}

TEST_CASE("power5 generator: caps, conservation and cost optimality") {
  PowerSystemSpec spec = power5_spec();
  REQUIRE(spec.net.num_nodes == 5);
  REQUIRE(spec.net.n_gen() == 3);
  SplitDataset split = gen_power5(20, 10, 1);
  REQUIRE(split.train.size() == 20);
  REQUIRE(split.train.K() == 8);
  REQUIRE(split.train.n() == 3);
  REQUIRE(split.train.oracle != nullptr);
  const NormSpec norm{NormKind::L2Squared};
  for (int i = 0; i < split.train.size(); ++i) {
    const Eigen::VectorXd s = split.train.signals.row(i);
    const Eigen::VectorXd x = split.train.decisions.row(i);
    for (int g = 0; g < 3; ++g) {
      CHECK(x(g) >= -1e-7);
      CHECK(x(g) <= 3.5 + 1e-7);
      CHECK(s(g) >= 0.2);  // cost ranges all sit inside [0.2, 2]
      CHECK(s(g) <= 2.0);
    }
    // generation balances total demand
    const double demand = s.segment(3, 5).sum();
    CHECK(x.sum() == doctest::Approx(demand).epsilon(1e-6));
    // optimal cost matches the oracle's forward value
    auto tl = true_losses(*split.train.oracle, norm, x, s);
    CHECK(tl.l_sub <= 1e-6);
    CHECK(std::abs(s.head(3).dot(x) - split.train.oracle->value(s)) <= 1e-6);
  }
}

TEST_CASE("ieee14 generator: shapes, caps and signal ranges") {
  PowerSystemSpec spec = ieee14_spec();
  REQUIRE(spec.net.num_nodes == 14);
  REQUIRE(spec.net.num_lines() == 20);
  REQUIRE(spec.net.n_gen() == 3);
  SplitDataset split = gen_ieee14(8, 4, 2);
  REQUIRE(split.train.K() == 17);
  REQUIRE(split.train.n() == 3);
  for (int i = 0; i < split.train.size(); ++i) {
    const Eigen::VectorXd s = split.train.signals.row(i);
    const Eigen::VectorXd x = split.train.decisions.row(i);
    for (int g = 0; g < 3; ++g) {
      CHECK(x(g) >= -1e-7);
      CHECK(x(g) <= 3.6 + 1e-7);
    }
    CHECK(x.sum() == doctest::Approx(s.segment(3, 14).sum()).epsilon(1e-6));
    // plant at bus 13 (third slot) draws costs from [0.2, 1]
    CHECK(s(2) >= 0.2);
    CHECK(s(2) <= 1.0);
    auto tl = true_losses(*split.train.oracle, NormSpec{NormKind::L2Squared}, x, s);
    CHECK(tl.l_sub <= 1e-6);
  }
}

TEST_CASE("add_noise: zero std is the identity, variance is calibrated") {
  SplitDataset split = gen_toy(5000, 10, 11);
  IODataset same = add_noise(split.train, 0.0, 99);
  CHECK(same.decisions == split.train.decisions);
  CHECK(same.meta.noise_std == 0.0);

  const double std = 0.3;
  IODataset noisy = add_noise(split.train, std, 99);
  CHECK(noisy.signals == split.train.signals);  // signals untouched
  CHECK(noisy.meta.noise_std == std);
  Eigen::MatrixXd delta = noisy.decisions - split.train.decisions;
  const double n_entries = static_cast<double>(delta.size());
  const double mean = delta.sum() / n_entries;
  const double var = (delta.array() - mean).square().sum() / n_entries;
  CHECK(std::abs(mean) < 0.02);
  CHECK(var == doctest::Approx(std * std).epsilon(0.05));
}

TEST_CASE("dataset files round-trip bit-identically and rebuild the oracle") {
  auto dir = tmp_dir("io");
  GeneratorSpec spec;
  spec.name = "l1";
  spec.params = {{"n", 2}, {"cost_lo", -1.0}, {"cost_hi", 1.0}, {"h", 0.7}};
  SplitDataset split = generate(spec, 25, 5, 4);
  const std::string stem = (dir / "train").string();
  write_dataset(split.train, stem, &spec);

  IODataset back = read_dataset(stem);
  REQUIRE(back.size() == split.train.size());
  CHECK(back.signals == split.train.signals);  // %.17g preserves doubles
  CHECK(back.decisions == split.train.decisions);
  CHECK(back.meta.generator == split.train.meta.generator);
  CHECK(back.meta.seed == split.train.meta.seed);
  CHECK(back.meta.split == "train");
  REQUIRE(back.oracle != nullptr);
  for (int i = 0; i < 5; ++i) {
    auto tl = true_losses(*back.oracle, NormSpec{NormKind::L2Squared},
                          back.decisions.row(i), back.signals.row(i));
    CHECK(tl.l_sub <= 1e-6);
  }

  // rewriting the round-tripped data reproduces the CSV byte for byte
  const std::string stem2 = (dir / "again").string();
  write_dataset(back, stem2, &spec);
  CHECK(slurp(stem + ".csv") == slurp(stem2 + ".csv"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("experiment config: json round-trip, hash stability, validation") {
  ExperimentConfig cfg;
  cfg.name = "unit";
  cfg.generator.name = "toy";
  cfg.n_train = 12;
  cfg.n_test = 8;
  cfg.trainer = "smoothed";
  cfg.p = 2;
  cfg.seeds = {0, 1};
  cfg.validate();

  ExperimentConfig back = experiment_from_json(to_json(cfg));
  CHECK(to_json(back) == to_json(cfg));
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(config_hash(cfg).size() == 16);

  ExperimentConfig other = cfg;
  other.p = 3;
  CHECK(config_hash(other) != config_hash(cfg));

  ExperimentConfig bad = cfg;
  bad.trainer = "magic";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.generator.name = "nope";
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.trainer = "network";  // needs a power generator
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("run_experiment: toy smoothed run is complete and reproducible") {
  auto dir = tmp_dir("run");
  ExperimentConfig cfg;
  cfg.name = "toy_smoothed";
  cfg.generator.name = "toy";
  cfg.n_train = 12;
  cfg.n_test = 10;
  cfg.trainer = "smoothed";
  cfg.p = 2;
  cfg.max_iters = 300;
  cfg.seeds = {0, 1};
  cfg.solver.feas_tol = 1e-9;
  cfg.solver.gap_tol = 1e-10;

  const std::string path = run_experiment(cfg, dir.string());
  nlohmann::json rep = nlohmann::json::parse(slurp(path));
  CHECK(rep.at("ok").get<bool>());
  CHECK(rep.at("config_hash").get<std::string>() == config_hash(cfg));
  REQUIRE(rep.at("seeds").size() == 2);
  for (const auto& entry : rep["seeds"]) {
    // local method from random init: require progress, not global optimality
    CHECK(entry.at("train_loss").get<double>() <= 0.5);
    CHECK(entry.at("eval").at("est_pred").get<double>() <= 1.0);
    CHECK(entry.at("eval").contains("true_pred"));
    CHECK_FALSE(entry.at("train").contains("iter_seconds"));
  }
  CHECK(rep.at("aggregate").at("train_loss").contains("mean"));
  CHECK(std::filesystem::exists(dir / cfg.name / "tables.csv"));
  CHECK(std::filesystem::exists(dir / cfg.name / "seed_0_trajectory.csv"));
  CHECK(std::filesystem::exists(dir / cfg.name / "seed_1_trajectory.csv"));

  // a second run reproduces the report byte for byte
  const std::string first = slurp(path);
  run_experiment(cfg, dir.string());
  CHECK(slurp(path) == first);
  std::filesystem::remove_all(dir);
}

TEST_CASE("run_experiment: convex, milp and regression trainers") {
  auto dir = tmp_dir("trainers");

  ExperimentConfig cfg;
  cfg.generator.name = "l1";
  cfg.generator.params = {{"n", 2}, {"cost_lo", -1.0}, {"cost_hi", 1.0}, {"h", 1.0}};
  cfg.n_train = 15;
  cfg.n_test = 10;
  cfg.seeds = {0};
  cfg.solver.feas_tol = 1e-9;
  cfg.solver.gap_tol = 1e-10;

  SUBCASE("convex alpha recovers the l1 ball") {
    cfg.name = "l1_convex";
    cfg.trainer = "convex";
    cfg.primitive = "l1_ball";
    cfg.p = 2;
    nlohmann::json rep =
        nlohmann::json::parse(slurp(run_experiment(cfg, dir.string())));
    REQUIRE(rep.at("ok").get<bool>());
    const auto& entry = rep["seeds"][0];
    CHECK(entry.at("train").at("alpha").get<double>() ==
          doctest::Approx(1.0).epsilon(1e-4));
    CHECK(entry.at("train_loss").get<double>() <= 1e-6);
    CHECK(entry.at("eval").at("est_pred").get<double>() <= 1e-4);
  }

  SUBCASE("milp simplex fits the toy policy") {
    cfg.name = "toy_milp";
    cfg.generator = {"toy", nlohmann::json::object()};
    cfg.n_train = 6;
    cfg.n_test = 6;
    cfg.trainer = "milp";
    cfg.p = 2;
    nlohmann::json rep =
        nlohmann::json::parse(slurp(run_experiment(cfg, dir.string())));
    REQUIRE(rep.at("ok").get<bool>());
    const auto& entry = rep["seeds"][0];
    CHECK(entry.at("train_loss").get<double>() <= 1e-6);
    CHECK(entry.at("eval").at("est_pred").get<double>() <= 1e-4);
  }

  SUBCASE("regression baseline reports residuals and true losses") {
    cfg.name = "l1_regression";
    cfg.trainer = "regression";
    nlohmann::json rep =
        nlohmann::json::parse(slurp(run_experiment(cfg, dir.string())));
    REQUIRE(rep.at("ok").get<bool>());
    const auto& entry = rep["seeds"][0];
    CHECK(entry.at("train").contains("mse"));
    CHECK(entry.at("eval").contains("true_sub"));
    // linear regression cannot express the vertex-jump policy exactly
    CHECK(entry.at("train_loss").get<double>() > 1e-6);
  }

  std::filesystem::remove_all(dir);
}

TEST_CASE("run_experiment: network trainer exports the recovered topology") {
  auto dir = tmp_dir("network");
  ExperimentConfig cfg;
  cfg.name = "power5_network";
  cfg.generator.name = "power5";
  cfg.n_train = 4;
  cfg.n_test = 4;
  cfg.trainer = "network";
  cfg.network_backend = "branch_and_bound";
  cfg.seeds = {0};

  nlohmann::json rep =
      nlohmann::json::parse(slurp(run_experiment(cfg, dir.string())));
  REQUIRE(rep.at("ok").get<bool>());
  const auto& entry = rep["seeds"][0];
  CHECK(entry.at("train_loss").get<double>() <= 1e-6);
  const auto y = entry.at("train").at("y").get<std::vector<int>>();
  CHECK(y.size() == 10);  // all node pairs of 5 nodes
  CHECK(entry.at("eval").at("est_pred").get<double>() <= 1e-4);
  CHECK(entry.at("eval").at("est_sub").get<double>() <= 1e-4);
  CHECK(std::filesystem::exists(dir / cfg.name / "seed_0_edges.json"));
  CHECK(std::filesystem::exists(dir / cfg.name / "seed_0_network.dot"));
  std::filesystem::remove_all(dir);
}

TEST_CASE("run_experiment: per-seed failure is recorded, not thrown") {
  auto dir = tmp_dir("failure");
  ExperimentConfig cfg;
  cfg.name = "bad_milp";
  cfg.generator.name = "l1";
  cfg.generator.params = {{"n", 2}, {"h", 1.0}};
  cfg.n_train = 4;
  cfg.n_test = 4;
  cfg.trainer = "milp";
  cfg.p = 1;
  cfg.milp_bounds_M = 1e-3;  // box too tight to place any useful column
  cfg.seeds = {0};
  // this config still solves (loss just stays large), so instead force a
  // generator failure by asking for an impossible l1 radius at generate time
  cfg.generator.params["h"] = -1.0;

  nlohmann::json rep =
      nlohmann::json::parse(slurp(run_experiment(cfg, dir.string())));
  CHECK_FALSE(rep.at("ok").get<bool>());
  REQUIRE(rep.at("seeds").size() == 1);
  CHECK(rep["seeds"][0].contains("error"));
  std::filesystem::remove_all(dir);
}
