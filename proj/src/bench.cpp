#include "invopt/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace invopt {

namespace {

std::mt19937 split_rng(unsigned seed, bool test_split) {
  std::seed_seq ss{seed, test_split ? 1u : 0u};
  return std::mt19937(ss);
}

double param_or(const nlohmann::json& p, const std::string& key, double dflt) {
  return p.contains(key) ? p.at(key).get<double>() : dflt;
}

// ---------------------------------------------------------------------------
// Toy dispatch generator
// ---------------------------------------------------------------------------

ObjectiveSpec toy_objective() {
  return ObjectiveSpec::affine(Eigen::Vector2d(0.0, 1.0),
                               (Eigen::MatrixXd(2, 1) << 1.0, -1.0).finished());
}

std::shared_ptr<const TrueProblemOracle> toy_oracle() {
  auto oracle = std::make_shared<TrueProblemOracle>();
  oracle->n = 2;
  oracle->obj = toy_objective();
  oracle->add_feasible_set = [](ProgramBuilder& pb, int x0,
                                const Eigen::VectorXd&) {
    pb.add_row(ConeKind::Zero, {{x0, 1.0}, {x0 + 1, 1.0}}, 1.0);
    for (int i = 0; i < 2; ++i) pb.set_var_bounds(x0 + i, 0.0, 2.0);
  };
  return oracle;
}

IODataset gen_toy_split(int N, unsigned seed, bool test_split) {
  auto rng = split_rng(seed, test_split);
  std::uniform_real_distribution<double> U(0.0, 1.0);
  IODataset d;
  d.signals.resize(N, 1);
  d.decisions.resize(N, 2);
  int i = 0;
  while (i < N) {
    const double s = U(rng);
    if (std::abs(s - 0.5) < 1e-9) {  // tie: both vertices optimal
      ++d.meta.regenerated;
      continue;
    }
    d.signals(i, 0) = s;
    d.decisions.row(i) = s < 0.5 ? Eigen::RowVector2d(1.0, 0.0)
                                 : Eigen::RowVector2d(0.0, 1.0);
    ++i;
  }
  d.meta.generator = "toy";
  d.meta.seed = seed;
  d.meta.split = test_split ? "test" : "train";
  d.oracle = toy_oracle();
  return d;
}

// ---------------------------------------------------------------------------
// Synthetic L1-ball generator
// ---------------------------------------------------------------------------

std::shared_ptr<const TrueProblemOracle> l1_oracle(int n,
                                                   const Eigen::VectorXd& e,
                                                   double h) {
  auto oracle = std::make_shared<TrueProblemOracle>();
  oracle->n = n;
  std::vector<int> coords(n);
  for (int i = 0; i < n; ++i) coords[i] = i;
  oracle->obj = ObjectiveSpec::signal_is_cost(coords);
  oracle->add_feasible_set = [n, e, h](ProgramBuilder& pb, int x0,
                                       const Eigen::VectorXd&) {
    const int t = pb.add_vars(n);  // t_i >= |x_i - e_i|
    std::vector<std::pair<int, double>> sum;
    for (int i = 0; i < n; ++i) {
      pb.add_row(ConeKind::Nonneg, {{t + i, 1.0}, {x0 + i, -1.0}}, -e(i));
      pb.add_row(ConeKind::Nonneg, {{t + i, 1.0}, {x0 + i, 1.0}}, e(i));
      sum.push_back({t + i, -1.0});
    }
    pb.add_row(ConeKind::Nonneg, sum, -h);  // sum t_i <= h
  };
  return oracle;
}

IODataset gen_l1_split(int n, double lo, double hi, const Eigen::VectorXd& e,
                       double h, int N, unsigned seed, bool test_split) {
  auto rng = split_rng(seed, test_split);
  std::uniform_real_distribution<double> U(lo, hi);
  IODataset d;
  d.signals.resize(N, n);
  d.decisions.resize(N, n);
  int i = 0;
  while (i < N) {
    Eigen::VectorXd c(n);
    for (int j = 0; j < n; ++j) c(j) = U(rng);
    // unique argmax |c_j| with a nonzero winner, else redraw
    int j1 = 0;
    for (int j = 1; j < n; ++j)
      if (std::abs(c(j)) > std::abs(c(j1))) j1 = j;
    bool tie = std::abs(c(j1)) < 1e-12;
    for (int j = 0; j < n && !tie; ++j)
      tie = j != j1 && std::abs(std::abs(c(j)) - std::abs(c(j1))) < 1e-9;
    if (tie) {
      ++d.meta.regenerated;
      continue;
    }
    d.signals.row(i) = c;
    d.decisions.row(i) = l1_vertex(c, e, h);
    ++i;
  }
  d.meta.generator = "l1";
  d.meta.seed = seed;
  d.meta.split = test_split ? "test" : "train";
  d.oracle = l1_oracle(n, e, h);
  return d;
}

// ---------------------------------------------------------------------------
// Power-system generators
// ---------------------------------------------------------------------------

NetworkModel make_topology(int num_nodes,
                           const std::vector<std::pair<int, int>>& lines,
                           const std::vector<int>& generator_nodes,
                           double capacity, double f_bar) {
  NetworkModel net;
  net.num_nodes = num_nodes;
  net.lines = lines;
  net.incidence = Eigen::MatrixXd::Zero(num_nodes, static_cast<int>(lines.size()));
  for (int m = 0; m < net.num_lines(); ++m) {
    net.incidence(lines[m].first, m) = -1.0;
    net.incidence(lines[m].second, m) = 1.0;
  }
  net.f_bar = f_bar;
  net.G = Eigen::MatrixXd::Zero(num_nodes, static_cast<int>(generator_nodes.size()));
  for (size_t g = 0; g < generator_nodes.size(); ++g)
    net.G(generator_nodes[g], static_cast<int>(g)) = 1.0;
  net.capacity = Eigen::VectorXd::Constant(static_cast<int>(generator_nodes.size()),
                                           capacity);
  net.cost_offset = 0;
  net.demand_offset = net.n_gen();
  net.validate();
  return net;
}

std::shared_ptr<const TrueProblemOracle> power_oracle(const NetworkModel& net) {
  auto oracle = std::make_shared<TrueProblemOracle>();
  oracle->n = net.n_gen();
  std::vector<int> coords(net.n_gen());
  for (int g = 0; g < net.n_gen(); ++g) coords[g] = net.cost_offset + g;
  oracle->obj = ObjectiveSpec::signal_is_cost(coords);
  oracle->add_feasible_set = [net](ProgramBuilder& pb, int x0,
                                   const Eigen::VectorXd& s) {
    const int M = net.num_lines();
    const int f0 = pb.add_vars(M);  // latent line flows
    for (int m = 0; m < M; ++m) pb.set_var_bounds(f0 + m, -net.f_bar, net.f_bar);
    for (int g = 0; g < net.n_gen(); ++g)
      pb.set_var_bounds(x0 + g, 0.0, net.capacity(g));
    const Eigen::VectorXd d = net.demand(s);
    pb.begin_block(ConeKind::Zero, net.num_nodes);
    for (int r = 0; r < net.num_nodes; ++r) {
      for (int g = 0; g < net.n_gen(); ++g)
        if (net.G(r, g) != 0.0) pb.coeff(r, x0 + g, net.G(r, g));
      for (int m = 0; m < M; ++m)
        if (net.incidence(r, m) != 0.0) pb.coeff(r, f0 + m, -net.incidence(r, m));
      pb.rhs(r, d(r));
    }
    pb.end_block();
  };
  return oracle;
}

// Optimal plant dispatch for one signal; throws if the LP is not optimal
// (cannot happen within the stated signal ranges).
Eigen::VectorXd dispatch(const NetworkModel& net, const Eigen::VectorXd& s) {
  const int ng = net.n_gen();
  const int M = net.num_lines();
  const Eigen::VectorXd c = net.cost(s);
  const Eigen::VectorXd d = net.demand(s);
  ProgramBuilder pb;
  const int x0 = pb.add_vars(ng);
  const int f0 = pb.add_vars(M);
  for (int g = 0; g < ng; ++g) {
    pb.set_cost(x0 + g, c(g));
    pb.set_var_bounds(x0 + g, 0.0, net.capacity(g));
  }
  for (int m = 0; m < M; ++m) pb.set_var_bounds(f0 + m, -net.f_bar, net.f_bar);
  pb.begin_block(ConeKind::Zero, net.num_nodes);
  for (int r = 0; r < net.num_nodes; ++r) {
    for (int g = 0; g < ng; ++g)
      if (net.G(r, g) != 0.0) pb.coeff(r, x0 + g, net.G(r, g));
    for (int m = 0; m < M; ++m)
      if (net.incidence(r, m) != 0.0) pb.coeff(r, f0 + m, -net.incidence(r, m));
    pb.rhs(r, d(r));
  }
  pb.end_block();
  // Dispatches become training labels, so solve them well past the default
  // accuracy; fall back to the defaults if the tight solve stalls.
  SolveOptions tight;
  tight.feas_tol = 1e-10;
  tight.gap_tol = 1e-11;
  tight.max_iters = 300;
  auto sol = solve(pb.build(), tight);
  if (sol.status != SolveStatus::Optimal) sol = solve(pb.build());
  if (sol.status != SolveStatus::Optimal)
    throw std::runtime_error("gen_power: dispatch LP " + to_string(sol.status));
  return sol.primal.segment(x0, ng);
}

IODataset gen_power_split(const PowerSystemSpec& spec, int N, unsigned seed,
                          bool test_split) {
  auto rng = split_rng(seed, test_split);
  const int ng = spec.net.n_gen();
  const int R = spec.net.num_nodes;
  IODataset d;
  d.signals.resize(N, ng + R);
  d.decisions.resize(N, ng);
  for (int i = 0; i < N; ++i) {
    Eigen::VectorXd s(ng + R);
    for (int g = 0; g < ng; ++g) {
      std::uniform_real_distribution<double> U(spec.cost_ranges[g].first,
                                               spec.cost_ranges[g].second);
      s(spec.net.cost_offset + g) = U(rng);
    }
    for (int r = 0; r < R; ++r) {
      std::uniform_real_distribution<double> U(spec.demand_ranges[r].first,
                                               spec.demand_ranges[r].second);
      s(spec.net.demand_offset + r) = U(rng);
    }
    d.signals.row(i) = s;
    d.decisions.row(i) = dispatch(spec.net, s);
  }
  d.meta.generator = spec.name;
  d.meta.seed = seed;
  d.meta.split = test_split ? "test" : "train";
  d.oracle = power_oracle(spec.net);
  return d;
}

}  // namespace

Eigen::VectorXd l1_vertex(const Eigen::VectorXd& c, const Eigen::VectorXd& e,
                          double h) {
  int j = 0;
  for (int i = 1; i < c.size(); ++i)
    if (std::abs(c(i)) > std::abs(c(j))) j = i;
  Eigen::VectorXd x = e;
  x(j) -= h * (c(j) > 0 ? 1.0 : -1.0);
  return x;
}

PowerSystemSpec power5_spec() {
  PowerSystemSpec spec;
  spec.name = "power5";
  // documented default: ring topology 1-2-3-4-5-1, plants at nodes 1, 3, 5
  spec.net = make_topology(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {0, 4}},
                           {0, 2, 4}, 3.5, 3.5);
  spec.cost_ranges = {{0.2, 1.0}, {0.2, 0.5}, {1.0, 2.0}};
  spec.demand_ranges = {{0.3, 1.5}, {0.36, 1.8}, {0.42, 2.1}, {0.48, 2.4},
                        {0.54, 2.7}};
  return spec;
}

PowerSystemSpec ieee14_spec() {
  PowerSystemSpec spec;
  spec.name = "ieee14";
  // standard IEEE 14-bus branch list (0-indexed), plants at buses 2, 8, 13
  spec.net = make_topology(
      14,
      {{0, 1}, {0, 4}, {1, 2}, {1, 3}, {1, 4}, {2, 3}, {3, 4},
       {3, 6}, {3, 8}, {4, 5}, {5, 10}, {5, 11}, {5, 12}, {6, 7},
       {6, 8}, {8, 9}, {8, 13}, {9, 10}, {11, 12}, {12, 13}},
      {1, 7, 12}, 3.6, 3.0);
  // plant order (bus 2, bus 8, bus 13): costs [0.2,0.5], [1,2], [0.2,1]
  spec.cost_ranges = {{0.2, 0.5}, {1.0, 2.0}, {0.2, 1.0}};
  spec.demand_ranges = {{0.14, 0.7}, {0.14, 0.7}, {0.16, 0.8}, {0.16, 0.8},
                        {0.14, 0.7}, {0.1, 0.5},  {0.16, 0.8}, {0.54, 2.7},
                        {0.1, 0.2},  {0.12, 0.6}, {0.12, 0.6}, {0.1, 0.5},
                        {0.1, 0.5},  {0.12, 0.6}};
  return spec;
}

SplitDataset gen_toy(int N_train, int N_test, unsigned seed) {
  if (N_train < 1 || N_test < 1) throw std::invalid_argument("gen_toy: N < 1");
  return {gen_toy_split(N_train, seed, false), gen_toy_split(N_test, seed, true)};
}

SplitDataset gen_synthetic_l1(int n, double cost_lo, double cost_hi,
                              const Eigen::VectorXd& e, double h, int N_train,
                              int N_test, unsigned seed) {
  if (h <= 0) throw std::invalid_argument("gen_synthetic_l1: h <= 0");
  if (n < 1 || e.size() != n)
    throw std::invalid_argument("gen_synthetic_l1: bad n / e");
  if (!(cost_lo < cost_hi))
    throw std::invalid_argument("gen_synthetic_l1: empty cost range");
  return {gen_l1_split(n, cost_lo, cost_hi, e, h, N_train, seed, false),
          gen_l1_split(n, cost_lo, cost_hi, e, h, N_test, seed, true)};
}

SplitDataset gen_power(const PowerSystemSpec& spec, int N_train, int N_test,
                       unsigned seed) {
  return {gen_power_split(spec, N_train, seed, false),
          gen_power_split(spec, N_test, seed, true)};
}

SplitDataset gen_power5(int N_train, int N_test, unsigned seed) {
  return gen_power(power5_spec(), N_train, N_test, seed);
}

SplitDataset gen_ieee14(int N_train, int N_test, unsigned seed) {
  return gen_power(ieee14_spec(), N_train, N_test, seed);
}

IODataset add_noise(const IODataset& data, double std, unsigned seed) {
  if (std < 0) throw std::invalid_argument("add_noise: std < 0");
  IODataset out = data;
  if (std == 0.0) return out;
  std::mt19937 rng(seed);
  std::normal_distribution<double> G(0.0, std);
  for (int i = 0; i < out.decisions.rows(); ++i)
    for (int j = 0; j < out.decisions.cols(); ++j) out.decisions(i, j) += G(rng);
  out.meta.noise_std = std;
  return out;
}

ObjectiveSpec generator_objective(const GeneratorSpec& spec) {
  if (spec.name == "toy") return toy_objective();
  if (spec.name == "l1") {
    const int n = static_cast<int>(param_or(spec.params, "n", 2));
    std::vector<int> coords(n);
    for (int i = 0; i < n; ++i) coords[i] = i;
    return ObjectiveSpec::signal_is_cost(coords);
  }
  if (spec.name == "power5" || spec.name == "ieee14")
    return ObjectiveSpec::signal_is_cost({0, 1, 2});
  throw std::invalid_argument("unknown generator: " + spec.name);
}

std::shared_ptr<const TrueProblemOracle> make_oracle(const GeneratorSpec& spec) {
  if (spec.name == "toy") return toy_oracle();
  if (spec.name == "l1") {
    const int n = static_cast<int>(param_or(spec.params, "n", 2));
    Eigen::VectorXd e = Eigen::VectorXd::Ones(n);
    if (spec.params.contains("e"))
      for (int i = 0; i < n; ++i) e(i) = spec.params.at("e").at(i).get<double>();
    return l1_oracle(n, e, param_or(spec.params, "h", 1.0));
  }
  if (spec.name == "power5") return power_oracle(power5_spec().net);
  if (spec.name == "ieee14") return power_oracle(ieee14_spec().net);
  throw std::invalid_argument("unknown generator: " + spec.name);
}

SplitDataset generate(const GeneratorSpec& spec, int N_train, int N_test,
                      unsigned seed) {
  if (spec.name == "toy") return gen_toy(N_train, N_test, seed);
  if (spec.name == "l1") {
    const int n = static_cast<int>(param_or(spec.params, "n", 2));
    Eigen::VectorXd e = Eigen::VectorXd::Ones(n);
    if (spec.params.contains("e"))
      for (int i = 0; i < n; ++i) e(i) = spec.params.at("e").at(i).get<double>();
    return gen_synthetic_l1(n, param_or(spec.params, "cost_lo", -1.0),
                            param_or(spec.params, "cost_hi", 1.0), e,
                            param_or(spec.params, "h", 1.0), N_train, N_test,
                            seed);
  }
  if (spec.name == "power5") return gen_power5(N_train, N_test, seed);
  if (spec.name == "ieee14") return gen_ieee14(N_train, N_test, seed);
  throw std::invalid_argument("unknown generator: " + spec.name);
}

// ---------------------------------------------------------------------------
// Dataset files
// ---------------------------------------------------------------------------

namespace {

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void write_dataset(const IODataset& data, const std::string& stem,
                   const GeneratorSpec* spec) {
  std::ofstream csv(stem + ".csv");
  if (!csv) throw std::runtime_error("write_dataset: cannot open " + stem + ".csv");
  for (int k = 0; k < data.K(); ++k) csv << (k ? "," : "") << "s_" << (k + 1);
  for (int j = 0; j < data.n(); ++j)
    csv << (data.K() || j ? "," : "") << "x_" << (j + 1);
  csv << "\n";
  for (int i = 0; i < data.size(); ++i) {
    for (int k = 0; k < data.K(); ++k)
      csv << (k ? "," : "") << fmt17(data.signals(i, k));
    for (int j = 0; j < data.n(); ++j)
      csv << (data.K() || j ? "," : "") << fmt17(data.decisions(i, j));
    csv << "\n";
  }
  nlohmann::json meta;
  meta["N"] = data.size();
  meta["K"] = data.K();
  meta["n"] = data.n();
  meta["meta"] = {{"generator", data.meta.generator},
                  {"seed", data.meta.seed},
                  {"noise_std", data.meta.noise_std},
                  {"split", data.meta.split},
                  {"regenerated", data.meta.regenerated}};
  if (spec) meta["oracle"] = {{"generator", spec->name}, {"params", spec->params}};
  std::ofstream js(stem + ".json");
  js << meta.dump(2) << "\n";
}

IODataset read_dataset(const std::string& stem) {
  std::ifstream js(stem + ".json");
  if (!js) throw std::runtime_error("read_dataset: cannot open " + stem + ".json");
  nlohmann::json meta = nlohmann::json::parse(js);
  const int N = meta.at("N"), K = meta.at("K"), n = meta.at("n");
  IODataset d;
  d.signals.resize(N, K);
  d.decisions.resize(N, n);
  std::ifstream csv(stem + ".csv");
  if (!csv) throw std::runtime_error("read_dataset: cannot open " + stem + ".csv");
  std::string line;
  std::getline(csv, line);  // header
  for (int i = 0; i < N; ++i) {
    if (!std::getline(csv, line))
      throw std::runtime_error("read_dataset: truncated CSV");
    std::istringstream row(line);
    std::string cell;
    for (int k = 0; k < K; ++k) {
      std::getline(row, cell, ',');
      d.signals(i, k) = std::stod(cell);
    }
    for (int j = 0; j < n; ++j) {
      std::getline(row, cell, ',');
      d.decisions(i, j) = std::stod(cell);
    }
  }
  const auto& m = meta.at("meta");
  d.meta.generator = m.at("generator");
  d.meta.seed = m.at("seed");
  d.meta.noise_std = m.at("noise_std");
  d.meta.split = m.at("split");
  d.meta.regenerated = m.at("regenerated");
  if (meta.contains("oracle")) {
    GeneratorSpec spec;
    spec.name = meta["oracle"].at("generator");
    spec.params = meta["oracle"].at("params");
    d.oracle = make_oracle(spec);
  }
  return d;
}

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  static const std::vector<std::string> trainers{"vanilla",  "smoothed",
                                                 "convex",   "milp",
                                                 "network",  "regression"};
  if (std::find(trainers.begin(), trainers.end(), trainer) == trainers.end())
    throw std::invalid_argument("ExperimentConfig: unknown trainer " + trainer);
  generator_objective(generator);  // throws on unknown generator
  if (loss != "pred" && loss != "sub")
    throw std::invalid_argument("ExperimentConfig: unknown loss " + loss);
  norm_from_string(norm);  // throws on unknown norm
  if (seeds.empty()) throw std::invalid_argument("ExperimentConfig: no seeds");
  if (n_train < 1 || n_test < 1)
    throw std::invalid_argument("ExperimentConfig: split sizes");
  if (p < 1) throw std::invalid_argument("ExperimentConfig: p < 1");
  if (trainer == "network" && generator.name != "power5" &&
      generator.name != "ieee14")
    throw std::invalid_argument(
        "ExperimentConfig: network trainer needs a power generator");
  primitive_kind_from_string(primitive);
}

nlohmann::json to_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["name"] = cfg.name;
  j["generator"] = {{"name", cfg.generator.name}, {"params", cfg.generator.params}};
  j["n_train"] = cfg.n_train;
  j["n_test"] = cfg.n_test;
  j["noise_std"] = cfg.noise_std;
  j["trainer"] = cfg.trainer;
  j["loss"] = cfg.loss;
  j["norm"] = cfg.norm;
  j["primitive"] = cfg.primitive;
  j["p"] = cfg.p;
  j["primitive_scale"] = cfg.primitive_scale;
  j["max_iters"] = cfg.max_iters;
  j["milp_bounds_M"] = cfg.milp_bounds_M;
  j["network_backend"] = cfg.network_backend;
  j["seeds"] = cfg.seeds;
  j["solver"] = {{"feas_tol", cfg.solver.feas_tol},
                 {"gap_tol", cfg.solver.gap_tol},
                 {"max_iters", cfg.solver.max_iters}};
  return j;
}

ExperimentConfig experiment_from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  cfg.name = j.value("name", cfg.name);
  if (j.contains("generator")) {
    cfg.generator.name = j["generator"].value("name", std::string{});
    cfg.generator.params = j["generator"].value("params", nlohmann::json::object());
  }
  cfg.n_train = j.value("n_train", cfg.n_train);
  cfg.n_test = j.value("n_test", cfg.n_test);
  cfg.noise_std = j.value("noise_std", cfg.noise_std);
  cfg.trainer = j.value("trainer", cfg.trainer);
  cfg.loss = j.value("loss", cfg.loss);
  cfg.norm = j.value("norm", cfg.norm);
  cfg.primitive = j.value("primitive", cfg.primitive);
  cfg.p = j.value("p", cfg.p);
  cfg.primitive_scale = j.value("primitive_scale", cfg.primitive_scale);
  cfg.max_iters = j.value("max_iters", cfg.max_iters);
  cfg.milp_bounds_M = j.value("milp_bounds_M", cfg.milp_bounds_M);
  cfg.network_backend = j.value("network_backend", cfg.network_backend);
  if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<unsigned>>();
  if (j.contains("solver")) {
    cfg.solver.feas_tol = j["solver"].value("feas_tol", cfg.solver.feas_tol);
    cfg.solver.gap_tol = j["solver"].value("gap_tol", cfg.solver.gap_tol);
    cfg.solver.max_iters = j["solver"].value("max_iters", cfg.solver.max_iters);
  }
  cfg.validate();
  return cfg;
}

std::string config_hash(const ExperimentConfig& cfg) {
  const std::string s = to_json(cfg).dump();
  std::uint64_t h = 14695981039346656037ull;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

// Strips wall-time fields so reports stay byte-identical across runs.
nlohmann::json train_report_json(const TrainReport& rep) {
  nlohmann::json j = to_json(rep);
  j.erase("iter_seconds");
  return j;
}

LossKind loss_kind(const ExperimentConfig& cfg) {
  return cfg.loss == "sub" ? LossKind::Suboptimality : LossKind::Predictability;
}

PrimitiveSet experiment_primitive(const ExperimentConfig& cfg) {
  return make_primitive(primitive_kind_from_string(cfg.primitive), cfg.p,
                        cfg.primitive_scale);
}

struct SeedOutcome {
  nlohmann::json entry;
  bool ok = false;
  double wall = 0.0;
};

SeedOutcome run_seed(const ExperimentConfig& cfg, unsigned seed,
                     const std::filesystem::path& dir) {
  const auto t0 = std::chrono::steady_clock::now();
  SeedOutcome out;
  out.entry["seed"] = seed;
  try {
    SplitDataset split = generate(cfg.generator, cfg.n_train, cfg.n_test, seed);
    IODataset train_data = cfg.noise_std > 0
                               ? add_noise(split.train, cfg.noise_std, seed + 1000)
                               : split.train;
    const ObjectiveSpec obj = generator_objective(cfg.generator);
    const NormSpec norm{norm_from_string(cfg.norm)};
    const LossKind loss = loss_kind(cfg);
    const TrueProblemOracle* oracle = split.test.oracle.get();

    auto eval_theta = [&](const HypothesisParams& theta, const PrimitiveSet& Z) {
      return to_json(evaluate(theta, Z, obj, norm, split.test, oracle, cfg.solver));
    };

    if (cfg.trainer == "vanilla" || cfg.trainer == "smoothed") {
      PrimitiveSet Z = experiment_primitive(cfg);
      TrainConfig tc;
      tc.loss = loss;
      tc.norm = norm;
      tc.max_iters = cfg.max_iters;
      tc.seed = seed;
      tc.solver = cfg.solver;
      tc.smoothing.enabled = cfg.trainer == "smoothed";
      auto theta0 = init_params(train_data.n(), Z.dim_external(), train_data.K(),
                                StructureKind::Free, seed);
      TrainReport rep = cfg.trainer == "smoothed"
                            ? train_smoothed(train_data, Z, obj, tc, theta0)
                            : train_vanilla(train_data, Z, obj, tc, theta0);
      std::ofstream traj(dir / ("seed_" + std::to_string(seed) + "_trajectory.csv"));
      traj << trajectory_csv(rep);
      out.entry["train"] = train_report_json(rep);
      out.entry["train_loss"] = std::isinf(rep.final_loss) ? nlohmann::json("inf")
                                                           : nlohmann::json(rep.final_loss);
      out.entry["eval"] = eval_theta(rep.theta, Z);
    } else if (cfg.trainer == "convex") {
      PrimitiveSet Z = experiment_primitive(cfg);
      auto res = train_convex_alpha(train_data, Z, obj, norm, loss, cfg.solver);
      if (res.status != SolveStatus::Optimal)
        throw std::runtime_error("convex trainer: " + to_string(res.status));
      out.entry["train"] = {{"alpha", res.alpha},
                            {"final_loss", res.train_loss},
                            {"theta", to_json(res.theta)}};
      out.entry["train_loss"] = res.train_loss;
      out.entry["eval"] = eval_theta(res.theta, Z);
    } else if (cfg.trainer == "milp") {
      BnbOptions bo;
      bo.solver = cfg.solver;
      auto res = train_milp_simplex(train_data, obj, cfg.p, loss, norm,
                                    cfg.milp_bounds_M, bo);
      if (res.status == SolveStatus::Infeasible ||
          res.status == SolveStatus::NumericalFailure)
        throw std::runtime_error("milp trainer: " + to_string(res.status));
      out.entry["train"] = {{"final_loss", res.train_loss},
                            {"mip_gap", res.mip_gap},
                            {"nodes", res.nodes_explored},
                            {"theta", to_json(res.theta)}};
      out.entry["train_loss"] = res.train_loss;
      out.entry["eval"] = eval_theta(res.theta, make_primitive(PrimitiveKind::Simplex, cfg.p));
    } else if (cfg.trainer == "network") {
      const PowerSystemSpec spec =
          cfg.generator.name == "ieee14" ? ieee14_spec() : power5_spec();
      std::vector<int> gen_nodes;
      for (int g = 0; g < spec.net.n_gen(); ++g)
        for (int r = 0; r < spec.net.num_nodes; ++r)
          if (spec.net.G(r, g) == 1.0) gen_nodes.push_back(r);
      NetworkModel cand = make_network(spec.net.num_nodes, gen_nodes,
                                       spec.net.capacity(0), spec.net.f_bar);
      const auto backend = cfg.network_backend == "enumeration"
                               ? NetworkBackend::Enumeration
                               : NetworkBackend::BranchAndBound;
      auto res = train_network_milp(train_data, cand, loss, norm, backend,
                                    cfg.solver);
      if (res.status != SolveStatus::Optimal)
        throw std::runtime_error("network trainer: " + to_string(res.status));
      const std::string tag = "seed_" + std::to_string(seed);
      std::ofstream edges(dir / (tag + "_edges.json"));
      edges << network_edge_list(cand, res.y).dump(2) << "\n";
      std::ofstream dot(dir / (tag + "_network.dot"));
      dot << network_dot(cand, res.y);
      out.entry["train"] = {{"final_loss", res.train_loss},
                            {"y", res.y},
                            {"configs_evaluated", res.configs_evaluated},
                            {"nodes", res.nodes_explored}};
      out.entry["train_loss"] = res.train_loss;
      const double ep = network_config_loss(split.test, cand, res.y,
                                            LossKind::Predictability, norm,
                                            cfg.solver);
      const double es = network_config_loss(split.test, cand, res.y,
                                            LossKind::Suboptimality, norm,
                                            cfg.solver);
      out.entry["eval"] = {{"est_pred", ep}, {"est_sub", es}};
    } else {  // regression
      auto fit = fit_regression_baseline(train_data);
      out.entry["train"] = {{"mse", fit.mse}, {"rank_deficient", fit.rank_deficient}};
      out.entry["train_loss"] = fit.mse;
      out.entry["eval"] =
          to_json(evaluate_regression(fit, norm, split.test, oracle, cfg.solver));
    }
    out.ok = true;
  } catch (const std::exception& ex) {
    out.entry["error"] = ex.what();
  }
  out.wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

void aggregate_metric(nlohmann::json& agg, const std::string& key,
                      const std::vector<double>& vals) {
  if (vals.empty()) return;
  double mean = 0.0;
  for (double v : vals) mean += v;
  mean /= static_cast<double>(vals.size());
  double var = 0.0;
  for (double v : vals) var += (v - mean) * (v - mean);
  var /= static_cast<double>(vals.size());
  agg[key] = {{"mean", mean}, {"std", std::sqrt(var)}};
}

}  // namespace

std::string run_experiment(const ExperimentConfig& cfg,
                           const std::string& out_dir) {
  cfg.validate();
  const std::filesystem::path dir = std::filesystem::path(out_dir) / cfg.name;
  std::filesystem::create_directories(dir);

  const int S = static_cast<int>(cfg.seeds.size());
  std::vector<SeedOutcome> outcomes(S);
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const int T = static_cast<int>(std::min<unsigned>(hw, S));
  auto work = [&](int t) {
    for (int i = t; i < S; i += T)
      outcomes[i] = run_seed(cfg, cfg.seeds[i], dir);
  };
  if (T == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < T; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }

  nlohmann::json report;
  report["config"] = to_json(cfg);
  report["config_hash"] = config_hash(cfg);
  bool ok = true;
  report["seeds"] = nlohmann::json::array();
  std::vector<double> train_losses, est_pred, est_sub, true_pred, true_sub;
  double wall = 0.0;
  for (const auto& o : outcomes) {
    report["seeds"].push_back(o.entry);
    ok = ok && o.ok;
    wall += o.wall;
    if (!o.ok) continue;
    if (o.entry["train_loss"].is_number())
      train_losses.push_back(o.entry["train_loss"].get<double>());
    const auto& ev = o.entry["eval"];
    if (ev.contains("est_pred") && ev["est_pred"].is_number())
      est_pred.push_back(ev["est_pred"].get<double>());
    if (ev.contains("est_sub") && ev["est_sub"].is_number())
      est_sub.push_back(ev["est_sub"].get<double>());
    if (ev.contains("true_pred") && ev["true_pred"].is_number())
      true_pred.push_back(ev["true_pred"].get<double>());
    if (ev.contains("true_sub") && ev["true_sub"].is_number())
      true_sub.push_back(ev["true_sub"].get<double>());
  }
  report["ok"] = ok;
  nlohmann::json agg;
  aggregate_metric(agg, "train_loss", train_losses);
  aggregate_metric(agg, "est_pred", est_pred);
  aggregate_metric(agg, "est_sub", est_sub);
  aggregate_metric(agg, "true_pred", true_pred);
  aggregate_metric(agg, "true_sub", true_sub);
  report["aggregate"] = agg;

  const std::string report_path = (dir / "report.json").string();
  {
    std::ofstream os(report_path);
    os << report.dump(2) << "\n";
  }
  {
    std::ofstream os(dir / "tables.csv");
    os << "metric,mean,std\n";
    os.precision(17);
    for (auto& [key, val] : agg.items())
      os << key << "," << val["mean"].get<double>() << ","
         << val["std"].get<double>() << "\n";
  }
  {
    // wall time kept out of report.json so identical configs reproduce
    // byte-identical reports
    std::ofstream os(dir / "timing.txt");
    os << wall << "\n";
  }
  return report_path;
}

}  // namespace invopt
