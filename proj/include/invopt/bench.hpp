#pragma once

#include <Eigen/Dense>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "invopt/dataset.hpp"
#include "invopt/losses.hpp"
#include "invopt/train_bcd.hpp"
#include "invopt/train_exact.hpp"

namespace invopt {

/// Disjoint train/test splits drawn with distinct sub-seeds.
struct SplitDataset {
  IODataset train;
  IODataset test;
};

/// Generator selector plus its parameters; the params object is what the
/// dataset sidecar stores so a file round-trip can rebuild the oracle.
/// Known names: "toy", "l1", "power5", "ieee14".
struct GeneratorSpec {
  std::string name;
  nlohmann::json params = nlohmann::json::object();
};

/// The known linear objective c(s)'x each generator's data obeys.
ObjectiveSpec generator_objective(const GeneratorSpec& spec);

/// True-problem oracle for the generator (clean problem, independent of any
/// noise later applied to decisions).
std::shared_ptr<const TrueProblemOracle> make_oracle(const GeneratorSpec& spec);

SplitDataset generate(const GeneratorSpec& spec, int N_train, int N_test,
                      unsigned seed);

/// Toy dispatch (two generators): min s x1 + (1-s) x2 over x1 + x2 = 1,
/// x in [0, 2]^2, s ~ U[0, 1]; decisions follow the vertex policy.
SplitDataset gen_toy(int N_train, int N_test, unsigned seed);

/// Synthetic L1-ball problem: min c'x over ||x - e||_1 <= h with the costs as
/// signals, c_j ~ U[cost_lo, cost_hi]; decisions are the unique optimal
/// vertices (argmax ties redrawn and counted in meta.regenerated).
SplitDataset gen_synthetic_l1(int n, double cost_lo, double cost_hi,
                              const Eigen::VectorXd& e, double h, int N_train,
                              int N_test, unsigned seed);

/// The closed-form optimal vertex e - h sign(c_j*) e_j*, j* = argmax |c_j|.
Eigen::VectorXd l1_vertex(const Eigen::VectorXd& c, const Eigen::VectorXd& e,
                          double h);

/// Power-system generators: dispatch LP over a fixed topology; decisions are
/// the plant outputs only (flows stay latent), signals are
/// [plant costs, nodal demands].
struct PowerSystemSpec {
  NetworkModel net;  // true topology with explicit lines
  std::vector<std::pair<double, double>> cost_ranges;    // per plant
  std::vector<std::pair<double, double>> demand_ranges;  // per node
  std::string name;
};

/// 5 regions, plants at nodes 1/3/5 (1-indexed), C_n = 3.5, f_bar = 3.5, and
/// the documented default ring topology 1-2-3-4-5-1 (the reference figure is
/// not enumerated in text; any topology can be substituted via gen_power).
PowerSystemSpec power5_spec();

/// IEEE 14-bus: plants at nodes 2/8/13, C_n = 3.6, f_bar = 3, standard
/// 20-branch topology.
PowerSystemSpec ieee14_spec();

SplitDataset gen_power(const PowerSystemSpec& spec, int N_train, int N_test,
                       unsigned seed);
SplitDataset gen_power5(int N_train = 100, int N_test = 200, unsigned seed = 0);
SplitDataset gen_ieee14(int N_train = 100, int N_test = 200, unsigned seed = 0);

/// iid Gaussian N(0, std^2) on each decision coordinate; signals and the
/// oracle untouched.
IODataset add_noise(const IODataset& data, double std, unsigned seed);

/// CSV (header s_1..s_K, x_1..x_n, 17 significant digits) plus a JSON
/// sidecar: writes <stem>.csv and <stem>.json. When `spec` is given it is
/// embedded so read_dataset can rebuild the oracle.
void write_dataset(const IODataset& data, const std::string& stem,
                   const GeneratorSpec* spec = nullptr);
IODataset read_dataset(const std::string& stem);

// ---------------------------------------------------------------------------
// Experiment runner
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  std::string name = "experiment";
  GeneratorSpec generator;
  int n_train = 100;
  int n_test = 200;
  double noise_std = 0.0;  // training decisions only
  std::string trainer = "smoothed";  // vanilla|smoothed|convex|milp|network|regression
  std::string loss = "pred";         // pred|sub
  std::string norm = "l2sq";         // l1|l2|l2sq|linf
  std::string primitive = "simplex";  // simplex|box|l1_ball|l2_ball
  int p = 3;                          // hypothesis dimension
  double primitive_scale = 1.0;       // radius for ball kinds
  int max_iters = 500;
  double milp_bounds_M = 10.0;
  std::string network_backend = "branch_and_bound";  // or "enumeration"
  std::vector<unsigned> seeds{0};
  SolveOptions solver;

  void validate() const;  // throws std::invalid_argument
};

nlohmann::json to_json(const ExperimentConfig& cfg);
ExperimentConfig experiment_from_json(const nlohmann::json& j);
std::string config_hash(const ExperimentConfig& cfg);  // FNV-1a of the dump

/// Runs every seed (in parallel, merged in seed order), writes
/// <out_dir>/<name>/report.json plus tables.csv, per-seed trajectory CSVs and
/// (for network runs) the edge-list/DOT exports. Returns the report path.
/// Per-seed failures are recorded in the report's error section; the report
/// carries "ok": false in that case.
std::string run_experiment(const ExperimentConfig& cfg,
                           const std::string& out_dir);

}  // namespace invopt
