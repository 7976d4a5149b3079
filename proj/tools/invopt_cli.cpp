// Command-line front end: dataset generation, training, evaluation and the
// experiment runner. Exit codes: 0 success, 2 configuration error, 3 solver
// or pipeline failure.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "invopt/bench.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitSolver = 3;

nlohmann::json load_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot open " + path);
  return nlohmann::json::parse(is);
}

struct CommonFlags {
  std::string config_path;
  std::string out_dir = ".";
  int seed = -1;  // <0: keep the config's seeds
  std::string trainer, loss, norm;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool config_required) {
  auto* opt = cmd->add_option("--config", f.config_path,
                              "experiment config JSON file");
  if (config_required) opt->required();
  cmd->add_option("--out-dir", f.out_dir, "output directory");
  cmd->add_option("--seed", f.seed, "seed override (single seed)");
  cmd->add_option("--trainer", f.trainer, "trainer override")
      ->check(CLI::IsMember({"vanilla", "smoothed", "convex", "milp", "network",
                             "regression"}));
  cmd->add_option("--loss", f.loss, "loss override")
      ->check(CLI::IsMember({"pred", "sub"}));
  cmd->add_option("--norm", f.norm, "norm override")
      ->check(CLI::IsMember({"l1", "l2", "l2sq", "linf"}));
}

invopt::ExperimentConfig resolve_config(const CommonFlags& f) {
  invopt::ExperimentConfig cfg;
  if (!f.config_path.empty())
    cfg = invopt::experiment_from_json(load_json(f.config_path));
  if (!f.trainer.empty()) cfg.trainer = f.trainer;
  if (!f.loss.empty()) cfg.loss = f.loss;
  if (!f.norm.empty()) cfg.norm = f.norm;
  if (f.seed >= 0) cfg.seeds = {static_cast<unsigned>(f.seed)};
  cfg.validate();
  return cfg;
}

int run_generate(const CommonFlags& f) {
  invopt::ExperimentConfig cfg = resolve_config(f);
  const unsigned seed = cfg.seeds.front();
  invopt::SplitDataset split =
      invopt::generate(cfg.generator, cfg.n_train, cfg.n_test, seed);
  if (cfg.noise_std > 0)
    split.train = invopt::add_noise(split.train, cfg.noise_std, seed + 1000);
  std::filesystem::create_directories(f.out_dir);
  const auto dir = std::filesystem::path(f.out_dir);
  invopt::write_dataset(split.train, (dir / "train").string(), &cfg.generator);
  invopt::write_dataset(split.test, (dir / "test").string(), &cfg.generator);
  std::cout << "wrote " << (dir / "train.csv").string() << " ("
            << split.train.size() << " samples) and "
            << (dir / "test.csv").string() << " (" << split.test.size()
            << " samples)\n";
  return kExitOk;
}

int run_pipeline(const CommonFlags& f, bool single_seed) {
  invopt::ExperimentConfig cfg = resolve_config(f);
  if (single_seed) cfg.seeds.resize(1);
  const std::string path = invopt::run_experiment(cfg, f.out_dir);
  nlohmann::json report = load_json(path);
  std::cout << "report: " << path << "\n";
  if (report.contains("aggregate"))
    for (auto& [metric, stats] : report["aggregate"].items())
      std::cout << "  " << metric << ": " << stats["mean"].get<double>()
                << " +/- " << stats["std"].get<double>() << "\n";
  if (!report.value("ok", false)) {
    for (const auto& entry : report["seeds"])
      if (entry.contains("error"))
        std::cerr << "seed " << entry.value("seed", 0u)
                  << " failed: " << entry["error"].get<std::string>() << "\n";
    return kExitSolver;
  }
  return kExitOk;
}

int run_evaluate(const CommonFlags& f, const std::string& theta_path,
                 const std::string& data_stem) {
  invopt::ExperimentConfig cfg = resolve_config(f);
  invopt::HypothesisParams theta =
      invopt::hypothesis_from_json(load_json(theta_path));
  invopt::IODataset data = invopt::read_dataset(data_stem);
  invopt::PrimitiveSet Z = invopt::make_primitive(
      invopt::primitive_kind_from_string(cfg.primitive), cfg.p,
      cfg.primitive_scale);
  invopt::EvalReport rep = invopt::evaluate(
      theta, Z, invopt::generator_objective(cfg.generator),
      invopt::NormSpec{invopt::norm_from_string(cfg.norm)}, data,
      data.oracle.get(), cfg.solver);
  std::cout << invopt::to_json(rep).dump(2) << "\n";
  return kExitOk;
}

int run_report(const std::string& report_path) {
  nlohmann::json report = load_json(report_path);
  std::cout << "config: " << report["config"].value("name", std::string{})
            << "  hash: " << report.value("config_hash", std::string{})
            << "  ok: " << (report.value("ok", false) ? "yes" : "no") << "\n";
  std::printf("%-12s %16s %16s\n", "metric", "mean", "std");
  for (auto& [metric, stats] : report["aggregate"].items())
    std::printf("%-12s %16.9g %16.9g\n", metric.c_str(),
                stats["mean"].get<double>(), stats["std"].get<double>());
  for (const auto& entry : report["seeds"])
    if (entry.contains("error"))
      std::cout << "seed " << entry.value("seed", 0u)
                << " error: " << entry["error"].get<std::string>() << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"inverse-optimization trainer and benchmark runner"};
  app.require_subcommand(1);

  CommonFlags gen_f, train_f, eval_f, exp_f;
  std::string theta_path, data_stem, report_path;

  auto* gen = app.add_subcommand("generate", "write a train/test dataset pair");
  add_common(gen, gen_f, true);

  auto* train = app.add_subcommand("train", "train one seed and report");
  add_common(train, train_f, true);

  auto* eval = app.add_subcommand("evaluate",
                                  "score a stored hypothesis on a dataset");
  add_common(eval, eval_f, true);
  eval->add_option("--theta", theta_path, "hypothesis JSON file")->required();
  eval->add_option("--data", data_stem, "dataset stem (without .csv/.json)")
      ->required();

  auto* exp = app.add_subcommand("experiment", "run all configured seeds");
  add_common(exp, exp_f, true);

  auto* rep = app.add_subcommand("report", "summarize a report JSON");
  rep->add_option("--report", report_path, "report.json path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return run_generate(gen_f);
    if (train->parsed()) return run_pipeline(train_f, /*single_seed=*/true);
    if (eval->parsed()) return run_evaluate(eval_f, theta_path, data_stem);
    if (exp->parsed()) return run_pipeline(exp_f, /*single_seed=*/false);
    if (rep->parsed()) return run_report(report_path);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitSolver;
  }
  return kExitConfig;
}
