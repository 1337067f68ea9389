// Command-line front end: training runs, benchmark data and fixtures.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "p2t2f/p2t2f.hpp"

namespace fs = std::filesystem;
using namespace p2t2f;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CommonFlags {
  std::string input;
  std::string format = "coo";
  std::string method = "p2t2f";
  std::string mode = "stochastic";
  std::size_t rank = 20;
  std::size_t workers = 1;
  double lambda_a = 0.01, lambda_b = 0.01, lambda_c = 0.01, lambda_0 = 0.01;
  double rho_b = 0.5, rho_c = 0.5;
  double tau0 = 0.0005, beta = 0.9, alpha = 0.0001;
  double eta = 0.01, eta_decay = 0.99;
  double init_scale = 0.1;
  std::size_t max_iter = 100;
  double rmse_threshold = 1e-4;
  std::uint64_t seed = 0;
  double test_fraction = 0.1;
  std::size_t min_ratings = 20;
  std::string out = ".";
};

void add_data_flags(CLI::App& cmd, CommonFlags& f) {
  cmd.add_option("--input", f.input, "ratings CSV or COO tensor file")->required();
  cmd.add_option("--format", f.format, "input format")->check(CLI::IsMember({"csv", "coo"}));
  cmd.add_option("--test-fraction", f.test_fraction, "held-out fraction")
      ->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--min-ratings", f.min_ratings, "minimum ratings per user (csv only)");
  cmd.add_option("--seed", f.seed, "seed for splitting, initialization and shuffling");
}

void add_model_flags(CLI::App& cmd, CommonFlags& f) {
  cmd.add_option("--method", f.method, "model")->check(CLI::IsMember({"p2t2f", "pttf", "cp"}));
  cmd.add_option("--mode", f.mode, "local update rule")
      ->check(CLI::IsMember({"stochastic", "batch"}));
  cmd.add_option("--rank", f.rank, "latent rank R")->check(CLI::PositiveNumber);
  cmd.add_option("--workers", f.workers, "parallel workers P")->check(CLI::PositiveNumber);
  cmd.add_option("--lambda-a", f.lambda_a)->check(CLI::NonNegativeNumber);
  cmd.add_option("--lambda-b", f.lambda_b)->check(CLI::NonNegativeNumber);
  cmd.add_option("--lambda-c", f.lambda_c)->check(CLI::NonNegativeNumber);
  cmd.add_option("--lambda-0", f.lambda_0)->check(CLI::NonNegativeNumber);
  cmd.add_option("--rho-b", f.rho_b)->check(CLI::NonNegativeNumber);
  cmd.add_option("--rho-c", f.rho_c)->check(CLI::NonNegativeNumber);
  cmd.add_option("--tau0", f.tau0)->check(CLI::PositiveNumber);
  cmd.add_option("--beta", f.beta)->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--alpha", f.alpha)->check(CLI::PositiveNumber);
  cmd.add_option("--eta", f.eta, "SGD learning rate (pttf, cp)")->check(CLI::PositiveNumber);
  cmd.add_option("--eta-decay", f.eta_decay, "per-epoch SGD rate decay")
      ->check(CLI::Range(0.0, 1.0));
  cmd.add_option("--init-scale", f.init_scale, "std dev of the initial factors")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--max-iter", f.max_iter)->check(CLI::PositiveNumber);
  cmd.add_option("--rmse-threshold", f.rmse_threshold)->check(CLI::PositiveNumber);
  cmd.add_option("--out", f.out, "output directory");
}

HyperParams hyperparams(const CommonFlags& f) {
  HyperParams hp;
  hp.lambda_A = f.lambda_a;
  hp.lambda_B = f.lambda_b;
  hp.lambda_C = f.lambda_c;
  hp.lambda_0 = f.lambda_0;
  hp.rho_B = f.rho_b;
  hp.rho_C = f.rho_c;
  hp.tau0 = f.tau0;
  hp.beta = f.beta;
  hp.alpha = f.alpha;
  hp.R = f.rank;
  hp.rmse_threshold = f.rmse_threshold;
  hp.init_scale = f.init_scale;
  return hp;
}

TrainOptions train_options(const CommonFlags& f) {
  TrainOptions o;
  o.workers = f.workers;
  o.mode = f.mode == "batch" ? UpdateMode::Batch : UpdateMode::Stochastic;
  o.max_iter = f.max_iter;
  o.seed = f.seed;
  return o;
}

SgdParams sgd_params(const CommonFlags& f) {
  SgdParams p;
  p.eta = f.eta;
  p.eta_decay = f.eta_decay;
  p.lambda_A = f.lambda_a;
  p.lambda_B = f.lambda_b;
  p.lambda_C = f.lambda_c;
  p.lambda_0 = f.lambda_0;
  p.R = f.rank;
  p.max_iter = f.max_iter;
  p.seed = f.seed;
  p.rmse_threshold = f.rmse_threshold;
  p.init_scale = f.init_scale;
  return p;
}

nlohmann::json config_json(const CommonFlags& f) {
  return {{"input", f.input},           {"format", f.format},
          {"method", f.method},         {"mode", f.mode},
          {"rank", f.rank},             {"workers", f.workers},
          {"lambda_a", f.lambda_a},     {"lambda_b", f.lambda_b},
          {"lambda_c", f.lambda_c},     {"lambda_0", f.lambda_0},
          {"rho_b", f.rho_b},           {"rho_c", f.rho_c},
          {"tau0", f.tau0},             {"beta", f.beta},
          {"alpha", f.alpha},           {"eta", f.eta},
          {"eta_decay", f.eta_decay},   {"init_scale", f.init_scale},
          {"max_iter", f.max_iter},     {"rmse_threshold", f.rmse_threshold},
          {"seed", f.seed},             {"test_fraction", f.test_fraction},
          {"min_ratings", f.min_ratings}};
}

struct Dataset {
  SparseTemporalTensor train;
  SparseTemporalTensor test;
  std::optional<IndexMaps> maps;
};

Dataset load_dataset(const CommonFlags& f) {
  RatingsConfig cfg;
  cfg.min_ratings_per_user = f.min_ratings;
  cfg.test_fraction = f.test_fraction;
  cfg.split_seed = f.seed;
  Dataset d;
  SparseTemporalTensor all;
  if (f.format == "csv") {
    auto loaded = load_ratings(f.input, cfg);
    all = std::move(loaded.tensor);
    d.maps = std::move(loaded.maps);
  } else {
    all = read_coo(f.input);
    require_valid(all);
  }
  std::tie(d.train, d.test) = train_test_split(all, cfg);
  return d;
}

TrainReport run_method(const CommonFlags& f, const Dataset& d) {
  if (f.method == "pttf") return pttf_sgd_train(d.train, &d.test, sgd_params(f));
  if (f.method == "cp") return cp_sgd_train(d.train, &d.test, sgd_params(f));
  return train(d.train, &d.test, hyperparams(f), train_options(f));
}

int cmd_train(const CommonFlags& f) {
  const Dataset d = load_dataset(f);
  const TrainReport r = run_method(f, d);
  fs::create_directories(f.out);
  write_report((fs::path(f.out) / "report.json").string(), r, config_json(f));
  write_matrix((fs::path(f.out) / "A.txt").string(), r.A);
  write_matrix((fs::path(f.out) / "B.txt").string(), r.B);
  write_matrix((fs::path(f.out) / "C.txt").string(), r.C);
  if (d.maps) {
    write_index_map((fs::path(f.out) / "users.csv").string(), d.maps->users);
    write_index_map((fs::path(f.out) / "items.csv").string(), d.maps->items);
    write_index_map((fs::path(f.out) / "months.csv").string(), d.maps->times);
  }
  std::printf("method=%s iterations=%zu converged=%s train_rmse=%.6f test_rmse=%.6f\n",
              r.method.c_str(), r.iteration_count(), r.converged ? "true" : "false",
              r.last().train_rmse, r.last().test_rmse);
  return 0;
}

int cmd_bench_speedup(const CommonFlags& f, std::vector<std::size_t> workers,
                      std::optional<double> target) {
  const Dataset d = load_dataset(f);
  const SpeedupReport rep =
      bench_speedup(d.train, hyperparams(f), train_options(f), std::move(workers), target);
  fs::create_directories(f.out);
  std::ofstream csv(fs::path(f.out) / "speedup.csv");
  write_speedup_csv(csv, rep);
  write_speedup_csv(std::cout, rep);
  if (rep.epoch_mode) std::cout << "# target not reached by every run; timings are per epoch\n";
  return 0;
}

int cmd_boxplot(const CommonFlags& f, std::size_t n_seeds) {
  const Dataset d = load_dataset(f);
  const auto rows = boxplot_data(d.train, d.test, hyperparams(f), train_options(f),
                                 sgd_params(f), sgd_params(f), n_seeds, f.seed);
  fs::create_directories(f.out);
  std::ofstream csv(fs::path(f.out) / "boxplot.csv");
  write_boxplot_csv(csv, rows);
  std::cout << "wrote " << rows.size() << " rows to " << (fs::path(f.out) / "boxplot.csv").string()
            << '\n';
  return 0;
}

int cmd_gen_synthetic(const SyntheticSpec& spec, const std::string& out) {
  const SyntheticData data = gen_synthetic(spec);
  fs::create_directories(out);
  write_coo((fs::path(out) / "tensor.coo").string(), data.tensor);
  write_matrix((fs::path(out) / "truth_A.txt").string(), data.truth.A);
  write_matrix((fs::path(out) / "truth_B.txt").string(), data.truth.B);
  write_matrix((fs::path(out) / "truth_C.txt").string(), data.truth.C);
  std::cout << "wrote " << data.tensor.nnz() << " entries to "
            << (fs::path(out) / "tensor.coo").string() << '\n';
  return 0;
}

int cmd_summarize(const CommonFlags& f) {
  const Dataset d = load_dataset(f);
  const DatasetSummary s = dataset_summary(d.train, d.test);
  const nlohmann::json j = {{"I", s.I},
                            {"J", s.J},
                            {"K", s.K},
                            {"train_count", s.train_count},
                            {"test_count", s.test_count},
                            {"density", s.density},
                            {"rating_min", s.rating_min},
                            {"rating_max", s.rating_max}};
  std::cout << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Parallel probabilistic temporal tensor factorization"};
  app.require_subcommand(1);

  CommonFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a model and write report + factors");
  add_data_flags(*train_cmd, train_flags);
  add_model_flags(*train_cmd, train_flags);

  CommonFlags bench_flags;
  std::vector<std::size_t> worker_list{1, 2, 4};
  std::optional<double> target_rmse;
  auto* bench_cmd = app.add_subcommand("bench-speedup", "time training across worker counts");
  add_data_flags(*bench_cmd, bench_flags);
  add_model_flags(*bench_cmd, bench_flags);
  bench_cmd->add_option("--workers-list", worker_list, "worker counts, must include 1")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  bench_cmd->add_option("--target-rmse", target_rmse, "train RMSE to time against");

  CommonFlags box_flags;
  std::size_t n_seeds = 12;
  auto* box_cmd = app.add_subcommand("boxplot", "final test RMSE per method and seed");
  add_data_flags(*box_cmd, box_flags);
  add_model_flags(*box_cmd, box_flags);
  box_cmd->add_option("--n-seeds", n_seeds)->check(CLI::Range(2, 100000));

  SyntheticSpec spec;
  std::string gen_out = ".";
  auto* gen_cmd = app.add_subcommand("gen-synthetic", "write a synthetic temporal tensor");
  gen_cmd->add_option("--I", spec.I)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--J", spec.J)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--K", spec.K)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--rank-true", spec.rank)->check(CLI::PositiveNumber);
  gen_cmd->add_option("--density", spec.density)->check(CLI::Range(0.0, 1.0));
  gen_cmd->add_option("--noise", spec.noise_sigma)->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--smoothness", spec.time_smoothness)->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--seed", spec.seed);
  gen_cmd->add_option("--out", gen_out, "output directory");

  CommonFlags sum_flags;
  auto* sum_cmd = app.add_subcommand("summarize", "dataset sizes after filtering and split");
  add_data_flags(*sum_cmd, sum_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  // parameter combinations the per-flag checks cannot see
  try {
    for (const CommonFlags* f : {&train_flags, &bench_flags, &box_flags}) {
      if ((f == &train_flags && !*train_cmd) || (f == &bench_flags && !*bench_cmd) ||
          (f == &box_flags && !*box_cmd))
        continue;
      hyperparams(*f).validate();
      sgd_params(*f).validate();
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    if (*train_cmd) return cmd_train(train_flags);
    if (*bench_cmd) return cmd_bench_speedup(bench_flags, worker_list, target_rmse);
    if (*box_cmd) return cmd_boxplot(box_flags, n_seeds);
    if (*gen_cmd) return cmd_gen_synthetic(spec, gen_out);
    if (*sum_cmd) return cmd_summarize(sum_flags);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
