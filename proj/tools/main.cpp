// Command-line front end: fit-soft, fit-hard, recommend, anonymize, stats.
// Exit codes: 0 success, 1 I/O or parse failure, 2 invalid configuration.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <CLI11.hpp>

#include "sbmkit/io.hpp"
#include "sbmkit/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct CommonArgs {
  std::string input;
  std::string output_dir = "out";
  std::uint64_t seed = 1;
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--input", args.input, "input data file")->required();
  cmd->add_option("--output-dir", args.output_dir,
                  "directory for artifacts, created if absent");
  cmd->add_option("--seed", args.seed, "RNG seed; fixes all randomness");
  cmd->add_option("--threads", args.threads,
                  "worker threads (0 = hardware default); results do not depend on it");
}

void apply_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

fs::path prepare_output(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw sbmkit::IoError("cannot create output directory " + dir + ": " + ec.message());
  return p;
}

sbmkit::SoftVariant parse_variant(const std::string& name) {
  if (name == "exact" || name == "mmsbm") return sbmkit::SoftVariant::exact;
  if (name == "mc" || name == "mcmmsbm") return sbmkit::SoftVariant::montecarlo;
  throw std::invalid_argument("unknown variant '" + name + "' (expected exact|mc)");
}

int cmd_fit_soft(const CommonArgs& common, const sbmkit::SoftFitConfig& cfg,
                 const std::string& variant_name) {
  sbmkit::SoftVariant variant = parse_variant(variant_name);
  sbmkit::SoftFitConfig cfg_checked = cfg;
  cfg_checked.rng.seed = common.seed;
  cfg_checked.validate();
  apply_threads(common.threads);

  sbmkit::RatingDataset data = sbmkit::load_ratings(common.input);
  fs::path out = prepare_output(common.output_dir);
  auto result = sbmkit::fit_soft(data, cfg_checked, variant);
  sbmkit::write_soft_model(result.model, data.rating_alphabet, (out / "model.json").string());
  sbmkit::write_trace_csv(result.trace, (out / "trace.csv").string());
  std::printf("entropy %.6f after %u iterations\n", result.best_entropy,
              result.trace.back().iteration);
  return 0;
}

int cmd_fit_hard(const CommonArgs& common, const sbmkit::HardFitConfig& cfg,
                 const std::string& mode) {
  sbmkit::HardFitConfig cfg_checked = cfg;
  cfg_checked.rng.seed = common.seed;
  cfg_checked.validate();
  apply_threads(common.threads);
  fs::path out = prepare_output(common.output_dir);

  if (mode == "graph") {
    sbmkit::SimpleGraph g = sbmkit::load_graph(common.input);
    auto result = sbmkit::hard_fit_graph(g, cfg_checked);
    sbmkit::write_assignment(result.clustering.assignment, (out / "assignment.txt").string());
    sbmkit::write_trace_csv(result.trace, (out / "trace.csv").string());
    std::printf("entropy %.6f after %u iterations\n", result.best_entropy,
                result.trace.back().iteration);
    return 0;
  }
  if (mode == "bipartite") {
    sbmkit::RatingDataset data = sbmkit::load_ratings(common.input);
    auto result = sbmkit::hard_fit_bipartite(data, cfg_checked);
    sbmkit::write_assignment(result.model.user_assignment,
                             (out / "user_assignment.txt").string());
    sbmkit::write_assignment(result.model.item_assignment,
                             (out / "item_assignment.txt").string());
    sbmkit::write_trace_csv(result.trace, (out / "trace.csv").string());
    std::printf("entropy %.6f after %u iterations\n", result.best_entropy,
                result.trace.back().iteration);
    return 0;
  }
  throw std::invalid_argument("unknown mode '" + mode + "' (expected graph|bipartite)");
}

int cmd_recommend(const CommonArgs& common, sbmkit::CvConfig cfg,
                  const std::string& method_name) {
  if (method_name == "mmsbm" || method_name == "exact")
    cfg.method = sbmkit::CvMethod::mmsbm;
  else if (method_name == "mc" || method_name == "mcmmsbm")
    cfg.method = sbmkit::CvMethod::mcmmsbm;
  else if (method_name == "hard")
    cfg.method = sbmkit::CvMethod::hard;
  else
    throw std::invalid_argument("unknown method '" + method_name +
                                "' (expected mmsbm|mc|hard)");
  cfg.rng.seed = common.seed;
  cfg.soft.rng.seed = common.seed;
  cfg.hard.rng.seed = common.seed;
  if (cfg.fold_count < 2) throw std::invalid_argument("fold count must be >= 2");
  cfg.soft.validate();
  cfg.hard.validate();
  apply_threads(common.threads);

  sbmkit::RatingDataset data = sbmkit::load_ratings(common.input);
  fs::path out = prepare_output(common.output_dir);
  auto result = sbmkit::run_cv(data, cfg);

  auto rmse_file = sbmkit::detail::open_output((out / "rmse.csv").string());
  rmse_file << "fold,rmse\n";
  char buf[64];
  for (std::size_t f = 0; f < result.fold_rmse.size(); ++f) {
    std::snprintf(buf, sizeof(buf), "%zu,%.6f\n", f, result.fold_rmse[f]);
    rmse_file << buf;
  }
  std::snprintf(buf, sizeof(buf), "mean,%.6f\n", result.mean_rmse);
  rmse_file << buf;
  for (std::size_t f = 0; f < result.traces.size(); ++f)
    sbmkit::write_trace_csv(result.traces[f],
                            (out / ("trace_fold" + std::to_string(f) + ".csv")).string());
  std::printf("mean rmse %.6f over %u folds\n", result.mean_rmse, cfg.fold_count);
  return 0;
}

int cmd_anonymize(const CommonArgs& common, sbmkit::AnonymizationConfig cfg) {
  cfg.rng.seed = common.seed;
  cfg.hard.rng.seed = common.seed;
  cfg.hard.validate();
  if (cfg.k_list.empty()) throw std::invalid_argument("--k-list must name at least one k");
  for (auto k : cfg.k_list)
    if (k < 1) throw std::invalid_argument("k values must be >= 1");
  apply_threads(common.threads);

  sbmkit::SimpleGraph g = sbmkit::load_graph(common.input);
  fs::path out = prepare_output(common.output_dir);
  auto reports = sbmkit::run_anonymization(g, cfg);

  for (const auto& rep : reports) {
    std::string suffix = "_k" + std::to_string(rep.k);
    sbmkit::write_assignment(rep.assignment, (out / ("assignment" + suffix + ".txt")).string());
    for (std::uint32_t gen = 1; gen <= sbmkit::kGenerationCount; ++gen) {
      sbmkit::SimpleGraph sample = sbmkit::regenerate(rep.summary, cfg.hard.rng, gen);
      sbmkit::write_edge_list(
          sample, (out / ("regen" + suffix + "_g" + std::to_string(gen) + ".txt")).string());
    }
    nlohmann::json j;
    j["k"] = rep.k;
    j["fitted_entropy"] = rep.fitted_entropy;
    j["random_entropy"] = rep.random_entropy;
    j["original"] = sbmkit::graph_stats_json(rep.original);
    nlohmann::json gens = nlohmann::json::array();
    for (const auto& st : rep.generations) gens.push_back(sbmkit::graph_stats_json(st));
    j["generations"] = gens;
    j["apl_mean"] = rep.apl_mean;
    j["apl_stderr"] = rep.apl_stderr;
    j["gcc_mean"] = rep.gcc_mean;
    j["gcc_stderr"] = rep.gcc_stderr;
    auto jf = sbmkit::detail::open_output((out / ("report" + suffix + ".json")).string());
    jf << j.dump(2) << '\n';
    std::printf("k=%u entropy %.2f (random %.2f) apl %.4f+-%.4f gcc %.6f+-%.6f\n", rep.k,
                rep.fitted_entropy, rep.random_entropy, rep.apl_mean, rep.apl_stderr,
                rep.gcc_mean, rep.gcc_stderr);
  }
  return 0;
}

int cmd_stats(const CommonArgs& common, std::uint32_t apl_sources,
              const std::string& output_file) {
  apply_threads(common.threads);
  sbmkit::SimpleGraph g = sbmkit::load_graph(common.input);
  sbmkit::RngSpec rng{common.seed};
  sbmkit::GraphStats st = sbmkit::graph_stats(g, apl_sources, rng);
  nlohmann::json j = sbmkit::graph_stats_json(st);
  std::printf("%s\n", j.dump(2).c_str());
  if (!output_file.empty()) {
    auto out = sbmkit::detail::open_output(output_file);
    out << j.dump(2) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"stochastic block model clustering toolkit"};
  app.require_subcommand(1);

  CommonArgs soft_common, hard_common, rec_common, anon_common, stats_common;

  auto* fit_soft = app.add_subcommand("fit-soft", "fit a soft mixed-membership block model");
  sbmkit::SoftFitConfig soft_cfg;
  std::string variant = "exact";
  add_common(fit_soft, soft_common);
  fit_soft->add_option("--k", soft_cfg.k, "user clusters (>= 1)");
  fit_soft->add_option("--l", soft_cfg.l, "item clusters (>= 1)");
  fit_soft->add_option("--variant", variant, "exact | mc");
  fit_soft->add_option("--s", soft_cfg.sample_size, "Monte-Carlo samples per observation (>= 1)");
  fit_soft->add_option("--max-iterations", soft_cfg.max_iterations, "iteration cap");
  fit_soft->add_option("--time-budget", soft_cfg.time_budget_seconds,
                       "wall-clock budget in seconds (0 = none)");
  fit_soft->add_option("--convergence-tol", soft_cfg.convergence_tol,
                       "relative entropy change threshold (> 0)");
  fit_soft->add_option("--entropy-every", soft_cfg.entropy_every,
                       "evaluate entropy every N iterations (>= 1)");

  auto* fit_hard = app.add_subcommand("fit-hard", "fit a hard clustering");
  sbmkit::HardFitConfig hard_cfg;
  std::string mode = "graph";
  add_common(fit_hard, hard_common);
  fit_hard->add_option("--mode", mode, "graph | bipartite");
  fit_hard->add_option("--k", hard_cfg.k, "clusters (>= 1)");
  fit_hard->add_option("--l", hard_cfg.l, "item clusters, bipartite mode (>= 1)");
  fit_hard->add_option("--alpha", hard_cfg.alpha, "fraction reassigned per iteration, in (0, 1]");
  fit_hard->add_option("--max-iterations", hard_cfg.max_iterations, "iteration cap");
  fit_hard->add_option("--convergence-tol", hard_cfg.convergence_tol,
                       "relative entropy change threshold (> 0)");

  auto* recommend = app.add_subcommand("recommend", "cross-validated rating prediction");
  sbmkit::CvConfig cv_cfg;
  std::string method = "mmsbm";
  add_common(recommend, rec_common);
  recommend->add_option("--method", method, "mmsbm | mc | hard");
  recommend->add_option("--folds", cv_cfg.fold_count, "cross-validation folds (>= 2)");
  recommend->add_option("--k", cv_cfg.soft.k, "user clusters (>= 1)");
  recommend->add_option("--l", cv_cfg.soft.l, "item clusters (>= 1)");
  recommend->add_option("--s", cv_cfg.soft.sample_size,
                        "Monte-Carlo samples per observation (>= 1)");
  recommend->add_option("--alpha", cv_cfg.hard.alpha,
                        "hard method: fraction reassigned per iteration, in (0, 1]");
  recommend->add_option("--max-iterations", cv_cfg.soft.max_iterations, "iteration cap");
  recommend->add_option("--time-budget", cv_cfg.soft.time_budget_seconds,
                        "per-fold wall-clock budget in seconds (0 = none)");
  recommend->add_option("--convergence-tol", cv_cfg.soft.convergence_tol,
                        "relative entropy change threshold (> 0)");
  recommend->add_option("--entropy-every", cv_cfg.soft.entropy_every,
                        "evaluate entropy every N iterations (>= 1)");

  auto* anonymize = app.add_subcommand("anonymize", "fit, regenerate, and compare statistics");
  sbmkit::AnonymizationConfig anon_cfg;
  add_common(anonymize, anon_common);
  anonymize->add_option("--k-list", anon_cfg.k_list, "cluster counts, e.g. 25,50,100")
      ->delimiter(',');
  anonymize->add_option("--alpha", anon_cfg.hard.alpha,
                        "fraction reassigned per iteration, in (0, 1]");
  anonymize->add_option("--max-iterations", anon_cfg.hard.max_iterations, "iteration cap");
  anonymize->add_option("--convergence-tol", anon_cfg.hard.convergence_tol,
                        "relative entropy change threshold (> 0)");
  anonymize->add_option("--apl-sources", anon_cfg.apl_sources,
                        "BFS sources for APL estimation (>= 1)");

  auto* stats = app.add_subcommand("stats", "graph statistics (APL, GCC, degrees)");
  std::uint32_t apl_sources = 1000;
  std::string stats_output;
  add_common(stats, stats_common);
  stats->add_option("--apl-sources", apl_sources, "BFS sources for APL estimation (>= 1)");
  stats->add_option("--output", stats_output, "also write the JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (fit_soft->parsed()) return cmd_fit_soft(soft_common, soft_cfg, variant);
    if (fit_hard->parsed()) return cmd_fit_hard(hard_common, hard_cfg, mode);
    if (recommend->parsed()) {
      cv_cfg.hard.k = cv_cfg.soft.k;
      cv_cfg.hard.l = cv_cfg.soft.l;
      cv_cfg.hard.max_iterations = cv_cfg.soft.max_iterations;
      cv_cfg.hard.convergence_tol = cv_cfg.soft.convergence_tol;
      return cmd_recommend(rec_common, cv_cfg, method);
    }
    if (anonymize->parsed()) return cmd_anonymize(anon_common, anon_cfg);
    if (stats->parsed()) {
      if (apl_sources < 1) throw std::invalid_argument("--apl-sources must be >= 1");
      return cmd_stats(stats_common, apl_sources, stats_output);
    }
  } catch (const sbmkit::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::invalid_argument& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return 2;
  } catch (const std::out_of_range& e) {
    std::fprintf(stderr, "invalid configuration: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
