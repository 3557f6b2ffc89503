#include <catch_amalgamated.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <cstdint>
#include <random>
#include <vector>

#include "oracles.hpp"
#include "sbmkit/entropy.hpp"
#include "sbmkit/graphgen.hpp"
#include "sbmkit/hard_kmeans.hpp"
#include "sbmkit/pipeline.hpp"
#include "sbmkit/soft_sbm.hpp"

using namespace sbmkit;

#ifdef _OPENMP

namespace {

// Runs `work` under 1, 2, and 4 worker threads and requires bitwise equal
// results via `equal`. The functions under test chunk their reductions in a
// fixed order, so thread count must not leak into any output bit.
template <typename Work, typename Equal>
void require_thread_invariant(Work&& work, Equal&& equal) {
  int saved = omp_get_max_threads();
  omp_set_num_threads(1);
  auto base = work();
  for (int threads : {2, 4}) {
    omp_set_num_threads(threads);
    auto other = work();
    INFO("threads = " << threads);
    REQUIRE(equal(base, other));
  }
  omp_set_num_threads(saved);
}

}  // namespace

TEST_CASE("soft entropy and EM steps ignore thread count", "[property]") {
  std::mt19937_64 gen(3131);
  auto d = oracle::random_dataset(gen, 40, 30, 900, 4);
  SoftFitConfig cfg;
  cfg.k = 4;
  cfg.l = 3;
  cfg.sample_size = 6;
  cfg.rng.seed = 9;

  require_thread_invariant(
      [&] { return init_soft_model(d, cfg); },
      [](const SoftModel& a, const SoftModel& b) {
        return a.user_h == b.user_h && a.item_h == b.item_h && a.theta == b.theta;
      });

  SoftModel m = init_soft_model(d, cfg);
  require_thread_invariant([&] { return soft_entropy(m, d).nats; },
                           [](double a, double b) { return a == b; });
  require_thread_invariant(
      [&] { return mmsbm_step(m, d); },
      [](const SoftModel& a, const SoftModel& b) {
        return a.user_h == b.user_h && a.item_h == b.item_h && a.theta == b.theta;
      });
  require_thread_invariant(
      [&] { return mcmmsbm_step(m, d, cfg, 3); },
      [](const SoftModel& a, const SoftModel& b) {
        return a.user_h == b.user_h && a.item_h == b.item_h && a.theta == b.theta;
      });
}

TEST_CASE("hard fits ignore thread count", "[property]") {
  std::mt19937_64 gen(3232);
  SimpleGraph g = oracle::random_graph(gen, 60, 0.15);
  HardFitConfig cfg;
  cfg.k = 4;
  cfg.alpha = 0.3;
  cfg.max_iterations = 40;
  cfg.rng.seed = 12;

  require_thread_invariant(
      [&] { return hard_fit_graph(g, cfg); },
      [](const HardFitResult& a, const HardFitResult& b) {
        if (a.best_entropy != b.best_entropy) return false;
        if (a.clustering.assignment != b.clustering.assignment) return false;
        if (a.trace.size() != b.trace.size()) return false;
        for (std::size_t t = 0; t < a.trace.size(); ++t)
          if (a.trace[t].entropy != b.trace[t].entropy) return false;
        return true;
      });

  auto d = oracle::random_dataset(gen, 30, 25, 300, 5);
  HardFitConfig bcfg;
  bcfg.k = 3;
  bcfg.l = 3;
  bcfg.alpha = 0.4;
  bcfg.max_iterations = 30;
  bcfg.rng.seed = 21;
  require_thread_invariant(
      [&] { return hard_fit_bipartite(d, bcfg); },
      [](const BipartiteFitResult& a, const BipartiteFitResult& b) {
        return a.best_entropy == b.best_entropy &&
               a.model.user_assignment == b.model.user_assignment &&
               a.model.item_assignment == b.model.item_assignment;
      });
}

TEST_CASE("graph sampling and statistics ignore thread count", "[property]") {
  BlockModelSummary summary;
  summary.k = 3;
  summary.cluster_sizes = {40, 35, 25};
  summary.edge_probability = {0.30, 0.05, 0.02,  //
                              0.05, 0.40, 0.01,  //
                              0.02, 0.01, 0.50};
  summary.validate();
  RngSpec rng{31};

  require_thread_invariant(
      [&] { return regenerate(summary, rng, 4); },
      [](const SimpleGraph& a, const SimpleGraph& b) { return a.adjacency == b.adjacency; });

  SimpleGraph g = regenerate(summary, rng, 4);
  require_thread_invariant(
      [&] { return graph_stats(g, 50, rng); },
      [](const GraphStats& a, const GraphStats& b) {
        return a.gcc == b.gcc && a.apl == b.apl && a.apl_stderr == b.apl_stderr &&
               a.degree_histogram == b.degree_histogram;
      });
}

#else

TEST_CASE("thread invariance checks need OpenMP", "[property]") {
  SUCCEED("built without OpenMP; single-threaded by construction");
}

#endif
