#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "sbmkit/graphgen.hpp"
#include "sbmkit/hard_kmeans.hpp"
#include "sbmkit/rng.hpp"
#include "sbmkit/soft_sbm.hpp"
#include "sbmkit/types.hpp"

namespace sbmkit {

struct CvSplit {
  std::uint32_t fold_count = 5;
  std::vector<std::vector<std::uint32_t>> test_folds;  // disjoint, cover all indices
};

// Shuffles the observation indices once and deals them round-robin, so fold
// sizes differ by at most one.
inline CvSplit make_cv_split(std::uint32_t observation_count, std::uint32_t fold_count,
                             const RngSpec& rng) {
  if (fold_count < 2) throw std::invalid_argument("fold count must be >= 2");
  if (observation_count < fold_count)
    throw std::invalid_argument("fewer observations than folds");
  std::vector<std::uint32_t> order(observation_count);
  std::iota(order.begin(), order.end(), 0u);
  auto engine = rng.stream(stream_domain::kCvShuffle, 0, 0);
  for (std::uint32_t i = observation_count - 1; i > 0; --i) {
    std::uint32_t j = static_cast<std::uint32_t>(engine.below(i + 1));
    std::swap(order[i], order[j]);
  }
  CvSplit split;
  split.fold_count = fold_count;
  split.test_folds.assign(fold_count, {});
  for (std::uint32_t i = 0; i < observation_count; ++i)
    split.test_folds[i % fold_count].push_back(order[i]);
  return split;
}

// r~(u, v) = sum over ratings and cluster pairs of h_u h_v theta r; a convex
// combination of the alphabet, so it always lies in [min R, max R].
inline double predict_rating(const SoftModel& m, const std::vector<double>& alphabet,
                             std::uint32_t u, std::uint32_t v) {
  if (u >= m.user_count || v >= m.item_count) throw std::out_of_range("prediction endpoint");
  const double* hu = m.user_row(u);
  const double* hv = m.item_row(v);
  double value = 0.0;
  for (std::uint32_t i = 0; i < m.k; ++i) {
    if (hu[i] == 0.0) continue;
    for (std::uint32_t j = 0; j < m.l; ++j) {
      const double* slice = m.theta_slice(i, j);
      double inner = 0.0;
      for (std::uint32_t r = 0; r < m.rating_count; ++r) inner += slice[r] * alphabet[r];
      value += hu[i] * hv[j] * inner;
    }
  }
  return value;
}

inline double global_mean_rating(const BipartiteHardModel& m,
                                 const std::vector<double>& alphabet) {
  double sum = 0.0;
  std::int64_t total = 0;
  for (std::uint32_t i = 0; i < m.k; ++i)
    for (std::uint32_t j = 0; j < m.l; ++j) {
      for (std::uint32_t r = 0; r < m.rating_count; ++r)
        sum += static_cast<double>(m.count(i, j, r)) * alphabet[r];
      total += m.total(i, j);
    }
  return total > 0 ? sum / total : 0.0;
}

// Block-conditional mean rating; empty blocks fall back to the global mean.
inline double predict_rating_hard(const BipartiteHardModel& m,
                                  const std::vector<double>& alphabet, std::uint32_t u,
                                  std::uint32_t v) {
  std::uint32_t i = m.user_assignment[u];
  std::uint32_t j = m.item_assignment[v];
  std::int64_t total = m.total(i, j);
  if (total == 0) return global_mean_rating(m, alphabet);
  double sum = 0.0;
  for (std::uint32_t r = 0; r < m.rating_count; ++r)
    sum += static_cast<double>(m.count(i, j, r)) * alphabet[r];
  return sum / total;
}

inline double evaluate_rmse(const std::vector<double>& predictions,
                            const std::vector<double>& truths) {
  if (predictions.empty()) throw std::invalid_argument("empty test set");
  if (predictions.size() != truths.size())
    throw std::invalid_argument("prediction/truth size mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    double e = predictions[i] - truths[i];
    sq += e * e;
  }
  return std::sqrt(sq / predictions.size());
}

enum class CvMethod { mmsbm, mcmmsbm, hard };

struct CvConfig {
  std::uint32_t fold_count = 5;
  CvMethod method = CvMethod::mmsbm;
  SoftFitConfig soft;
  HardFitConfig hard;
  RngSpec rng;  // drives the fold shuffle; fits use their own configs
};

struct CvResult {
  std::vector<double> fold_rmse;
  double mean_rmse = 0.0;
  std::vector<FitTrace> traces;            // per-fold training traces
  std::vector<double> training_entropies;  // per-fold best entropy
};

inline CvResult run_cv(const RatingDataset& data, const CvConfig& cfg) {
  CvSplit split = make_cv_split(static_cast<std::uint32_t>(data.observations.size()),
                                cfg.fold_count, cfg.rng);
  CvResult result;
  for (std::uint32_t f = 0; f < cfg.fold_count; ++f) {
    std::vector<std::uint8_t> in_test(data.observations.size(), 0);
    for (auto idx : split.test_folds[f]) in_test[idx] = 1;
    std::vector<std::uint32_t> train_indices;
    train_indices.reserve(data.observations.size() - split.test_folds[f].size());
    for (std::uint32_t i = 0; i < data.observations.size(); ++i)
      if (!in_test[i]) train_indices.push_back(i);
    RatingDataset train = data.subset(train_indices);

    double train_mean = 0.0;
    for (const auto& o : train.observations) train_mean += train.rating_value(o);
    train_mean /= train.observations.size();

    std::vector<double> predictions, truths;
    predictions.reserve(split.test_folds[f].size());
    truths.reserve(split.test_folds[f].size());

    auto cold = [&](const Observation& o) {
      return train.by_user[o.user].empty() || train.by_item[o.item].empty();
    };

    if (cfg.method == CvMethod::hard) {
      auto fit = hard_fit_bipartite(train, cfg.hard);
      result.traces.push_back(fit.trace);
      result.training_entropies.push_back(fit.best_entropy);
      for (auto idx : split.test_folds[f]) {
        const Observation& o = data.observations[idx];
        predictions.push_back(cold(o) ? train_mean
                                      : predict_rating_hard(fit.model, data.rating_alphabet,
                                                            o.user, o.item));
        truths.push_back(data.rating_value(o));
      }
    } else {
      auto fit = fit_soft(train, cfg.soft,
                          cfg.method == CvMethod::mmsbm ? SoftVariant::exact
                                                        : SoftVariant::montecarlo);
      result.traces.push_back(fit.trace);
      result.training_entropies.push_back(fit.best_entropy);
      for (auto idx : split.test_folds[f]) {
        const Observation& o = data.observations[idx];
        predictions.push_back(cold(o) ? train_mean
                                      : predict_rating(fit.model, data.rating_alphabet,
                                                       o.user, o.item));
        truths.push_back(data.rating_value(o));
      }
    }
    result.fold_rmse.push_back(evaluate_rmse(predictions, truths));
  }
  result.mean_rmse = std::accumulate(result.fold_rmse.begin(), result.fold_rmse.end(), 0.0) /
                     result.fold_rmse.size();
  return result;
}

struct AnonymizationReport {
  std::uint32_t k = 0;
  double fitted_entropy = 0.0;
  double random_entropy = 0.0;
  GraphStats original;
  std::vector<GraphStats> generations;  // exactly kGenerationCount entries
  double apl_mean = 0.0, apl_stderr = 0.0;
  double gcc_mean = 0.0, gcc_stderr = 0.0;
  std::vector<std::uint32_t> assignment;  // fitted clustering
  BlockModelSummary summary;              // regeneration input, reusable downstream
};

struct AnonymizationConfig {
  std::vector<std::uint32_t> k_list;
  HardFitConfig hard;
  std::uint32_t apl_sources = 1000;
  RngSpec rng;
};

inline constexpr std::uint32_t kGenerationCount = 5;

inline std::vector<AnonymizationReport> run_anonymization(const SimpleGraph& g,
                                                          const AnonymizationConfig& cfg) {
  if (cfg.k_list.empty()) throw std::invalid_argument("empty k list");
  std::vector<AnonymizationReport> reports;
  GraphStats original = graph_stats(g, cfg.apl_sources, cfg.rng);

  for (auto k : cfg.k_list) {
    AnonymizationReport rep;
    rep.k = k;
    rep.original = original;

    HardFitConfig hard = cfg.hard;
    hard.k = k;
    auto fit = hard_fit_graph(g, hard);
    rep.fitted_entropy = fit.best_entropy;

    std::vector<std::uint32_t> random_assignment(g.n);
    for (std::uint32_t v = 0; v < g.n; ++v) {
      auto rng = cfg.rng.stream(stream_domain::kRandomBaseline, k, v);
      random_assignment[v] = static_cast<std::uint32_t>(rng.below(k));
    }
    rep.random_entropy =
        hard_entropy(HardClustering::from_assignment(g, random_assignment, k));

    rep.assignment = fit.clustering.assignment;
    rep.summary = BlockModelSummary::from_clustering(fit.clustering);
    for (std::uint32_t gen = 1; gen <= kGenerationCount; ++gen) {
      SimpleGraph sample = regenerate(rep.summary, hard.rng, gen);
      rep.generations.push_back(graph_stats(sample, cfg.apl_sources, cfg.rng));
    }

    auto aggregate = [](const std::vector<GraphStats>& stats, auto select, double& mean,
                        double& stderr_out) {
      double sum = 0.0;
      for (const auto& s : stats) sum += select(s);
      mean = sum / stats.size();
      double var = 0.0;
      for (const auto& s : stats) var += (select(s) - mean) * (select(s) - mean);
      var = stats.size() > 1 ? var / (stats.size() - 1) : 0.0;
      stderr_out = std::sqrt(var / stats.size());
    };
    aggregate(rep.generations, [](const GraphStats& s) { return s.apl; }, rep.apl_mean,
              rep.apl_stderr);
    aggregate(rep.generations, [](const GraphStats& s) { return s.gcc; }, rep.gcc_mean,
              rep.gcc_stderr);
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace sbmkit
