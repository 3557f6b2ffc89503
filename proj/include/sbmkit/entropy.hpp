#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "sbmkit/types.hpp"

namespace sbmkit {

// Observations are split into fixed-size chunks and partial sums are merged
// in chunk order, so floating-point results do not depend on thread count.
inline constexpr std::size_t kReductionChunk = 4096;

// Block entropy contribution (x+y)ln(x+y) - x ln x - y ln y, with the
// 0 ln 0 = 0 convention: zero whenever either argument is zero.
inline double entropy_term(double x, double y) {
  if (x < 0.0 || y < 0.0) throw std::domain_error("entropy_term: negative argument");
  if (x == 0.0 || y == 0.0) return 0.0;
  return (x + y) * std::log(x + y) - x * std::log(x) - y * std::log(y);
}

// Negative Bernoulli log-likelihood of the graph under the block MLE, in nats.
inline double hard_entropy(const HardClustering& c) {
  double s = 0.0;
  for (std::uint32_t i = 0; i < c.k; ++i)
    for (std::uint32_t j = i; j < c.k; ++j)
      s += entropy_term(static_cast<double>(c.edges(i, j)),
                        static_cast<double>(c.non_edges(i, j)));
  return s;
}

struct SoftEntropy {
  double nats = 0.0;
  // Set when some observation has zero probability under the model; nats is
  // +inf in that case.
  std::optional<std::uint32_t> degenerate_observation;

  bool finite() const { return !degenerate_observation.has_value(); }
};

// Per-observation likelihood denominator sum over all (i, j) cluster pairs.
inline double observation_likelihood(const SoftModel& m, const Observation& o) {
  const double* hu = m.user_row(o.user);
  const double* hv = m.item_row(o.item);
  double total = 0.0;
  for (std::uint32_t i = 0; i < m.k; ++i) {
    if (hu[i] == 0.0) continue;
    const double* slice = m.theta.data() + (std::size_t(i) * m.l) * m.rating_count + o.rating;
    double inner = 0.0;
    for (std::uint32_t j = 0; j < m.l; ++j)
      inner += hv[j] * slice[std::size_t(j) * m.rating_count];
    total += hu[i] * inner;
  }
  return total;
}

// -sum over observations of ln P(observation | h, theta), natural log.
inline SoftEntropy soft_entropy(const SoftModel& m, const RatingDataset& data) {
  const std::size_t count = data.observations.size();
  const std::size_t chunks = (count + kReductionChunk - 1) / kReductionChunk;
  std::vector<double> partial(chunks, 0.0);
  std::vector<std::int64_t> bad(chunks, -1);

#pragma omp parallel for schedule(static)
  for (std::int64_t ci = 0; ci < static_cast<std::int64_t>(chunks); ++ci) {
    std::size_t begin = ci * kReductionChunk;
    std::size_t end = std::min(begin + kReductionChunk, count);
    double acc = 0.0;
    for (std::size_t idx = begin; idx < end; ++idx) {
      double p = observation_likelihood(m, data.observations[idx]);
      if (p <= 0.0) {
        if (bad[ci] < 0) bad[ci] = static_cast<std::int64_t>(idx);
        continue;
      }
      acc -= std::log(p);
    }
    partial[ci] = acc;
  }

  SoftEntropy result;
  for (std::size_t ci = 0; ci < chunks; ++ci) {
    if (bad[ci] >= 0 && !result.degenerate_observation) {
      result.degenerate_observation = static_cast<std::uint32_t>(bad[ci]);
      result.nats = std::numeric_limits<double>::infinity();
    }
    if (result.finite()) result.nats += partial[ci];
  }
  return result;
}

}  // namespace sbmkit
