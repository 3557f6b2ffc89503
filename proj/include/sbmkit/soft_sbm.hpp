#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbmkit/entropy.hpp"
#include "sbmkit/rng.hpp"
#include "sbmkit/types.hpp"

namespace sbmkit {

enum class SoftVariant { exact, montecarlo };

struct SoftFitConfig {
  std::uint32_t k = 10;
  std::uint32_t l = 10;
  std::uint32_t sample_size = 30;  // montecarlo only
  std::uint32_t max_iterations = 200;
  double convergence_tol = 1e-7;
  double time_budget_seconds = 0.0;  // <= 0 means no budget
  std::uint32_t entropy_every = 1;   // evaluate entropy every N iterations
  RngSpec rng;

  void validate() const {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (l < 1) throw std::invalid_argument("l must be >= 1");
    if (sample_size < 1) throw std::invalid_argument("sample size s must be >= 1");
    if (convergence_tol <= 0.0) throw std::invalid_argument("convergence tolerance must be > 0");
    if (entropy_every < 1) throw std::invalid_argument("entropy_every must be >= 1");
  }
};

struct TracePoint {
  std::uint32_t iteration;
  double entropy;
  double elapsed_seconds;
};

using FitTrace = std::vector<TracePoint>;

// Raised when an EM update hits an observation with zero probability mass.
class DegenerateModelError : public std::runtime_error {
 public:
  explicit DegenerateModelError(std::uint32_t observation)
      : std::runtime_error("zero responsibility normalizer at observation " +
                           std::to_string(observation)),
        observation(observation) {}
  std::uint32_t observation;
};

namespace detail {

// Fills `row` with a uniform draw from the probability simplex.
inline void random_simplex_row(double* row, std::uint32_t len, SplitMix64& rng) {
  double sum = 0.0;
  for (std::uint32_t i = 0; i < len; ++i) {
    row[i] = rng.exponential();
    sum += row[i];
  }
  for (std::uint32_t i = 0; i < len; ++i) row[i] /= sum;
}

// Index of the first cumulative entry exceeding u; clamped to len - 1.
inline std::uint32_t sample_cumulative(const double* cum, std::uint32_t len, double u) {
  auto it = std::upper_bound(cum, cum + len, u);
  std::uint32_t idx = static_cast<std::uint32_t>(it - cum);
  return idx < len ? idx : len - 1;
}

}  // namespace detail

inline SoftModel init_soft_model(const RatingDataset& data, const SoftFitConfig& cfg) {
  cfg.validate();
  if (data.observations.empty()) throw std::invalid_argument("empty dataset");
  SoftModel m;
  m.k = cfg.k;
  m.l = cfg.l;
  m.user_count = data.user_count;
  m.item_count = data.item_count;
  m.rating_count = data.rating_count();
  m.user_h.resize(std::size_t(m.user_count) * m.k);
  m.item_h.resize(std::size_t(m.item_count) * m.l);
  m.theta.resize(std::size_t(m.k) * m.l * m.rating_count);

#pragma omp parallel for schedule(static)
  for (std::int64_t u = 0; u < static_cast<std::int64_t>(m.user_count); ++u) {
    auto rng = cfg.rng.stream(stream_domain::kSoftInitUser, 0, u);
    detail::random_simplex_row(m.user_row(static_cast<std::uint32_t>(u)), m.k, rng);
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < static_cast<std::int64_t>(m.item_count); ++v) {
    auto rng = cfg.rng.stream(stream_domain::kSoftInitItem, 0, v);
    detail::random_simplex_row(m.item_row(static_cast<std::uint32_t>(v)), m.l, rng);
  }
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(m.k); ++i)
    for (std::int64_t j = 0; j < static_cast<std::int64_t>(m.l); ++j) {
      auto rng = cfg.rng.stream(stream_domain::kSoftInitTheta, 0, i * m.l + j);
      detail::random_simplex_row(m.theta_slice(static_cast<std::uint32_t>(i),
                                               static_cast<std::uint32_t>(j)),
                                 m.rating_count, rng);
    }
  return m;
}

// One exact EM update. Responsibilities x_{u,v}(i,j) are proportional to
// h_{u,i} h_{v,j} theta_{i,j,r(u,v)}; h rows average the responsibilities of
// incident observations and theta renormalizes their per-rating totals.
// All reductions run in a fixed order independent of thread count.
inline SoftModel mmsbm_step(const SoftModel& model, const RatingDataset& data) {
  const std::uint32_t k = model.k, l = model.l, nr = model.rating_count;
  const std::size_t count = data.observations.size();

  std::vector<double> denom(count);
  const std::size_t chunks = (count + kReductionChunk - 1) / kReductionChunk;
  std::vector<std::int64_t> bad(chunks, -1);
#pragma omp parallel for schedule(static)
  for (std::int64_t ci = 0; ci < static_cast<std::int64_t>(chunks); ++ci) {
    std::size_t begin = ci * kReductionChunk;
    std::size_t end = std::min(begin + kReductionChunk, count);
    for (std::size_t idx = begin; idx < end; ++idx) {
      double p = observation_likelihood(model, data.observations[idx]);
      denom[idx] = p;
      if (p <= 0.0 && bad[ci] < 0) bad[ci] = static_cast<std::int64_t>(idx);
    }
  }
  for (std::size_t ci = 0; ci < chunks; ++ci)
    if (bad[ci] >= 0) throw DegenerateModelError(static_cast<std::uint32_t>(bad[ci]));

  SoftModel next = model;

  // h update, user side: h_{u,i} = (1/|du|) sum over incident observations of
  // sum_j x_{u,v}(i,j).
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t ui = 0; ui < static_cast<std::int64_t>(model.user_count); ++ui) {
    std::uint32_t u = static_cast<std::uint32_t>(ui);
    const auto& incident = data.by_user[u];
    double* out = next.user_row(u);
    if (incident.empty()) continue;  // keeps the previous row
    std::fill(out, out + k, 0.0);
    const double* hu = model.user_row(u);
    for (auto idx : incident) {
      const Observation& o = data.observations[idx];
      const double* hv = model.item_row(o.item);
      for (std::uint32_t i = 0; i < k; ++i) {
        const double* slice = model.theta_slice(i, 0) + o.rating;
        double inner = 0.0;
        for (std::uint32_t j = 0; j < l; ++j) inner += hv[j] * slice[std::size_t(j) * nr];
        out[i] += hu[i] * inner / denom[idx];
      }
    }
    for (std::uint32_t i = 0; i < k; ++i) out[i] /= incident.size();
  }

  // h update, item side.
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t vi = 0; vi < static_cast<std::int64_t>(model.item_count); ++vi) {
    std::uint32_t v = static_cast<std::uint32_t>(vi);
    const auto& incident = data.by_item[v];
    double* out = next.item_row(v);
    if (incident.empty()) continue;
    std::fill(out, out + l, 0.0);
    const double* hv = model.item_row(v);
    for (auto idx : incident) {
      const Observation& o = data.observations[idx];
      const double* hu = model.user_row(o.user);
      for (std::uint32_t j = 0; j < l; ++j) {
        const double* slice = model.theta_slice(0, j) + o.rating;
        double inner = 0.0;
        for (std::uint32_t i = 0; i < k; ++i)
          inner += hu[i] * slice[std::size_t(i) * l * nr];
        out[j] += hv[j] * inner / denom[idx];
      }
    }
    for (std::uint32_t j = 0; j < l; ++j) out[j] /= incident.size();
  }

  // theta update: each (i, j) slice scans all observations in index order.
#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(k); ++i)
    for (std::int64_t j = 0; j < static_cast<std::int64_t>(l); ++j) {
      std::vector<double> numer(nr, 0.0);
      const double* slice = model.theta_slice(static_cast<std::uint32_t>(i),
                                              static_cast<std::uint32_t>(j));
      for (std::size_t idx = 0; idx < count; ++idx) {
        const Observation& o = data.observations[idx];
        double x = model.user_row(o.user)[i] * model.item_row(o.item)[j] *
                   slice[o.rating] / denom[idx];
        numer[o.rating] += x;
      }
      double total = 0.0;
      for (auto v : numer) total += v;
      double* out = next.theta_slice(static_cast<std::uint32_t>(i),
                                     static_cast<std::uint32_t>(j));
      if (total > 0.0)
        for (std::uint32_t r = 0; r < nr; ++r) out[r] = numer[r] / total;
      // total == 0 keeps the previous slice
    }

  return next;
}

// One Monte-Carlo EM update. Each observation draws `s` cluster index pairs
// from discrete(h_u) x discrete(h_v) on its own RNG stream, estimating the
// responsibilities instead of enumerating all k*l pairs. Observations whose
// sampled mass x is zero are skipped for this iteration and do not count in
// the membership divisor.
inline SoftModel mcmmsbm_step(const SoftModel& model, const RatingDataset& data,
                              const SoftFitConfig& cfg, std::uint32_t iteration = 0) {
  const std::uint32_t k = model.k, l = model.l, nr = model.rating_count;
  const std::uint32_t s = cfg.sample_size;
  const std::size_t count = data.observations.size();
  const std::size_t theta_size = std::size_t(k) * l * nr;

  // Cumulative membership rows shared by every observation this iteration.
  std::vector<double> user_cum(std::size_t(model.user_count) * k);
  std::vector<double> item_cum(std::size_t(model.item_count) * l);
#pragma omp parallel for schedule(static)
  for (std::int64_t u = 0; u < static_cast<std::int64_t>(model.user_count); ++u) {
    const double* row = model.user_row(static_cast<std::uint32_t>(u));
    double* cum = user_cum.data() + u * k;
    double acc = 0.0;
    for (std::uint32_t i = 0; i < k; ++i) cum[i] = (acc += row[i]);
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < static_cast<std::int64_t>(model.item_count); ++v) {
    const double* row = model.item_row(static_cast<std::uint32_t>(v));
    double* cum = item_cum.data() + v * l;
    double acc = 0.0;
    for (std::uint32_t j = 0; j < l; ++j) cum[j] = (acc += row[j]);
  }

  // Per-observation sparse endpoint scores; at most min(s, k) user entries.
  const std::uint32_t stride_u = std::min(s, k);
  const std::uint32_t stride_v = std::min(s, l);
  std::vector<std::uint32_t> score_u_idx(count * stride_u);
  std::vector<double> score_u_val(count * stride_u);
  std::vector<std::uint32_t> score_u_cnt(count, 0);
  std::vector<std::uint32_t> score_v_idx(count * stride_v);
  std::vector<double> score_v_val(count * stride_v);
  std::vector<std::uint32_t> score_v_cnt(count, 0);
  std::vector<std::uint8_t> skipped(count, 0);

  const std::size_t chunks = (count + kReductionChunk - 1) / kReductionChunk;
  std::vector<std::vector<double>> eta_chunks(chunks);

#pragma omp parallel
  {
    std::vector<std::uint32_t> isamp(s), jsamp(s);
    std::vector<double> acc_u(k, 0.0), acc_v(l, 0.0);
    std::vector<std::uint8_t> seen_u(k, 0), seen_v(l, 0);
    std::vector<std::uint32_t> touched_u, touched_v;
    touched_u.reserve(stride_u);
    touched_v.reserve(stride_v);

#pragma omp for schedule(dynamic, 1)
    for (std::int64_t ci = 0; ci < static_cast<std::int64_t>(chunks); ++ci) {
      auto& eta = eta_chunks[ci];
      eta.assign(theta_size, 0.0);
      std::size_t begin = ci * kReductionChunk;
      std::size_t end = std::min(begin + kReductionChunk, count);
      for (std::size_t idx = begin; idx < end; ++idx) {
        const Observation& o = data.observations[idx];
        auto rng = cfg.rng.stream(stream_domain::kSoftMcDraw, iteration, idx);
        const double* cu = user_cum.data() + std::size_t(o.user) * k;
        const double* cv = item_cum.data() + std::size_t(o.item) * l;
        double x = 0.0;
        touched_u.clear();
        touched_v.clear();
        for (std::uint32_t sp = 0; sp < s; ++sp) {
          std::uint32_t i = detail::sample_cumulative(cu, k, rng.uniform01());
          std::uint32_t j = detail::sample_cumulative(cv, l, rng.uniform01());
          isamp[sp] = i;
          jsamp[sp] = j;
          double th = model.theta[(std::size_t(i) * l + j) * nr + o.rating];
          x += th;
          if (!seen_u[i]) {
            seen_u[i] = 1;
            touched_u.push_back(i);
          }
          acc_u[i] += th;
          if (!seen_v[j]) {
            seen_v[j] = 1;
            touched_v.push_back(j);
          }
          acc_v[j] += th;
        }
        if (x <= 0.0) {
          skipped[idx] = 1;
          for (auto i : touched_u) {
            acc_u[i] = 0.0;
            seen_u[i] = 0;
          }
          for (auto j : touched_v) {
            acc_v[j] = 0.0;
            seen_v[j] = 0;
          }
          continue;
        }
        std::uint32_t cu_n = 0;
        for (auto i : touched_u) {
          score_u_idx[idx * stride_u + cu_n] = i;
          score_u_val[idx * stride_u + cu_n] = acc_u[i] / x;
          acc_u[i] = 0.0;
          seen_u[i] = 0;
          ++cu_n;
        }
        score_u_cnt[idx] = cu_n;
        std::uint32_t cv_n = 0;
        for (auto j : touched_v) {
          score_v_idx[idx * stride_v + cv_n] = j;
          score_v_val[idx * stride_v + cv_n] = acc_v[j] / x;
          acc_v[j] = 0.0;
          seen_v[j] = 0;
          ++cv_n;
        }
        score_v_cnt[idx] = cv_n;
        for (std::uint32_t sp = 0; sp < s; ++sp) {
          std::size_t t = (std::size_t(isamp[sp]) * l + jsamp[sp]) * nr + o.rating;
          eta[t] += model.theta[t] / x;
        }
      }
    }
  }

  SoftModel next = model;

  // Membership rows average the per-observation scores over non-skipped
  // incident observations.
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t ui = 0; ui < static_cast<std::int64_t>(model.user_count); ++ui) {
    std::uint32_t u = static_cast<std::uint32_t>(ui);
    const auto& incident = data.by_user[u];
    double* out = next.user_row(u);
    std::uint32_t live = 0;
    for (auto idx : incident)
      if (!skipped[idx]) ++live;
    if (live == 0) continue;
    std::fill(out, out + k, 0.0);
    for (auto idx : incident) {
      if (skipped[idx]) continue;
      for (std::uint32_t t = 0; t < score_u_cnt[idx]; ++t)
        out[score_u_idx[idx * stride_u + t]] += score_u_val[idx * stride_u + t];
    }
    for (std::uint32_t i = 0; i < k; ++i) out[i] /= live;
  }
#pragma omp parallel for schedule(dynamic, 64)
  for (std::int64_t vi = 0; vi < static_cast<std::int64_t>(model.item_count); ++vi) {
    std::uint32_t v = static_cast<std::uint32_t>(vi);
    const auto& incident = data.by_item[v];
    double* out = next.item_row(v);
    std::uint32_t live = 0;
    for (auto idx : incident)
      if (!skipped[idx]) ++live;
    if (live == 0) continue;
    std::fill(out, out + l, 0.0);
    for (auto idx : incident) {
      if (skipped[idx]) continue;
      for (std::uint32_t t = 0; t < score_v_cnt[idx]; ++t)
        out[score_v_idx[idx * stride_v + t]] += score_v_val[idx * stride_v + t];
    }
    for (std::uint32_t j = 0; j < l; ++j) out[j] /= live;
  }

  // Merge eta in chunk order, then renormalize each (i, j) slice.
  std::vector<double> eta(theta_size, 0.0);
  for (std::size_t ci = 0; ci < chunks; ++ci)
    for (std::size_t t = 0; t < theta_size; ++t) eta[t] += eta_chunks[ci][t];

#pragma omp parallel for collapse(2) schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(k); ++i)
    for (std::int64_t j = 0; j < static_cast<std::int64_t>(l); ++j) {
      const double* in = eta.data() + (std::size_t(i) * l + j) * nr;
      double total = 0.0;
      for (std::uint32_t r = 0; r < nr; ++r) total += in[r];
      double* out = next.theta_slice(static_cast<std::uint32_t>(i),
                                     static_cast<std::uint32_t>(j));
      if (total > 0.0)
        for (std::uint32_t r = 0; r < nr; ++r) out[r] = in[r] / total;
      // total == 0 keeps the previous slice
    }

  return next;
}

struct SoftFitResult {
  SoftModel model;  // lowest-entropy model seen, not necessarily the last
  FitTrace trace;
  double best_entropy = 0.0;
};

inline SoftFitResult fit_soft(const RatingDataset& data, const SoftFitConfig& cfg,
                              SoftVariant variant) {
  cfg.validate();
  auto start = std::chrono::steady_clock::now();
  auto elapsed = [&start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  SoftModel current = init_soft_model(data, cfg);
  SoftFitResult result;
  double entropy = soft_entropy(current, data).nats;
  result.trace.push_back({0, entropy, elapsed()});
  result.model = current;
  result.best_entropy = entropy;
  double previous = entropy;

  for (std::uint32_t it = 1; it <= cfg.max_iterations; ++it) {
    current = variant == SoftVariant::exact ? mmsbm_step(current, data)
                                            : mcmmsbm_step(current, data, cfg, it);
    if (it % cfg.entropy_every == 0 || it == cfg.max_iterations) {
      double s = soft_entropy(current, data).nats;
      result.trace.push_back({it, s, elapsed()});
      if (s < result.best_entropy) {
        result.best_entropy = s;
        result.model = current;
      }
      double rel = std::abs(s - previous) / std::max(std::abs(previous), 1.0);
      previous = s;
      if (rel < cfg.convergence_tol) break;
    }
    if (cfg.time_budget_seconds > 0.0 && elapsed() >= cfg.time_budget_seconds) break;
  }
  return result;
}

}  // namespace sbmkit
