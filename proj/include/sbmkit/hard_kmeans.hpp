#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sbmkit/entropy.hpp"
#include "sbmkit/rng.hpp"
#include "sbmkit/soft_sbm.hpp"  // TracePoint / FitTrace
#include "sbmkit/types.hpp"

namespace sbmkit {

struct HardFitConfig {
  std::uint32_t k = 2;
  std::uint32_t l = 2;  // bipartite item-side clusters
  double alpha = 0.1;   // fraction of entities reassigned per iteration
  std::uint32_t max_iterations = 100;
  double convergence_tol = 1e-7;
  RngSpec rng;

  void validate() const {
    if (k < 1) throw std::invalid_argument("k must be >= 1");
    if (l < 1) throw std::invalid_argument("l must be >= 1");
    if (!(alpha > 0.0) || alpha > 1.0) throw std::invalid_argument("alpha must be in (0, 1]");
    if (convergence_tol <= 0.0) throw std::invalid_argument("convergence tolerance must be > 0");
  }
};

namespace detail {

// f with out-of-domain arguments mapped to 0. The isolated-vertex tables
// evaluate f at d' - |V_j|, which can go negative for block pairs the
// correction terms later replace; both sides must use the same convention
// so the bogus values cancel exactly.
inline double f_or_zero(std::int64_t x, std::int64_t y) {
  if (x <= 0 || y <= 0) return 0.0;
  return entropy_term(static_cast<double>(x), static_cast<double>(y));
}

}  // namespace detail

// Frozen per-iteration statistics: block pair counts, the isolated-vertex
// insertion/removal cost tables, and each vertex's edge counts into every
// block it touches (CSR layout).
struct MoveDeltaTables {
  std::uint32_t k = 0;
  std::vector<std::int64_t> sizes;   // |V_j|
  std::vector<std::int64_t> d;       // k x k block edge counts
  std::vector<std::int64_t> dprime;  // k x k block non-edge counts
  std::vector<double> a;             // k x k: insert isolated vertex into row block
  std::vector<double> b;             // k x k: remove isolated vertex from row block
  std::vector<double> A;             // row sums of a
  std::vector<double> B;             // row sums of b
  std::vector<std::size_t> xoff;     // n + 1 offsets into xblk
  std::vector<std::pair<std::uint32_t, std::uint32_t>> xblk;  // (block, edge count)

  std::int64_t dd(std::uint32_t i, std::uint32_t j) const { return d[std::size_t(i) * k + j]; }
  std::int64_t dp(std::uint32_t i, std::uint32_t j) const {
    return dprime[std::size_t(i) * k + j];
  }
};

inline MoveDeltaTables rebuild_tables(const HardClustering& c, const SimpleGraph& g) {
  MoveDeltaTables t;
  const std::uint32_t k = c.k;
  t.k = k;
  t.sizes = c.cluster_sizes;
  t.d.resize(std::size_t(k) * k);
  t.dprime.resize(std::size_t(k) * k);
  for (std::uint32_t i = 0; i < k; ++i)
    for (std::uint32_t j = 0; j < k; ++j) {
      t.d[std::size_t(i) * k + j] = c.edges(i, j);
      t.dprime[std::size_t(i) * k + j] = c.non_edges(i, j);
    }

  t.a.resize(std::size_t(k) * k);
  t.b.resize(std::size_t(k) * k);
  t.A.assign(k, 0.0);
  t.B.assign(k, 0.0);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(k); ++i) {
    double arow = 0.0, brow = 0.0;
    for (std::uint32_t j = 0; j < k; ++j) {
      std::size_t idx = std::size_t(i) * k + j;
      double base = detail::f_or_zero(t.d[idx], t.dprime[idx]);
      t.a[idx] = detail::f_or_zero(t.d[idx], t.dprime[idx] + t.sizes[j]) - base;
      t.b[idx] = base - detail::f_or_zero(t.d[idx], t.dprime[idx] - t.sizes[j]);
      arow += t.a[idx];
      brow += t.b[idx];
    }
    t.A[i] = arow;
    t.B[i] = brow;
  }

  // x_{v,j}: edges from v into block j, nonzero entries only, neighbor order.
  t.xoff.assign(std::size_t(g.n) + 1, 0);
  std::vector<std::uint32_t> nblocks(g.n, 0);
#pragma omp parallel
  {
    std::vector<std::uint32_t> count(k, 0);
    std::vector<std::uint32_t> touched;
    touched.reserve(64);
#pragma omp for schedule(static)
    for (std::int64_t v = 0; v < static_cast<std::int64_t>(g.n); ++v) {
      for (auto w : g.adjacency[v]) {
        std::uint32_t z = c.assignment[w];
        if (count[z]++ == 0) touched.push_back(z);
      }
      nblocks[v] = static_cast<std::uint32_t>(touched.size());
      for (auto z : touched) count[z] = 0;
      touched.clear();
    }
  }
  for (std::uint32_t v = 0; v < g.n; ++v) t.xoff[v + 1] = t.xoff[v] + nblocks[v];
  t.xblk.resize(t.xoff[g.n]);
#pragma omp parallel
  {
    std::vector<std::uint32_t> count(k, 0);
    std::vector<std::uint32_t> touched;
    touched.reserve(64);
#pragma omp for schedule(static)
    for (std::int64_t v = 0; v < static_cast<std::int64_t>(g.n); ++v) {
      for (auto w : g.adjacency[v]) {
        std::uint32_t z = c.assignment[w];
        if (count[z]++ == 0) touched.push_back(z);
      }
      std::size_t at = t.xoff[v];
      for (auto z : touched) {
        t.xblk[at++] = {z, count[z]};
        count[z] = 0;
      }
      touched.clear();
    }
  }
  return t;
}

namespace detail {

// Entropy change from detaching vertex v (old cluster y0, edge counts x)
// from the clustering. Starts from the isolated-vertex gain -B[y0] and
// replaces the table terms that the approximation gets wrong: blocks v has
// edges into, plus the diagonal y0 term whose pair count shrinks by
// |V_{y0}| - 1 rather than |V_{y0}|.
inline double removal_delta(const MoveDeltaTables& t, std::uint32_t y0,
                            const std::pair<std::uint32_t, std::uint32_t>* x,
                            std::size_t xn) {
  double delta = -t.B[y0];
  bool diag_seen = false;
  for (std::size_t e = 0; e < xn; ++e) {
    std::uint32_t j = x[e].first;
    std::int64_t xj = x[e].second;
    std::int64_t loss = j == y0 ? t.sizes[y0] - 1 : t.sizes[j];
    if (j == y0) diag_seen = true;
    double exact = f_or_zero(t.dd(y0, j) - xj, t.dp(y0, j) - (loss - xj));
    double approx = f_or_zero(t.dd(y0, j), t.dp(y0, j) - t.sizes[j]);
    delta += exact - approx;
  }
  if (!diag_seen) {
    double exact = f_or_zero(t.dd(y0, y0), t.dp(y0, y0) - (t.sizes[y0] - 1));
    double approx = f_or_zero(t.dd(y0, y0), t.dp(y0, y0) - t.sizes[y0]);
    delta += exact - approx;
  }
  return delta;
}

// Entropy change from attaching the detached vertex (edge counts x, old
// cluster y0 already shrunk by one) to cluster y. Starts from the
// isolated-vertex cost A[y] and corrects blocks with edges plus the y0
// column, whose post-removal counts differ from the frozen tables.
inline double insertion_delta(const MoveDeltaTables& t, std::uint32_t y0, std::uint32_t y,
                              const std::pair<std::uint32_t, std::uint32_t>* x,
                              std::size_t xn, std::int64_t xy) {
  double delta = t.A[y];
  bool y0_seen = false;
  for (std::size_t e = 0; e < xn; ++e) {
    std::uint32_t j = x[e].first;
    std::int64_t xj = x[e].second;
    if (j == y0) y0_seen = true;
    std::int64_t d1 = t.dd(y, j);
    std::int64_t dp1 = t.dp(y, j);
    std::int64_t sz1 = t.sizes[j];
    if (j == y0) {
      d1 -= xy;
      dp1 -= t.sizes[y] - xy;
      sz1 -= 1;
    }
    double exact = f_or_zero(d1 + xj, dp1 + sz1 - xj) - f_or_zero(d1, dp1);
    delta += exact - t.a[std::size_t(y) * t.k + j];
  }
  if (!y0_seen) {
    std::int64_t d1 = t.dd(y, y0) - xy;
    std::int64_t dp1 = t.dp(y, y0) - (t.sizes[y] - xy);
    std::int64_t sz1 = t.sizes[y0] - 1;
    double exact = f_or_zero(d1, dp1 + sz1) - f_or_zero(d1, dp1);
    delta += exact - t.a[std::size_t(y) * t.k + y0];
  }
  return delta;
}

}  // namespace detail

// Exact S(succ(Z, v, target)) - S(Z) against frozen tables, O(deg-blocks)
// per call after the O(1) table lookups.
inline double succ_entropy_delta(const HardClustering& c, const SimpleGraph& g,
                                 const MoveDeltaTables& t, std::uint32_t v,
                                 std::uint32_t target) {
  (void)g;
  if (target >= t.k) throw std::out_of_range("target cluster out of range");
  std::uint32_t y0 = c.assignment[v];
  if (target == y0) return 0.0;
  const auto* x = t.xblk.data() + t.xoff[v];
  std::size_t xn = t.xoff[v + 1] - t.xoff[v];
  std::int64_t xy = 0;
  for (std::size_t e = 0; e < xn; ++e)
    if (x[e].first == target) xy = x[e].second;
  return detail::removal_delta(t, y0, x, xn) +
         detail::insertion_delta(t, y0, target, x, xn, xy);
}

namespace detail {

// Best target for v under frozen tables; ties keep the current cluster,
// otherwise the lowest index wins. Deltas below noise are not worth a move.
inline std::pair<std::uint32_t, double> best_move(const HardClustering& c,
                                                  const MoveDeltaTables& t, std::uint32_t v) {
  std::uint32_t y0 = c.assignment[v];
  const auto* x = t.xblk.data() + t.xoff[v];
  std::size_t xn = t.xoff[v + 1] - t.xoff[v];
  double rem = removal_delta(t, y0, x, xn);
  std::uint32_t best = y0;
  double best_delta = -1e-12;
  for (std::uint32_t y = 0; y < t.k; ++y) {
    if (y == y0) continue;
    std::int64_t xy = 0;
    for (std::size_t e = 0; e < xn; ++e)
      if (x[e].first == y) xy = x[e].second;
    double delta = rem + insertion_delta(t, y0, y, x, xn, xy);
    if (delta < best_delta) {
      best_delta = delta;
      best = y;
    }
  }
  return {best, best == y0 ? 0.0 : best_delta};
}

}  // namespace detail

struct HardFitResult {
  HardClustering clustering;  // lowest-entropy state seen
  FitTrace trace;
  double best_entropy = 0.0;
};

// Generalized k-means on a simple graph: uniform random start, then batch
// iterations that sample ceil(alpha * n) vertices, plan each one's argmin
// move against frozen tables, and apply all plans at once.
inline HardFitResult hard_fit_graph(const SimpleGraph& g, const HardFitConfig& cfg) {
  cfg.validate();
  if (g.n == 0) throw std::invalid_argument("empty graph");
  auto start = std::chrono::steady_clock::now();
  auto elapsed = [&start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  std::vector<std::uint32_t> assignment(g.n);
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < static_cast<std::int64_t>(g.n); ++v) {
    auto rng = cfg.rng.stream(stream_domain::kHardInit, 0, v);
    assignment[v] = static_cast<std::uint32_t>(rng.below(cfg.k));
  }
  HardClustering c = HardClustering::from_assignment(g, std::move(assignment), cfg.k);

  HardFitResult result;
  double entropy = hard_entropy(c);
  result.trace.push_back({0, entropy, elapsed()});
  result.clustering = c;
  result.best_entropy = entropy;

  const std::uint32_t sample_count = std::min<std::uint32_t>(
      g.n, static_cast<std::uint32_t>(std::ceil(cfg.alpha * g.n)));
  // With alpha < 1 a single iteration can legitimately change nothing, so
  // convergence compares entropies three expected full passes apart rather
  // than one iteration apart.
  const std::uint32_t window =
      3 * std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::ceil(1.0 / cfg.alpha)));
  std::vector<double> history{entropy};

  for (std::uint32_t it = 1; it <= cfg.max_iterations; ++it) {
    MoveDeltaTables tables = rebuild_tables(c, g);
    auto rng = cfg.rng.stream(stream_domain::kHardSample, it, 0);
    std::vector<std::uint32_t> sampled = sample_without_replacement(g.n, sample_count, rng);

    std::vector<std::uint32_t> targets(sampled.size());
#pragma omp parallel for schedule(dynamic, 256)
    for (std::int64_t s = 0; s < static_cast<std::int64_t>(sampled.size()); ++s)
      targets[s] = detail::best_move(c, tables, sampled[s]).first;

    std::vector<std::pair<std::uint32_t, std::uint32_t>> moves;
    for (std::size_t s = 0; s < sampled.size(); ++s)
      if (targets[s] != c.assignment[sampled[s]]) moves.push_back({sampled[s], targets[s]});
    c.apply_moves(g, moves);

    entropy = hard_entropy(c);
    result.trace.push_back({it, entropy, elapsed()});
    if (entropy < result.best_entropy) {
      result.best_entropy = entropy;
      result.clustering = c;
    }
    if (cfg.k == 1) break;  // single cluster admits no moves
    history.push_back(entropy);
    if (history.size() > window) {
      double before = history[history.size() - 1 - window];
      double rel = std::abs(entropy - before) / std::max(std::abs(before), 1.0);
      if (rel < cfg.convergence_tol) break;
    }
  }
  return result;
}

struct LocalOptimalityWitness {
  bool optimal = true;
  std::uint32_t vertex = 0;
  std::uint32_t target = 0;
  double delta = 0.0;
};

// True iff no single-vertex move reduces entropy by more than 1e-9;
// otherwise reports the first improving move (lowest vertex, then lowest
// target with the largest reduction for that vertex).
inline LocalOptimalityWitness check_locally_optimal(const HardClustering& c,
                                                    const SimpleGraph& g) {
  MoveDeltaTables tables = rebuild_tables(c, g);
  std::vector<double> best_delta(g.n, 0.0);
  std::vector<std::uint32_t> best_target(g.n, 0);
#pragma omp parallel for schedule(dynamic, 256)
  for (std::int64_t v = 0; v < static_cast<std::int64_t>(g.n); ++v) {
    auto [target, delta] = detail::best_move(c, tables, static_cast<std::uint32_t>(v));
    best_target[v] = target;
    best_delta[v] = delta;
  }
  LocalOptimalityWitness w;
  for (std::uint32_t v = 0; v < g.n; ++v) {
    if (best_delta[v] < -1e-9) {
      w.optimal = false;
      w.vertex = v;
      w.target = best_target[v];
      w.delta = best_delta[v];
      return w;
    }
  }
  return w;
}

// Hard bipartite recommender model: one block per user cluster x item
// cluster, holding the rating histogram n_{i,j,r}.
struct BipartiteHardModel {
  std::uint32_t k = 0;
  std::uint32_t l = 0;
  std::uint32_t rating_count = 0;
  std::vector<std::uint32_t> user_assignment;
  std::vector<std::uint32_t> item_assignment;
  std::vector<std::int64_t> counts;  // k x l x rating_count
  std::vector<std::int64_t> totals;  // k x l

  std::size_t cidx(std::uint32_t i, std::uint32_t j, std::uint32_t r) const {
    return (std::size_t(i) * l + j) * rating_count + r;
  }
  std::int64_t count(std::uint32_t i, std::uint32_t j, std::uint32_t r) const {
    return counts[cidx(i, j, r)];
  }
  std::int64_t total(std::uint32_t i, std::uint32_t j) const {
    return totals[std::size_t(i) * l + j];
  }

  static BipartiteHardModel from_assignments(const RatingDataset& data,
                                             std::vector<std::uint32_t> zu,
                                             std::vector<std::uint32_t> zv,
                                             std::uint32_t k, std::uint32_t l) {
    BipartiteHardModel m;
    m.k = k;
    m.l = l;
    m.rating_count = data.rating_count();
    m.user_assignment = std::move(zu);
    m.item_assignment = std::move(zv);
    if (m.user_assignment.size() != data.user_count ||
        m.item_assignment.size() != data.item_count)
      throw std::invalid_argument("assignment size mismatch");
    m.counts.assign(std::size_t(k) * l * m.rating_count, 0);
    m.totals.assign(std::size_t(k) * l, 0);
    for (const auto& o : data.observations) {
      std::uint32_t i = m.user_assignment[o.user];
      std::uint32_t j = m.item_assignment[o.item];
      if (i >= k || j >= l) throw std::invalid_argument("cluster index out of range");
      ++m.counts[m.cidx(i, j, o.rating)];
      ++m.totals[std::size_t(i) * l + j];
    }
    return m;
  }

  void validate(const RatingDataset& data) const {
    std::int64_t grand = 0;
    for (std::uint32_t i = 0; i < k; ++i)
      for (std::uint32_t j = 0; j < l; ++j) {
        std::int64_t sum = 0;
        for (std::uint32_t r = 0; r < rating_count; ++r) sum += count(i, j, r);
        if (sum != total(i, j)) throw std::invalid_argument("histogram sum != block total");
        grand += sum;
      }
    if (grand != static_cast<std::int64_t>(data.observations.size()))
      throw std::invalid_argument("block totals do not sum to |observations|");
  }
};

namespace detail {

inline double xlnx(std::int64_t v) {
  return v > 0 ? static_cast<double>(v) * std::log(static_cast<double>(v)) : 0.0;
}

}  // namespace detail

// S(Z_u, Z_v) = sum over blocks of n_ij ln n_ij - sum_r n_ijr ln n_ijr,
// the multinomial MLE plug-in entropy.
inline double bipartite_entropy(const BipartiteHardModel& m) {
  double s = 0.0;
  for (std::uint32_t i = 0; i < m.k; ++i)
    for (std::uint32_t j = 0; j < m.l; ++j) {
      double block = detail::xlnx(m.total(i, j));
      for (std::uint32_t r = 0; r < m.rating_count; ++r)
        block -= detail::xlnx(m.count(i, j, r));
      s += block;
    }
  return s;
}

struct BipartiteFitResult {
  BipartiteHardModel model;  // lowest-entropy state seen
  FitTrace trace;
  double best_entropy = 0.0;
};

namespace detail {

// One frozen-statistics sweep over a sampled subset of one side. `hist`
// maps each sampled entity to its (other-side block, rating) -> count
// histogram; moving the entity shifts that histogram between block rows.
struct EntityHistogram {
  std::vector<std::uint32_t> keys;   // other_block * rating_count + rating
  std::vector<std::int64_t> counts;  // per key
  std::vector<std::uint32_t> blocks;        // distinct other-side blocks
  std::vector<std::int64_t> block_totals;   // per distinct block
};

inline void build_histogram(const RatingDataset& data, const std::vector<std::uint32_t>& obs,
                            const std::vector<std::uint32_t>& other_assignment, bool user_side,
                            std::uint32_t rating_count, EntityHistogram& h,
                            std::vector<std::int64_t>& key_scratch,
                            std::vector<std::int64_t>& block_scratch) {
  h.keys.clear();
  h.counts.clear();
  h.blocks.clear();
  h.block_totals.clear();
  for (auto idx : obs) {
    const Observation& o = data.observations[idx];
    std::uint32_t other = user_side ? other_assignment[o.item] : other_assignment[o.user];
    std::uint32_t key = other * rating_count + o.rating;
    if (key_scratch[key] == 0) h.keys.push_back(key);
    ++key_scratch[key];
    if (block_scratch[other] == 0) h.blocks.push_back(other);
    ++block_scratch[other];
  }
  for (auto key : h.keys) {
    h.counts.push_back(key_scratch[key]);
    key_scratch[key] = 0;
  }
  for (auto blk : h.blocks) {
    h.block_totals.push_back(block_scratch[blk]);
    block_scratch[blk] = 0;
  }
}

// Exact entropy delta for moving one entity (with histogram h) from block
// row y0 to y on the given side. Row here means user cluster when
// user_side, item cluster otherwise.
inline double bipartite_move_delta(const BipartiteHardModel& m, bool user_side,
                                   std::uint32_t y0, std::uint32_t y,
                                   const EntityHistogram& h) {
  if (y == y0) return 0.0;
  auto total = [&](std::uint32_t row, std::uint32_t col) {
    return user_side ? m.total(row, col) : m.total(col, row);
  };
  auto count = [&](std::uint32_t row, std::uint32_t col, std::uint32_t r) {
    return user_side ? m.count(row, col, r) : m.count(col, row, r);
  };
  double delta = 0.0;
  for (std::size_t bi = 0; bi < h.blocks.size(); ++bi) {
    std::uint32_t col = h.blocks[bi];
    std::int64_t c = h.block_totals[bi];
    delta += xlnx(total(y0, col) - c) - xlnx(total(y0, col));
    delta += xlnx(total(y, col) + c) - xlnx(total(y, col));
  }
  for (std::size_t e = 0; e < h.keys.size(); ++e) {
    std::uint32_t col = h.keys[e] / m.rating_count;
    std::uint32_t r = h.keys[e] % m.rating_count;
    std::int64_t c = h.counts[e];
    delta -= xlnx(count(y0, col, r) - c) - xlnx(count(y0, col, r));
    delta -= xlnx(count(y, col, r) + c) - xlnx(count(y, col, r));
  }
  return delta;
}

}  // namespace detail

// Alternating user/item Generalized k-means on the bipartite rating model.
// Each iteration runs a frozen user sweep then a frozen item sweep, each
// over an alpha fraction sampled without replacement.
inline BipartiteFitResult hard_fit_bipartite(const RatingDataset& data,
                                             const HardFitConfig& cfg) {
  cfg.validate();
  if (data.observations.empty()) throw std::invalid_argument("empty dataset");
  auto start = std::chrono::steady_clock::now();
  auto elapsed = [&start] {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  };

  std::vector<std::uint32_t> zu(data.user_count), zv(data.item_count);
#pragma omp parallel for schedule(static)
  for (std::int64_t u = 0; u < static_cast<std::int64_t>(data.user_count); ++u) {
    auto rng = cfg.rng.stream(stream_domain::kHardBipartiteInit, 0, u);
    zu[u] = static_cast<std::uint32_t>(rng.below(cfg.k));
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t v = 0; v < static_cast<std::int64_t>(data.item_count); ++v) {
    auto rng = cfg.rng.stream(stream_domain::kHardBipartiteInit, 0,
                              (1ull << 32) | static_cast<std::uint64_t>(v));
    zv[v] = static_cast<std::uint32_t>(rng.below(cfg.l));
  }
  BipartiteHardModel m =
      BipartiteHardModel::from_assignments(data, std::move(zu), std::move(zv), cfg.k, cfg.l);

  BipartiteFitResult result;
  double entropy = bipartite_entropy(m);
  result.trace.push_back({0, entropy, elapsed()});
  result.model = m;
  result.best_entropy = entropy;
  const std::uint32_t window =
      3 * std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::ceil(1.0 / cfg.alpha)));
  std::vector<double> history{entropy};

  auto sweep = [&](bool user_side, std::uint32_t iteration) {
    std::uint32_t n = user_side ? data.user_count : data.item_count;
    std::uint32_t side_k = user_side ? cfg.k : cfg.l;
    if (side_k == 1) return;
    std::uint32_t sample_count = std::min<std::uint32_t>(
        n, static_cast<std::uint32_t>(std::ceil(cfg.alpha * n)));
    auto rng = cfg.rng.stream(stream_domain::kHardBipartiteSample, iteration,
                              user_side ? 0 : 1);
    std::vector<std::uint32_t> sampled = sample_without_replacement(n, sample_count, rng);
    std::vector<std::uint32_t> targets(sampled.size());

    const auto& assignment = user_side ? m.user_assignment : m.item_assignment;
    const auto& other_assignment = user_side ? m.item_assignment : m.user_assignment;
    std::uint32_t other_k = user_side ? cfg.l : cfg.k;

#pragma omp parallel
    {
      detail::EntityHistogram h;
      std::vector<std::int64_t> key_scratch(std::size_t(other_k) * m.rating_count, 0);
      std::vector<std::int64_t> block_scratch(other_k, 0);
#pragma omp for schedule(dynamic, 64)
      for (std::int64_t s = 0; s < static_cast<std::int64_t>(sampled.size()); ++s) {
        std::uint32_t ent = sampled[s];
        const auto& obs = user_side ? data.by_user[ent] : data.by_item[ent];
        std::uint32_t y0 = assignment[ent];
        if (obs.empty()) {
          targets[s] = y0;
          continue;
        }
        detail::build_histogram(data, obs, other_assignment, user_side, m.rating_count, h,
                                key_scratch, block_scratch);
        std::uint32_t best = y0;
        double best_delta = -1e-12;
        for (std::uint32_t y = 0; y < side_k; ++y) {
          if (y == y0) continue;
          double delta = detail::bipartite_move_delta(m, user_side, y0, y, h);
          if (delta < best_delta) {
            best_delta = delta;
            best = y;
          }
        }
        targets[s] = best;
      }
    }

    // Apply the batch: shift each moved entity's histogram between rows.
    for (std::size_t s = 0; s < sampled.size(); ++s) {
      std::uint32_t ent = sampled[s];
      std::uint32_t y0 = user_side ? m.user_assignment[ent] : m.item_assignment[ent];
      std::uint32_t y = targets[s];
      if (y == y0) continue;
      const auto& obs = user_side ? data.by_user[ent] : data.by_item[ent];
      for (auto idx : obs) {
        const Observation& o = data.observations[idx];
        std::uint32_t col = user_side ? m.item_assignment[o.item] : m.user_assignment[o.user];
        std::uint32_t i0 = user_side ? y0 : col, j0 = user_side ? col : y0;
        std::uint32_t i1 = user_side ? y : col, j1 = user_side ? col : y;
        --m.counts[m.cidx(i0, j0, o.rating)];
        --m.totals[std::size_t(i0) * m.l + j0];
        ++m.counts[m.cidx(i1, j1, o.rating)];
        ++m.totals[std::size_t(i1) * m.l + j1];
      }
      (user_side ? m.user_assignment : m.item_assignment)[ent] = y;
    }
  };

  for (std::uint32_t it = 1; it <= cfg.max_iterations; ++it) {
    sweep(true, it);
    sweep(false, it);
    entropy = bipartite_entropy(m);
    result.trace.push_back({it, entropy, elapsed()});
    if (entropy < result.best_entropy) {
      result.best_entropy = entropy;
      result.model = m;
    }
    history.push_back(entropy);
    if (history.size() > window) {
      double before = history[history.size() - 1 - window];
      double rel = std::abs(entropy - before) / std::max(std::abs(before), 1.0);
      if (rel < cfg.convergence_tol) break;
    }
  }
  return result;
}

}  // namespace sbmkit
