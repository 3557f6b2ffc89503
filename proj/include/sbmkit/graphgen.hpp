#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <random>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sbmkit/rng.hpp"
#include "sbmkit/types.hpp"

namespace sbmkit {

struct GraphStats {
  std::uint32_t n = 0;
  std::uint64_t m = 0;
  double gcc = 0.0;
  double apl = 0.0;
  double apl_stderr = 0.0;
  bool apl_exact = false;
  std::uint32_t largest_component = 0;
  std::map<std::uint32_t, std::uint64_t> degree_histogram;
};

namespace detail {

// Uniform distinct vertex pair inside one block pair; `code` identifies the
// pair within the block so a hash set can reject duplicates.
struct PairSampler {
  std::int64_t si, sj;
  bool diagonal;

  std::uint64_t draw_code(SplitMix64& rng) const {
    if (diagonal) {
      for (;;) {
        std::uint64_t a = rng.below(static_cast<std::uint64_t>(si));
        std::uint64_t b = rng.below(static_cast<std::uint64_t>(si));
        if (a == b) continue;
        if (a > b) std::swap(a, b);
        return a * static_cast<std::uint64_t>(si) + b;
      }
    }
    std::uint64_t a = rng.below(static_cast<std::uint64_t>(si));
    std::uint64_t b = rng.below(static_cast<std::uint64_t>(sj));
    return a * static_cast<std::uint64_t>(sj) + b;
  }

  std::pair<std::uint32_t, std::uint32_t> decode(std::uint64_t code) const {
    std::uint64_t width = static_cast<std::uint64_t>(diagonal ? si : sj);
    return {static_cast<std::uint32_t>(code / width),
            static_cast<std::uint32_t>(code % width)};
  }

  // All codes in deterministic order, used when enumerating the complement.
  template <typename F>
  void for_each_code(F&& f) const {
    if (diagonal) {
      for (std::int64_t a = 0; a < si; ++a)
        for (std::int64_t b = a + 1; b < si; ++b)
          f(static_cast<std::uint64_t>(a) * si + b);
    } else {
      for (std::int64_t a = 0; a < si; ++a)
        for (std::int64_t b = 0; b < sj; ++b)
          f(static_cast<std::uint64_t>(a) * sj + b);
    }
  }
};

}  // namespace detail

// Samples a fresh graph from the fitted block model. Vertices are laid out
// contiguously by cluster (cluster i owns one id range); each block pair
// draws its edge count from Binomial(D_ij, p_ij) and then places that many
// distinct pairs uniformly, switching to complement sampling when the count
// exceeds half the pair budget.
inline SimpleGraph regenerate(const BlockModelSummary& summary, const RngSpec& rng,
                              std::uint32_t generation = 0) {
  const std::uint32_t k = summary.k;
  std::vector<std::uint32_t> offset(k + 1, 0);
  for (std::uint32_t i = 0; i < k; ++i)
    offset[i + 1] = offset[i] + static_cast<std::uint32_t>(summary.cluster_sizes[i]);
  const std::uint32_t n = offset[k];

  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (std::uint32_t i = 0; i < k; ++i)
    for (std::uint32_t j = i; j < k; ++j) pairs.push_back({i, j});

  std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> block_edges(pairs.size());

#pragma omp parallel for schedule(dynamic, 1)
  for (std::int64_t pi = 0; pi < static_cast<std::int64_t>(pairs.size()); ++pi) {
    auto [i, j] = pairs[pi];
    std::int64_t si = summary.cluster_sizes[i], sj = summary.cluster_sizes[j];
    std::int64_t pair_budget = i == j ? si * (si - 1) / 2 : si * sj;
    double p = summary.p(i, j);
    if (pair_budget == 0 || p <= 0.0) continue;

    auto engine = rng.stream(stream_domain::kRegenerate, generation, pi);
    std::int64_t count = pair_budget;
    if (p < 1.0) {
      std::binomial_distribution<std::int64_t> binom(pair_budget, p);
      count = binom(engine);
    }
    if (count == 0) continue;

    detail::PairSampler sampler{si, sj, i == j};
    auto& out = block_edges[pi];
    out.reserve(count);
    auto emit = [&](std::uint64_t code) {
      auto [a, b] = sampler.decode(code);
      out.push_back({offset[i] + a, offset[j] + b});
    };
    if (count * 2 <= pair_budget) {
      std::unordered_set<std::uint64_t> chosen;
      chosen.reserve(count * 2);
      while (static_cast<std::int64_t>(chosen.size()) < count) {
        std::uint64_t code = sampler.draw_code(engine);
        if (chosen.insert(code).second) emit(code);
      }
    } else {
      std::unordered_set<std::uint64_t> excluded;
      std::int64_t skip = pair_budget - count;
      excluded.reserve(skip * 2);
      while (static_cast<std::int64_t>(excluded.size()) < skip)
        excluded.insert(sampler.draw_code(engine));
      sampler.for_each_code([&](std::uint64_t code) {
        if (!excluded.count(code)) emit(code);
      });
    }
  }

  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::size_t total = 0;
  for (const auto& be : block_edges) total += be.size();
  edges.reserve(total);
  for (const auto& be : block_edges) edges.insert(edges.end(), be.begin(), be.end());
  return SimpleGraph::from_edges(n, edges);
}

namespace detail {

inline std::vector<std::uint32_t> largest_component_vertices(const SimpleGraph& g) {
  std::vector<std::int32_t> comp(g.n, -1);
  std::int32_t comp_count = 0;
  std::vector<std::uint32_t> queue;
  std::vector<std::uint64_t> comp_size;
  for (std::uint32_t s = 0; s < g.n; ++s) {
    if (comp[s] >= 0) continue;
    std::int32_t id = comp_count++;
    comp_size.push_back(0);
    queue.clear();
    queue.push_back(s);
    comp[s] = id;
    for (std::size_t head = 0; head < queue.size(); ++head) {
      std::uint32_t u = queue[head];
      ++comp_size[id];
      for (auto w : g.adjacency[u])
        if (comp[w] < 0) {
          comp[w] = id;
          queue.push_back(w);
        }
    }
  }
  std::int32_t best = 0;
  for (std::int32_t c = 1; c < comp_count; ++c)
    if (comp_size[c] > comp_size[best]) best = c;
  std::vector<std::uint32_t> vertices;
  vertices.reserve(comp_count ? comp_size[best] : 0);
  for (std::uint32_t v = 0; v < g.n; ++v)
    if (comp[v] == best) vertices.push_back(v);
  return vertices;
}

// Sum of distances from `source` to every vertex reachable from it.
inline std::uint64_t bfs_distance_sum(const SimpleGraph& g, std::uint32_t source,
                                      std::vector<std::uint32_t>& dist,
                                      std::vector<std::uint32_t>& queue) {
  const std::uint32_t unseen = 0xffffffffu;
  std::fill(dist.begin(), dist.end(), unseen);
  queue.clear();
  queue.push_back(source);
  dist[source] = 0;
  std::uint64_t sum = 0;
  for (std::size_t head = 0; head < queue.size(); ++head) {
    std::uint32_t u = queue[head];
    sum += dist[u];
    for (auto w : g.adjacency[u])
      if (dist[w] == unseen) {
        dist[w] = dist[u] + 1;
        queue.push_back(w);
      }
  }
  return sum;
}

}  // namespace detail

// Degree histogram and GCC are exact. APL covers the largest connected
// component: exact all-pairs BFS when the component has at most 2000
// vertices, otherwise estimated from BFS at uniformly sampled sources with
// the standard error of the per-source means.
inline GraphStats graph_stats(const SimpleGraph& g, std::uint32_t apl_sources,
                              const RngSpec& rng) {
  GraphStats st;
  st.n = g.n;
  st.m = g.m;
  for (std::uint32_t v = 0; v < g.n; ++v) ++st.degree_histogram[g.degree(v)];

  // gcc = 3 * triangles / wedges; per-edge sorted intersections count each
  // triangle three times.
  std::uint64_t wedges = 0;
  for (std::uint32_t v = 0; v < g.n; ++v) {
    std::uint64_t d = g.degree(v);
    wedges += d * (d - 1) / 2;
  }
  std::uint64_t triangle_incidences = 0;
#pragma omp parallel for schedule(dynamic, 256) reduction(+ : triangle_incidences)
  for (std::int64_t u = 0; u < static_cast<std::int64_t>(g.n); ++u) {
    const auto& au = g.adjacency[u];
    for (auto v : au) {
      if (v <= u) continue;
      const auto& av = g.adjacency[v];
      auto it = au.begin(), jt = av.begin();
      while (it != au.end() && jt != av.end()) {
        if (*it < *jt)
          ++it;
        else if (*jt < *it)
          ++jt;
        else {
          ++triangle_incidences;
          ++it;
          ++jt;
        }
      }
    }
  }
  st.gcc = wedges == 0 ? 0.0 : static_cast<double>(triangle_incidences) / wedges;

  std::vector<std::uint32_t> component = detail::largest_component_vertices(g);
  st.largest_component = static_cast<std::uint32_t>(component.size());
  if (component.size() < 2) {
    st.apl_exact = true;
    return st;
  }

  const std::uint64_t cn = component.size();
  if (cn <= 2000) {
    std::vector<std::uint64_t> sums(cn, 0);
#pragma omp parallel
    {
      std::vector<std::uint32_t> dist(g.n), queue;
      queue.reserve(g.n);
#pragma omp for schedule(dynamic, 16)
      for (std::int64_t s = 0; s < static_cast<std::int64_t>(cn); ++s)
        sums[s] = detail::bfs_distance_sum(g, component[s], dist, queue);
    }
    std::uint64_t total = 0;
    for (auto v : sums) total += v;
    st.apl = static_cast<double>(total) / (static_cast<double>(cn) * (cn - 1));
    st.apl_stderr = 0.0;
    st.apl_exact = true;
    return st;
  }

  std::uint32_t source_count =
      static_cast<std::uint32_t>(std::min<std::uint64_t>(apl_sources, cn));
  auto pick = rng.stream(stream_domain::kAplSources, 0, 0);
  std::vector<std::uint32_t> picks =
      sample_without_replacement(static_cast<std::uint32_t>(cn), source_count, pick);
  std::vector<double> means(source_count);
#pragma omp parallel
  {
    std::vector<std::uint32_t> dist(g.n), queue;
    queue.reserve(g.n);
#pragma omp for schedule(dynamic, 4)
    for (std::int64_t s = 0; s < static_cast<std::int64_t>(source_count); ++s) {
      std::uint64_t sum = detail::bfs_distance_sum(g, component[picks[s]], dist, queue);
      means[s] = static_cast<double>(sum) / (cn - 1);
    }
  }
  double mean = 0.0;
  for (auto v : means) mean += v;
  mean /= source_count;
  double var = 0.0;
  for (auto v : means) var += (v - mean) * (v - mean);
  var = source_count > 1 ? var / (source_count - 1) : 0.0;
  st.apl = mean;
  st.apl_stderr = std::sqrt(var / source_count);
  st.apl_exact = false;
  return st;
}

}  // namespace sbmkit
