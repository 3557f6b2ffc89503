#pragma once

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace sbmkit {

// Undirected simple graph in adjacency form. Lists are sorted, symmetric,
// loop-free; the sum of list lengths is 2m.
struct SimpleGraph {
  std::uint32_t n = 0;
  std::uint64_t m = 0;
  std::vector<std::vector<std::uint32_t>> adjacency;

  std::uint32_t degree(std::uint32_t v) const {
    return static_cast<std::uint32_t>(adjacency[v].size());
  }

  bool has_edge(std::uint32_t u, std::uint32_t v) const {
    const auto& a = adjacency[u];
    return std::binary_search(a.begin(), a.end(), v);
  }

  // Drops self-loops, collapses duplicates.
  static SimpleGraph from_edges(std::uint32_t n,
                                const std::vector<std::pair<std::uint32_t, std::uint32_t>>& edges) {
    SimpleGraph g;
    g.n = n;
    g.adjacency.assign(n, {});
    for (auto [u, v] : edges) {
      if (u >= n || v >= n) throw std::invalid_argument("edge endpoint out of range");
      if (u == v) continue;
      g.adjacency[u].push_back(v);
      g.adjacency[v].push_back(u);
    }
    for (auto& a : g.adjacency) {
      std::sort(a.begin(), a.end());
      a.erase(std::unique(a.begin(), a.end()), a.end());
    }
    std::uint64_t total = 0;
    for (const auto& a : g.adjacency) total += a.size();
    g.m = total / 2;
    return g;
  }

  void validate() const {
    if (adjacency.size() != n) throw std::invalid_argument("adjacency size != n");
    std::uint64_t total = 0;
    for (std::uint32_t u = 0; u < n; ++u) {
      const auto& a = adjacency[u];
      total += a.size();
      if (!std::is_sorted(a.begin(), a.end()))
        throw std::invalid_argument("adjacency list not sorted");
      if (std::adjacent_find(a.begin(), a.end()) != a.end())
        throw std::invalid_argument("parallel edge");
      for (auto v : a) {
        if (v >= n) throw std::invalid_argument("neighbor out of range");
        if (v == u) throw std::invalid_argument("self-loop");
        if (!has_edge(v, u)) throw std::invalid_argument("asymmetric adjacency");
      }
    }
    if (total != 2 * m) throw std::invalid_argument("adjacency length sum != 2m");
  }
};

struct Observation {
  std::uint32_t user;
  std::uint32_t item;
  std::uint32_t rating;  // index into the rating alphabet
};

// Bipartite (user, item, rating) observations over a finite rating alphabet.
// At most one observation per (user, item) pair.
struct RatingDataset {
  std::uint32_t user_count = 0;
  std::uint32_t item_count = 0;
  std::vector<double> rating_alphabet;  // sorted distinct values
  std::vector<Observation> observations;
  std::vector<std::vector<std::uint32_t>> by_user;  // observation indices
  std::vector<std::vector<std::uint32_t>> by_item;

  std::uint32_t rating_count() const {
    return static_cast<std::uint32_t>(rating_alphabet.size());
  }

  double rating_value(const Observation& o) const { return rating_alphabet[o.rating]; }

  void build_index() {
    by_user.assign(user_count, {});
    by_item.assign(item_count, {});
    for (std::uint32_t i = 0; i < observations.size(); ++i) {
      by_user[observations[i].user].push_back(i);
      by_item[observations[i].item].push_back(i);
    }
  }

  static RatingDataset from_dense(
      std::uint32_t user_count, std::uint32_t item_count,
      const std::vector<std::tuple<std::uint32_t, std::uint32_t, double>>& triples) {
    if (triples.empty()) throw std::invalid_argument("empty dataset");
    RatingDataset d;
    d.user_count = user_count;
    d.item_count = item_count;
    d.rating_alphabet.reserve(triples.size());
    for (const auto& [u, v, r] : triples) d.rating_alphabet.push_back(r);
    std::sort(d.rating_alphabet.begin(), d.rating_alphabet.end());
    d.rating_alphabet.erase(
        std::unique(d.rating_alphabet.begin(), d.rating_alphabet.end()),
        d.rating_alphabet.end());
    std::unordered_set<std::uint64_t> seen;
    seen.reserve(triples.size() * 2);
    d.observations.reserve(triples.size());
    for (const auto& [u, v, r] : triples) {
      if (u >= user_count || v >= item_count)
        throw std::invalid_argument("observation endpoint out of range");
      std::uint64_t key = static_cast<std::uint64_t>(u) * item_count + v;
      if (!seen.insert(key).second)
        throw std::invalid_argument("duplicate (user, item) observation: user " +
                                    std::to_string(u) + " item " + std::to_string(v));
      auto it = std::lower_bound(d.rating_alphabet.begin(), d.rating_alphabet.end(), r);
      d.observations.push_back(
          {u, v, static_cast<std::uint32_t>(it - d.rating_alphabet.begin())});
    }
    d.build_index();
    return d;
  }

  // Same universe and alphabet, restricted to the given observation indices.
  RatingDataset subset(const std::vector<std::uint32_t>& indices) const {
    RatingDataset d;
    d.user_count = user_count;
    d.item_count = item_count;
    d.rating_alphabet = rating_alphabet;
    d.observations.reserve(indices.size());
    for (auto i : indices) d.observations.push_back(observations[i]);
    d.build_index();
    return d;
  }

  void validate() const {
    for (const auto& o : observations) {
      if (o.user >= user_count || o.item >= item_count)
        throw std::invalid_argument("observation endpoint out of range");
      if (o.rating >= rating_alphabet.size())
        throw std::invalid_argument("rating index out of range");
    }
    if (!std::is_sorted(rating_alphabet.begin(), rating_alphabet.end()))
      throw std::invalid_argument("rating alphabet not sorted");
    std::unordered_set<std::uint64_t> seen;
    for (const auto& o : observations) {
      std::uint64_t key = static_cast<std::uint64_t>(o.user) * item_count + o.item;
      if (!seen.insert(key).second)
        throw std::invalid_argument("duplicate (user, item) observation");
    }
  }
};

// Membership rows and mixing tensor of the soft block model. Every user row
// (length k), item row (length l) and theta slice over ratings is a point on
// the probability simplex.
struct SoftModel {
  std::uint32_t k = 0;
  std::uint32_t l = 0;
  std::uint32_t user_count = 0;
  std::uint32_t item_count = 0;
  std::uint32_t rating_count = 0;
  std::vector<double> user_h;  // user_count x k
  std::vector<double> item_h;  // item_count x l
  std::vector<double> theta;   // k x l x rating_count

  double* user_row(std::uint32_t u) { return user_h.data() + std::size_t(u) * k; }
  const double* user_row(std::uint32_t u) const { return user_h.data() + std::size_t(u) * k; }
  double* item_row(std::uint32_t v) { return item_h.data() + std::size_t(v) * l; }
  const double* item_row(std::uint32_t v) const { return item_h.data() + std::size_t(v) * l; }

  std::size_t theta_index(std::uint32_t i, std::uint32_t j, std::uint32_t r) const {
    return (std::size_t(i) * l + j) * rating_count + r;
  }
  double* theta_slice(std::uint32_t i, std::uint32_t j) {
    return theta.data() + (std::size_t(i) * l + j) * rating_count;
  }
  const double* theta_slice(std::uint32_t i, std::uint32_t j) const {
    return theta.data() + (std::size_t(i) * l + j) * rating_count;
  }

  void validate(double tol = 1e-9) const {
    if (user_h.size() != std::size_t(user_count) * k) throw std::invalid_argument("user_h size");
    if (item_h.size() != std::size_t(item_count) * l) throw std::invalid_argument("item_h size");
    if (theta.size() != std::size_t(k) * l * rating_count) throw std::invalid_argument("theta size");
    auto check_simplex = [tol](const double* row, std::uint32_t len, const char* what) {
      double sum = 0.0;
      for (std::uint32_t i = 0; i < len; ++i) {
        if (row[i] < 0.0) throw std::invalid_argument(std::string(what) + ": negative entry");
        sum += row[i];
      }
      if (std::abs(sum - 1.0) > tol)
        throw std::invalid_argument(std::string(what) + ": row sum " + std::to_string(sum));
    };
    for (std::uint32_t u = 0; u < user_count; ++u) check_simplex(user_row(u), k, "user_h");
    for (std::uint32_t v = 0; v < item_count; ++v) check_simplex(item_row(v), l, "item_h");
    for (std::uint32_t i = 0; i < k; ++i)
      for (std::uint32_t j = 0; j < l; ++j)
        check_simplex(theta_slice(i, j), rating_count, "theta");
  }
};

// Hard assignment of vertices to clusters plus cached block statistics.
// block_edges stores d_ij for i <= j in a flat upper triangle.
struct HardClustering {
  std::uint32_t k = 0;
  std::vector<std::uint32_t> assignment;
  std::vector<std::int64_t> cluster_sizes;
  std::vector<std::int64_t> block_edges;

  std::uint32_t n() const { return static_cast<std::uint32_t>(assignment.size()); }

  std::size_t tri_index(std::uint32_t i, std::uint32_t j) const {
    if (i > j) std::swap(i, j);
    return std::size_t(i) * k - std::size_t(i) * (i - 1) / 2 + (j - i);
  }

  std::int64_t edges(std::uint32_t i, std::uint32_t j) const {
    return block_edges[tri_index(i, j)];
  }

  // D_ij: number of vertex pairs the block pair can host.
  std::int64_t pair_count(std::uint32_t i, std::uint32_t j) const {
    if (i == j) return cluster_sizes[i] * (cluster_sizes[i] - 1) / 2;
    return cluster_sizes[i] * cluster_sizes[j];
  }

  std::int64_t non_edges(std::uint32_t i, std::uint32_t j) const {
    return pair_count(i, j) - edges(i, j);
  }

  static HardClustering from_assignment(const SimpleGraph& g,
                                        std::vector<std::uint32_t> assignment,
                                        std::uint32_t k) {
    HardClustering c;
    c.k = k;
    c.assignment = std::move(assignment);
    if (c.assignment.size() != g.n) throw std::invalid_argument("assignment size != n");
    c.cluster_sizes.assign(k, 0);
    for (auto z : c.assignment) {
      if (z >= k) throw std::invalid_argument("cluster index out of range");
      ++c.cluster_sizes[z];
    }
    c.block_edges.assign(std::size_t(k) * (k + 1) / 2, 0);
    for (std::uint32_t u = 0; u < g.n; ++u)
      for (auto v : g.adjacency[u])
        if (u < v) ++c.block_edges[c.tri_index(c.assignment[u], c.assignment[v])];
    return c;
  }

  // Applies a batch of (vertex, target) reassignments with incremental
  // integer count updates. Counts depend only on the final assignment, so
  // the application order is irrelevant; moves are processed as given.
  void apply_moves(const SimpleGraph& g,
                   const std::vector<std::pair<std::uint32_t, std::uint32_t>>& moves) {
    for (auto [v, target] : moves) {
      std::uint32_t from = assignment[v];
      if (from == target) continue;
      for (auto w : g.adjacency[v]) {
        std::uint32_t zw = assignment[w];
        --block_edges[tri_index(from, zw)];
        ++block_edges[tri_index(target, zw)];
      }
      --cluster_sizes[from];
      ++cluster_sizes[target];
      assignment[v] = target;
    }
  }

  void validate(const SimpleGraph& g) const {
    std::int64_t nsum = 0;
    for (auto s : cluster_sizes) nsum += s;
    if (nsum != static_cast<std::int64_t>(g.n))
      throw std::invalid_argument("cluster sizes do not sum to n");
    std::int64_t msum = 0;
    for (std::uint32_t i = 0; i < k; ++i)
      for (std::uint32_t j = i; j < k; ++j) {
        std::int64_t d = edges(i, j);
        if (d < 0 || d > pair_count(i, j))
          throw std::invalid_argument("block edge count out of [0, D_ij]");
        msum += d;
      }
    if (msum != static_cast<std::int64_t>(g.m))
      throw std::invalid_argument("block edge counts do not sum to m");
  }
};

// Fitted edge-probability matrix used to regenerate graphs and score entropy.
struct BlockModelSummary {
  std::uint32_t k = 0;
  std::vector<std::int64_t> cluster_sizes;
  std::vector<double> edge_probability;  // k x k, symmetric

  double p(std::uint32_t i, std::uint32_t j) const {
    return edge_probability[std::size_t(i) * k + j];
  }

  static BlockModelSummary from_clustering(const HardClustering& c) {
    BlockModelSummary s;
    s.k = c.k;
    s.cluster_sizes = c.cluster_sizes;
    s.edge_probability.assign(std::size_t(c.k) * c.k, 0.0);
    for (std::uint32_t i = 0; i < c.k; ++i)
      for (std::uint32_t j = i; j < c.k; ++j) {
        std::int64_t pairs = c.pair_count(i, j);
        double p = pairs == 0 ? 0.0 : static_cast<double>(c.edges(i, j)) / pairs;
        s.edge_probability[std::size_t(i) * c.k + j] = p;
        s.edge_probability[std::size_t(j) * c.k + i] = p;
      }
    return s;
  }

  void validate() const {
    if (edge_probability.size() != std::size_t(k) * k)
      throw std::invalid_argument("probability matrix size");
    for (std::uint32_t i = 0; i < k; ++i)
      for (std::uint32_t j = 0; j < k; ++j) {
        double v = p(i, j);
        if (v < 0.0 || v > 1.0) throw std::invalid_argument("edge probability outside [0,1]");
        if (v != p(j, i)) throw std::invalid_argument("probability matrix not symmetric");
      }
  }
};

}  // namespace sbmkit
