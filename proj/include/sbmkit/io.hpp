#pragma once

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "sbmkit/graphgen.hpp"
#include "sbmkit/types.hpp"

namespace sbmkit {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  return out;
}

}  // namespace detail

// MovieLens-style `user<TAB>item<TAB>rating<TAB>timestamp` lines. Ids are
// remapped to dense 0-based indices in first-appearance order; the
// timestamp column is optional and ignored.
inline RatingDataset load_ratings(const std::string& path) {
  auto in = detail::open_input(path);
  std::unordered_map<std::uint64_t, std::uint32_t> user_ids, item_ids;
  std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> triples;
  std::unordered_map<std::uint64_t, std::size_t> seen;  // pair -> first line
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::uint64_t user_id, item_id;
    double rating;
    if (!(ls >> user_id >> item_id >> rating))
      throw IoError(path + ":" + std::to_string(lineno) + ": malformed rating line");
    auto [uit, unew] = user_ids.try_emplace(user_id, static_cast<std::uint32_t>(user_ids.size()));
    auto [vit, vnew] = item_ids.try_emplace(item_id, static_cast<std::uint32_t>(item_ids.size()));
    std::uint64_t key = (static_cast<std::uint64_t>(uit->second) << 32) | vit->second;
    auto [sit, fresh] = seen.try_emplace(key, lineno);
    if (!fresh)
      throw IoError(path + ":" + std::to_string(lineno) + ": duplicate (user, item) pair, first seen at line " +
                    std::to_string(sit->second));
    triples.push_back({uit->second, vit->second, rating});
  }
  if (triples.empty()) throw IoError(path + ": empty dataset");
  return RatingDataset::from_dense(static_cast<std::uint32_t>(user_ids.size()),
                                   static_cast<std::uint32_t>(item_ids.size()), triples);
}

// Whitespace-separated `u v` edge lines; `%` and `#` lines are comments.
// Ids are densified in first-appearance order; self-loops are dropped and
// duplicate edges collapsed.
inline SimpleGraph load_graph(const std::string& path) {
  auto in = detail::open_input(path);
  std::unordered_map<std::uint64_t, std::uint32_t> ids;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> edges;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t at = line.find_first_not_of(" \t\r");
    if (at == std::string::npos) continue;
    if (line[at] == '%' || line[at] == '#') continue;
    std::istringstream ls(line);
    std::uint64_t a, b;
    if (!(ls >> a >> b))
      throw IoError(path + ":" + std::to_string(lineno) + ": malformed edge line");
    auto ai = ids.try_emplace(a, static_cast<std::uint32_t>(ids.size())).first->second;
    auto bi = ids.try_emplace(b, static_cast<std::uint32_t>(ids.size())).first->second;
    edges.push_back({ai, bi});
  }
  return SimpleGraph::from_edges(static_cast<std::uint32_t>(ids.size()), edges);
}

inline void write_soft_model(const SoftModel& m, const std::vector<double>& rating_alphabet,
                             const std::string& path) {
  nlohmann::json j;
  j["k"] = m.k;
  j["l"] = m.l;
  j["user_count"] = m.user_count;
  j["item_count"] = m.item_count;
  j["rating_alphabet"] = rating_alphabet;
  j["user_h"] = m.user_h;
  j["item_h"] = m.item_h;
  j["theta"] = m.theta;
  auto out = detail::open_output(path);
  out << j.dump(2) << '\n';
}

inline SoftModel read_soft_model(const std::string& path, std::vector<double>* alphabet = nullptr) {
  auto in = detail::open_input(path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  SoftModel m;
  m.k = j.at("k");
  m.l = j.at("l");
  m.user_count = j.at("user_count");
  m.item_count = j.at("item_count");
  m.user_h = j.at("user_h").get<std::vector<double>>();
  m.item_h = j.at("item_h").get<std::vector<double>>();
  m.theta = j.at("theta").get<std::vector<double>>();
  std::vector<double> alpha = j.at("rating_alphabet").get<std::vector<double>>();
  m.rating_count = static_cast<std::uint32_t>(alpha.size());
  if (alphabet) *alphabet = std::move(alpha);
  return m;
}

template <typename Trace>
inline void write_trace_csv(const Trace& trace, const std::string& path) {
  auto out = detail::open_output(path);
  out << "iteration,entropy,elapsed_seconds\n";
  char buf[96];
  for (const auto& p : trace) {
    std::snprintf(buf, sizeof(buf), "%u,%.17g,%.6f\n", p.iteration, p.entropy,
                  p.elapsed_seconds);
    out << buf;
  }
}

inline void write_assignment(const std::vector<std::uint32_t>& assignment,
                             const std::string& path) {
  auto out = detail::open_output(path);
  for (std::size_t v = 0; v < assignment.size(); ++v)
    out << v << ' ' << assignment[v] << '\n';
}

inline void write_edge_list(const SimpleGraph& g, const std::string& path) {
  auto out = detail::open_output(path);
  for (std::uint32_t u = 0; u < g.n; ++u)
    for (auto v : g.adjacency[u])
      if (u < v) out << u << ' ' << v << '\n';
}

inline nlohmann::json graph_stats_json(const GraphStats& st) {
  nlohmann::json j;
  j["n"] = st.n;
  j["m"] = st.m;
  j["gcc"] = st.gcc;
  j["apl"] = st.apl;
  j["apl_stderr"] = st.apl_stderr;
  j["apl_exact"] = st.apl_exact;
  j["largest_component"] = st.largest_component;
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [deg, count] : st.degree_histogram) hist[std::to_string(deg)] = count;
  j["degree_histogram"] = hist;
  return j;
}

}  // namespace sbmkit
