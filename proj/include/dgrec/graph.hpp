#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <istream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dgrec/ingest.hpp"
#include "dgrec/rng.hpp"

namespace dgrec {

// Undirected friendship graph over user indexes. Symmetric by construction,
// no self-loops, no duplicate neighbors.
struct SocialGraph {
  std::vector<std::vector<UserIndex>> adj;  // sorted unique
  std::size_t edge_count = 0;
  std::size_t dropped_rows = 0;  // malformed rows or ids outside the vocab

  std::size_t degree(UserIndex u) const {
    return u < adj.size() ? adj[u].size() : 0;
  }
  std::span<const UserIndex> neighbors(UserIndex u) const {
    if (u >= adj.size()) return {};
    return {adj[u].data(), adj[u].size()};
  }
  bool has_edge(UserIndex u, UserIndex v) const {
    if (u >= adj.size()) return false;
    return std::binary_search(adj[u].begin(), adj[u].end(), v);
  }
};

namespace detail {

inline bool all_digits(const std::string& s) {
  if (s.empty()) return false;
  for (char c : s) {
    if (!std::isdigit(static_cast<unsigned char>(c))) return false;
  }
  return true;
}

}  // namespace detail

// Reads `user_id,friend_id` rows against an existing user vocabulary. Both
// directions are inserted; rows touching unknown users are dropped and
// counted. A header row is auto-detected: first row whose ids are non-numeric
// and fail vocabulary lookup is skipped without counting.
inline SocialGraph load_edges(std::istream& in, const Vocab& users) {
  SocialGraph g;
  g.adj.resize(users.size());
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    line = detail::strip_cr(line);
    if (line.empty()) continue;
    auto fields = detail::split_csv(line);
    bool bad_shape = fields.size() != 2 || fields[0].empty() ||
                     fields[1].empty();
    auto a = bad_shape ? std::nullopt : users.find(fields[0]);
    auto b = bad_shape ? std::nullopt : users.find(fields[1]);
    if (first) {
      first = false;
      if ((!a || !b) && !bad_shape && (!detail::all_digits(fields[0]) ||
                                       !detail::all_digits(fields[1]))) {
        continue;  // header row
      }
    }
    if (bad_shape || !a || !b || *a == *b) {
      ++g.dropped_rows;
      continue;
    }
    g.adj[*a].push_back(*b);
    g.adj[*b].push_back(*a);
  }
  for (auto& nbrs : g.adj) {
    std::sort(nbrs.begin(), nbrs.end());
    nbrs.erase(std::unique(nbrs.begin(), nbrs.end()), nbrs.end());
    g.edge_count += nbrs.size();
  }
  g.edge_count /= 2;
  return g;
}

// Uniform sample of size k from N(u): without replacement when the
// neighborhood is large enough, padded with replacement when 0 < |N(u)| < k,
// empty when u has no friends.
inline std::vector<UserIndex> sample_neighbors(const SocialGraph& g,
                                               UserIndex u, std::size_t k,
                                               CounterRng& rng) {
  return sample_from(g.neighbors(u), k, rng);
}

inline std::vector<UserIndex> sample_from(std::span<const UserIndex> pool,
                                          std::size_t k, CounterRng& rng) {
  if (k == 0) throw std::invalid_argument("sample size must be >= 1");
  std::vector<UserIndex> out;
  if (pool.empty()) return out;
  if (pool.size() >= k) {
    // Partial Fisher-Yates over a scratch copy.
    std::vector<UserIndex> scratch(pool.begin(), pool.end());
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j =
          i + static_cast<std::size_t>(rng.next_below(scratch.size() - i));
      std::swap(scratch[i], scratch[j]);
    }
    scratch.resize(k);
    return scratch;
  }
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    out.push_back(pool[static_cast<std::size_t>(rng.next_below(pool.size()))]);
  }
  return out;
}

// Per-layer samples used to evaluate one target user's attention tree.
// layers[0] is drawn from N(root); layers[l] from the union of the neighbors
// of layers[l-1]. Layer l has exactly fanouts[l] entries whenever its source
// frontier is non-empty.
struct SampledNeighborhood {
  UserIndex root = 0;
  std::vector<std::vector<UserIndex>> layers;
};

inline SampledNeighborhood build_neighborhood(const SocialGraph& g,
                                              UserIndex root,
                                              std::span<const std::size_t>
                                                  fanouts,
                                              CounterRng& rng) {
  SampledNeighborhood hood;
  hood.root = root;
  std::vector<UserIndex> frontier{root};
  for (std::size_t k : fanouts) {
    std::vector<UserIndex> pool;
    for (UserIndex u : frontier) {
      auto nbrs = g.neighbors(u);
      pool.insert(pool.end(), nbrs.begin(), nbrs.end());
    }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    std::vector<UserIndex> layer =
        sample_from({pool.data(), pool.size()}, k, rng);
    frontier = layer;
    std::sort(frontier.begin(), frontier.end());
    frontier.erase(std::unique(frontier.begin(), frontier.end()),
                   frontier.end());
    hood.layers.push_back(std::move(layer));
    if (hood.layers.back().empty()) {
      // Nothing further to expand; remaining layers are empty too.
      while (hood.layers.size() < fanouts.size()) hood.layers.emplace_back();
      break;
    }
  }
  return hood;
}

// Exact expansion without sampling: each layer is the full (deduplicated)
// union of the previous frontier's neighborhoods. Used for dense-oracle
// comparisons and small-graph evaluation.
inline SampledNeighborhood full_neighborhood(const SocialGraph& g,
                                             UserIndex root, std::size_t L) {
  SampledNeighborhood hood;
  hood.root = root;
  std::vector<UserIndex> frontier{root};
  for (std::size_t l = 0; l < L; ++l) {
    std::vector<UserIndex> pool;
    for (UserIndex u : frontier) {
      auto nbrs = g.neighbors(u);
      pool.insert(pool.end(), nbrs.begin(), nbrs.end());
    }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    hood.layers.push_back(pool);
    frontier = std::move(pool);
  }
  return hood;
}

}  // namespace dgrec
