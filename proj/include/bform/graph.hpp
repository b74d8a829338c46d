#pragma once

#include "bform/common.hpp"

#include <numeric>
#include <set>
#include <utility>
#include <vector>

namespace bform {

/// Oriented edge between two 0-based vertices. `from` is the initial node.
struct Edge {
  int from = 0;
  int to = 0;
  friend bool operator==(const Edge&, const Edge&) = default;
};

inline std::string edge_label(const Edge& e) {
  return "(" + std::to_string(e.from + 1) + "," + std::to_string(e.to + 1) + ")";
}

/// Undirected interaction topology with a fixed edge orientation.
///
/// Edge k keeps the position it had in the input list, and its orientation is
/// taken verbatim, so the incidence matrix reproduces whatever ordering the
/// scenario author wrote down. Immutable after construction.
class FormationGraph {
public:
  /// `edges` are 0-based. Throws ValidationError on self-loops, duplicates
  /// (in either orientation) or out-of-range vertices.
  FormationGraph(int n, std::vector<Edge> edges, int d)
      : n_(n), d_(d), edges_(std::move(edges)), neighbors_(n > 0 ? n : 0) {
    if (n < 2) throw ValidationError("graph needs at least 2 vertices, got " + std::to_string(n));
    if (d < 2) throw ValidationError("ambient dimension must be >= 2, got " + std::to_string(d));
    std::set<std::pair<int, int>> seen;
    for (const auto& e : edges_) {
      if (e.from < 0 || e.from >= n || e.to < 0 || e.to >= n)
        throw ValidationError("edge " + edge_label(e) + " references a vertex outside 1.." +
                              std::to_string(n));
      if (e.from == e.to) throw ValidationError("edge " + edge_label(e) + " is a self-loop");
      auto key = std::minmax(e.from, e.to);
      if (!seen.insert(key).second) throw ValidationError("edge " + edge_label(e) + " is a duplicate");
      neighbors_[e.from].push_back(e.to);
      neighbors_[e.to].push_back(e.from);
    }
  }

  int vertex_count() const { return n_; }
  int edge_count() const { return static_cast<int>(edges_.size()); }
  int dimension() const { return d_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(int k) const { return edges_.at(k); }
  const std::vector<int>& neighbors(int i) const { return neighbors_.at(i); }

  /// Index of the edge joining i and j in either orientation, or -1.
  int edge_index(int i, int j) const {
    for (int k = 0; k < edge_count(); ++k) {
      const auto& e = edges_[k];
      if ((e.from == i && e.to == j) || (e.from == j && e.to == i)) return k;
    }
    return -1;
  }

private:
  int n_;
  int d_;
  std::vector<Edge> edges_;
  std::vector<std::vector<int>> neighbors_;
};

/// Builds a graph from 1-based vertex pairs as they appear in scenario files.
inline FormationGraph build_graph(int n, const std::vector<std::pair<int, int>>& one_based, int d) {
  std::vector<Edge> edges;
  edges.reserve(one_based.size());
  for (auto [i, j] : one_based) edges.push_back({i - 1, j - 1});
  return FormationGraph(n, std::move(edges), d);
}

struct IncidenceMatrix {
  Mat H;     ///< m x n, +1 at the initial node, -1 at the terminal node
  Mat H_bar; ///< md x nd, H kron I_d
};

inline Mat kron_identity(const Mat& a, int d) {
  Mat out = Mat::Zero(a.rows() * d, a.cols() * d);
  for (Eigen::Index r = 0; r < a.rows(); ++r)
    for (Eigen::Index c = 0; c < a.cols(); ++c)
      if (a(r, c) != 0.0) out.block(r * d, c * d, d, d) = a(r, c) * Mat::Identity(d, d);
  return out;
}

inline IncidenceMatrix incidence(const FormationGraph& g) {
  Mat H = Mat::Zero(g.edge_count(), g.vertex_count());
  for (int k = 0; k < g.edge_count(); ++k) {
    H(k, g.edge(k).from) = 1.0;
    H(k, g.edge(k).to) = -1.0;
  }
  return {H, kron_identity(H, g.dimension())};
}

/// L = H_bar^T H_bar (nd x nd).
inline Mat laplacian(const FormationGraph& g) {
  const Mat Hb = incidence(g).H_bar;
  return Hb.transpose() * Hb;
}

/// U = 1_n kron I_d, the translation directions.
inline Mat translation_basis(int n, int d) {
  Mat U(n * d, d);
  for (int i = 0; i < n; ++i) U.block(i * d, 0, d, d) = Mat::Identity(d, d);
  return U;
}

inline bool is_connected(const FormationGraph& g) {
  std::vector<int> parent(g.vertex_count());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  int components = g.vertex_count();
  for (const auto& e : g.edges()) {
    int a = find(e.from), b = find(e.to);
    if (a != b) {
      parent[a] = b;
      --components;
    }
  }
  return components == 1;
}

}  // namespace bform
