#pragma once

#include "bform/graph.hpp"
#include "bform/scenario.hpp"
#include "bform/simulation.hpp"

#include <random>
#include <set>
#include <utility>
#include <vector>

namespace bform::test {

inline FormationGraph paper_graph(int d = 3) { return build_graph(4, {{1, 2}, {2, 3}, {3, 4}, {1, 4}}, d); }

/// Three planar anchors, stacked.
inline Vec stacked_planar() {
  Vec v(6);
  v << 0, 0, 3, 0, 0, 3;
  return v;
}

inline Vec random_vector(std::mt19937_64& rng, Eigen::Index size, double scale = 1.0) {
  std::normal_distribution<double> nd;
  Vec v(size);
  for (Eigen::Index i = 0; i < size; ++i) v(i) = scale * nd(rng);
  return v;
}

inline Vec random_unit(std::mt19937_64& rng, int d) {
  Vec v;
  do v = random_vector(rng, d);
  while (v.norm() < 1e-3);
  return v.normalized();
}

/// Random connected graph: a random spanning tree plus a few extra edges.
inline FormationGraph random_connected_graph(std::mt19937_64& rng, int n, int d) {
  std::vector<Edge> edges;
  std::set<std::pair<int, int>> seen;
  auto add = [&](int a, int b) {
    auto key = std::minmax(a, b);
    if (a == b || seen.count(key)) return;
    seen.insert(key);
    edges.push_back({a, b});
  };
  for (int i = 1; i < n; ++i) add(std::uniform_int_distribution<int>(0, i - 1)(rng), i);
  const int extra = std::uniform_int_distribution<int>(0, n)(rng);
  for (int e = 0; e < extra; ++e) {
    std::uniform_int_distribution<int> pick(0, n - 1);
    add(pick(rng), pick(rng));
  }
  return FormationGraph(n, edges, d);
}

/// Configuration whose agents are pairwise at least `gap` apart.
inline Vec spread_configuration(std::mt19937_64& rng, int n, int d, double gap = 0.2) {
  for (;;) {
    Vec p = random_vector(rng, static_cast<Eigen::Index>(n) * d, 2.0);
    double dmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) dmin = std::min(dmin, (p.segment(i * d, d) - p.segment(j * d, d)).norm());
    if (dmin > gap) return p;
  }
}

inline std::string trace_csv(const Simulation& sim, const RunResult& res) {
  std::ostringstream out;
  sim.write_trace_csv(out, res);
  return out.str();
}

}  // namespace bform::test
