#pragma once

#include "bform/common.hpp"
#include "bform/dynamics.hpp"
#include "bform/formation_analysis.hpp"
#include "bform/graph.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace bform {

enum class NoiseKind {
  none,
  skew,     ///< (I + (a w)x) g, renormalized; 3D only
  rotation  ///< planar rotation of g by a*w with scalar w; 2D only
};

inline std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::skew: return "skew";
    case NoiseKind::rotation: return "rotation";
  }
  return "?";
}

struct NoiseModel {
  NoiseKind kind = NoiseKind::none;
  double magnitude = 0.02;
  std::uint64_t seed = 1;
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& w) {
  Eigen::Matrix3d s;
  s << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return s;
}

/// Per-edge linear perturbations for one step. Bearings are mapped through
/// them and renormalized; the same draw is reused at every stage of a step.
struct NoiseDraw {
  std::vector<Mat> per_edge;
};

/// What an agent set has available at one instant.
struct MeasurementSet {
  double t = 0.0;
  BearingSnapshot bearings;  ///< noisy, unit length, one per undirected edge
  int leader = 0;
  Vec leader_p;
  Vec leader_v;
};

inline Vec perturb_bearing(const Mat& perturbation, const Vec& g) {
  Vec out = perturbation * g;
  return out / out.norm();
}

inline BearingSnapshot apply_noise(const BearingSnapshot& truth, const NoiseDraw& draw) {
  if (draw.per_edge.empty()) return truth;
  BearingSnapshot out;
  out.t = truth.t;
  for (const auto& [k, g] : truth.bearings) out.bearings.emplace(k, perturb_bearing(draw.per_edge.at(k), g));
  return out;
}

/// Bearing sensor bank. One RNG stream per edge, seeded from (seed, edge),
/// so streams are independent of how many other edges exist. Each undirected
/// edge gets a single draw; g_ji is reported as -g_ij.
class BearingSensor {
public:
  BearingSensor(NoiseModel model, int edges, int d) : model_(model) {
    if (model_.magnitude < 0) throw ConfigError("noise magnitude must be non-negative");
    if (model_.kind == NoiseKind::skew && d != 3)
      throw ConfigError("skew bearing noise is defined in 3D only (d = " + std::to_string(d) +
                        "); use kind = rotation for planar scenarios");
    if (model_.kind == NoiseKind::rotation && d != 2)
      throw ConfigError("rotation bearing noise is defined in 2D only (d = " + std::to_string(d) + ")");
    streams_.reserve(static_cast<std::size_t>(edges));
    for (int k = 0; k < edges; ++k) {
      std::seed_seq seq{static_cast<std::uint32_t>(model_.seed & 0xffffffffu),
                        static_cast<std::uint32_t>(model_.seed >> 32), static_cast<std::uint32_t>(k),
                        0x9e3779b9u};
      streams_.emplace_back(seq);
    }
  }

  const NoiseModel& model() const { return model_; }

  /// Fresh perturbations for every edge; empty for noise-free sensing.
  NoiseDraw draw() {
    NoiseDraw out;
    if (model_.kind == NoiseKind::none) return out;
    out.per_edge.reserve(streams_.size());
    for (auto& rng : streams_) {
      if (model_.kind == NoiseKind::skew) {
        Eigen::Vector3d w;
        for (int c = 0; c < 3; ++c) w(c) = normal(rng);
        out.per_edge.push_back(Mat(Eigen::Matrix3d::Identity() + skew(model_.magnitude * w)));
      } else {
        const double a = model_.magnitude * normal(rng);
        Mat r(2, 2);
        r << std::cos(a), -std::sin(a), std::sin(a), std::cos(a);
        out.per_edge.push_back(r);
      }
    }
    return out;
  }

  /// Draws fresh noise and returns the measurements for this instant.
  MeasurementSet measure(const BearingSnapshot& truth, const AgentState& leader_state, int leader) {
    return measure_with(truth, leader_state, leader, draw());
  }

  static MeasurementSet measure_with(const BearingSnapshot& truth, const AgentState& leader_state, int leader,
                                     const NoiseDraw& noise) {
    return {truth.t, apply_noise(truth, noise), leader, leader_state.p, leader_state.v};
  }

private:
  double normal(std::mt19937_64& rng) { return std::normal_distribution<double>{}(rng); }

  NoiseModel model_;
  std::vector<std::mt19937_64> streams_;
};

}  // namespace bform
