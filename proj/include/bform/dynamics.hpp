#pragma once

#include "bform/common.hpp"

#include <cmath>
#include <functional>
#include <memory>
#include <numbers>
#include <vector>

namespace bform {

/// Classic fixed-step fourth-order Runge-Kutta. `State` needs `x + h * k`.
template <typename State, typename Deriv>
State rk4_step(Deriv&& f, double t, const State& x, double h) {
  const State k1 = f(t, x);
  const State k2 = f(t + 0.5 * h, State(x + (0.5 * h) * k1));
  const State k3 = f(t + 0.5 * h, State(x + (0.5 * h) * k2));
  const State k4 = f(t + h, State(x + h * k3));
  return State(x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
}

struct AgentState {
  Vec p;
  Vec v;
};

inline Vec stack_positions(const std::vector<AgentState>& agents) {
  const auto d = agents.empty() ? 0 : agents.front().p.size();
  Vec out(static_cast<Eigen::Index>(agents.size()) * d);
  for (std::size_t i = 0; i < agents.size(); ++i) out.segment(static_cast<Eigen::Index>(i) * d, d) = agents[i].p;
  return out;
}

inline Vec stack_velocities(const std::vector<AgentState>& agents) {
  const auto d = agents.empty() ? 0 : agents.front().v.size();
  Vec out(static_cast<Eigen::Index>(agents.size()) * d);
  for (std::size_t i = 0; i < agents.size(); ++i) out.segment(static_cast<Eigen::Index>(i) * d, d) = agents[i].v;
  return out;
}

inline std::vector<AgentState> unstack(const Vec& p, const Vec& v, int d) {
  std::vector<AgentState> out(static_cast<std::size_t>(p.size() / d));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto off = static_cast<Eigen::Index>(i) * d;
    out[i] = {p.segment(off, d), v.segment(off, d)};
  }
  return out;
}

/// Stacked accelerations as a function of time and the current agent states.
using InputFn = std::function<Vec(double t, const std::vector<AgentState>&)>;

/// One RK4 step of the double integrator p' = v, v' = u for every agent; the
/// input callback is evaluated at each stage.
inline std::vector<AgentState> step(const std::vector<AgentState>& agents, const InputFn& input, double t,
                                    double dt) {
  if (!(dt > 0)) throw ValidationError("step size must be positive");
  if (agents.empty()) return agents;
  const int d = static_cast<int>(agents.front().p.size());
  const auto n = static_cast<Eigen::Index>(agents.size()) * d;
  Vec x(2 * n);
  x << stack_positions(agents), stack_velocities(agents);
  auto f = [&](double tau, const Vec& s) -> Vec {
    const Vec u = input(tau, unstack(s.head(n), s.tail(n), d));
    if (!u.allFinite()) throw SimulationAbort(tau, "non-finite acceleration input");
    Vec dx(2 * n);
    dx << s.tail(n), u;
    return dx;
  };
  const Vec next = rk4_step(f, t, x, dt);
  if (!next.allFinite()) throw SimulationAbort(t + dt, "non-finite agent state");
  return unstack(next.head(n), next.tail(n), d);
}

/// Desired position, velocity and acceleration of every agent at one instant.
struct ReferenceSample {
  Vec p;
  Vec v;
  Vec u;
};

/// Pluggable desired-trajectory generator. Implementations return exact
/// derivatives.
class ReferenceTrajectory {
public:
  virtual ~ReferenceTrajectory() = default;
  virtual ReferenceSample sample(double t) const = 0;
  virtual int agents() const = 0;
  virtual int dimension() const = 0;
};

/// Four agents in 3D; agent 1 oscillates along the (1,1,0) diagonal with
/// amplitude r/2 and period 2*pi*f, agents 2-4 hold a fixed triangle.
class PaperReference final : public ReferenceTrajectory {
public:
  static constexpr double r = 2.0 * std::numbers::sqrt2;
  static constexpr double f = 1.0 / (2.0 * std::numbers::pi);

  ReferenceSample sample(double t) const override {
    ReferenceSample s{Vec::Zero(12), Vec::Zero(12), Vec::Zero(12)};
    const double ph = t / f;
    const double pos = r + 0.5 * r * std::sin(ph);
    const double vel = 0.5 * r / f * std::cos(ph);
    const double acc = -0.5 * r / (f * f) * std::sin(ph);
    s.p.segment<3>(0) << pos, pos, 0.0;
    s.v.segment<3>(0) << vel, vel, 0.0;
    s.u.segment<3>(0) << acc, acc, 0.0;
    s.p.segment<3>(3) << 0.0, r, 0.0;
    s.p.segment<3>(6) << 0.0, 0.0, 0.0;
    s.p.segment<3>(9) << r, 0.0, 0.0;
    return s;
  }
  int agents() const override { return 4; }
  int dimension() const override { return 3; }
};

/// Every agent parked at a fixed position.
class StaticReference final : public ReferenceTrajectory {
public:
  StaticReference(Vec positions, int d) : p_(std::move(positions)), d_(d) {}
  ReferenceSample sample(double) const override {
    return {p_, Vec::Zero(p_.size()), Vec::Zero(p_.size())};
  }
  int agents() const override { return static_cast<int>(p_.size()) / d_; }
  int dimension() const override { return d_; }

private:
  Vec p_;
  int d_;
};

/// Each agent circles its own anchor in the x-y plane with a shared angular
/// rate; phase offsets keep inter-agent bearings rotating.
class CircularReference final : public ReferenceTrajectory {
public:
  CircularReference(Vec anchors, int d, double radius, double omega)
      : anchors_(std::move(anchors)), d_(d), radius_(radius), omega_(omega) {}

  ReferenceSample sample(double t) const override {
    const auto n = static_cast<int>(anchors_.size()) / d_;
    ReferenceSample s{anchors_, Vec::Zero(anchors_.size()), Vec::Zero(anchors_.size())};
    for (int i = 0; i < n; ++i) {
      const double ph = omega_ * t + 2.0 * std::numbers::pi * i / n;
      const double rad = radius_ * (1.0 + 0.25 * i);
      s.p(i * d_) += rad * std::cos(ph);
      s.p(i * d_ + 1) += rad * std::sin(ph);
      s.v(i * d_) = -rad * omega_ * std::sin(ph);
      s.v(i * d_ + 1) = rad * omega_ * std::cos(ph);
      s.u(i * d_) = -rad * omega_ * omega_ * std::cos(ph);
      s.u(i * d_ + 1) = -rad * omega_ * omega_ * std::sin(ph);
    }
    return s;
  }
  int agents() const override { return static_cast<int>(anchors_.size()) / d_; }
  int dimension() const override { return d_; }

private:
  Vec anchors_;
  int d_;
  double radius_;
  double omega_;
};

inline ReferenceSample paper_reference(double t) { return PaperReference{}.sample(t); }

}  // namespace bform
