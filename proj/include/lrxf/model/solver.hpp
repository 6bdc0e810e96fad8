#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "lrxf/model/config.hpp"
#include "lrxf/tape.hpp"

namespace lrxf::model {

struct DivergenceError : std::runtime_error {
  DivergenceError(int step, double norm)
      : std::runtime_error("integration diverged at step " +
                           std::to_string(step) + " (state norm " +
                           std::to_string(norm) + ")"),
        step(step) {}
  int step;
};

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

template <class S>
struct Trajectory {
  using Id = typename ad::Tape<S>::Id;
  std::vector<double> times;
  std::vector<Id> states;      // one per record point; states[0] = z_r
  std::vector<Id> velocities;  // field evaluated at each recorded state
};

template <class S>
struct IntegrateResult {
  typename ad::Tape<S>::Id final_state;
  Trajectory<S> trajectory;
};

template <class S>
double frobenius_norm(const ad::Tensor<S>& t) {
  double s = 0.0;
  for (long long i = 0; i < t.size(); ++i) {
    double v = static_cast<double>(t.data()[i]);
    s += v * v;
  }
  return std::sqrt(s);
}

// Fixed-step explicit integration of dz/dt = field(z, t) from t=0 to t=1,
// recorded on the tape, so the same routine serves inference (bound
// constants) and solver-in-the-loop training (unrolled differentiation).
// Record points are hit exactly; steps must be a multiple of the record
// interval count. States above norm 1e6 abort with the step index.
template <class S, class Field>
IntegrateResult<S> integrate(ad::Tape<S>& tape,
                             typename ad::Tape<S>::Id z0, Field&& field,
                             const SolverConfig& cfg) {
  using Id = typename ad::Tape<S>::Id;
  const int n = cfg.steps;
  if (n < 1) throw SolverError("solver needs at least one step");
  const std::vector<double>& rec = cfg.record_points;
  std::vector<int> record_steps;  // step index per record point
  if (!rec.empty()) {
    if (rec.front() != 0.0 || rec.back() != 1.0)
      throw SolverError("record points must start at 0 and end at 1");
    for (std::size_t i = 0; i < rec.size(); ++i) {
      if (i > 0 && rec[i] <= rec[i - 1])
        throw SolverError("record points must be strictly sorted");
      double exact = rec[i] * n;
      int step = static_cast<int>(std::llround(exact));
      if (std::abs(exact - step) > 1e-9)
        throw SolverError(
            "record point " + std::to_string(rec[i]) +
            " is not on the step grid; choose steps as a multiple of the "
            "record interval count");
      record_steps.push_back(step);
    }
  }

  IntegrateResult<S> out;
  const double dt = 1.0 / n;
  const S dts = static_cast<S>(dt);
  std::size_t next_rec = 0;
  Id z = z0;
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / n;
    if (!tape.val(z).all_finite())
      throw DivergenceError(i, frobenius_norm(tape.val(z)));
    if (double nrm = frobenius_norm(tape.val(z)); nrm > 1e6)
      throw DivergenceError(i, nrm);
    Id k1 = field(z, t);
    if (next_rec < record_steps.size() && record_steps[next_rec] == i) {
      out.trajectory.times.push_back(rec[next_rec]);
      out.trajectory.states.push_back(z);
      out.trajectory.velocities.push_back(k1);
      ++next_rec;
    }
    switch (cfg.scheme) {
      case Scheme::kEuler: {
        z = tape.add(z, tape.scale(k1, dts));
        break;
      }
      case Scheme::kHeun: {
        Id zp = tape.add(z, tape.scale(k1, dts));
        Id k2 = field(zp, t + dt);
        z = tape.add(z, tape.scale(tape.add(k1, k2), dts / S(2)));
        break;
      }
      case Scheme::kRk4: {
        Id k2 = field(tape.add(z, tape.scale(k1, dts / S(2))), t + dt / 2);
        Id k3 = field(tape.add(z, tape.scale(k2, dts / S(2))), t + dt / 2);
        Id k4 = field(tape.add(z, tape.scale(k3, dts)), t + dt);
        Id sum = tape.add(tape.add(k1, k4),
                          tape.scale(tape.add(k2, k3), S(2)));
        z = tape.add(z, tape.scale(sum, dts / S(6)));
        break;
      }
    }
  }
  if (!tape.val(z).all_finite())
    throw DivergenceError(n, frobenius_norm(tape.val(z)));
  if (double nrm = frobenius_norm(tape.val(z)); nrm > 1e6)
    throw DivergenceError(n, nrm);
  if (!rec.empty()) {
    out.trajectory.times.push_back(1.0);
    out.trajectory.states.push_back(z);
    out.trajectory.velocities.push_back(field(z, 1.0));
  }
  out.final_state = z;
  return out;
}

// Training-mode integration defaults per the solver-mismatch strategy:
// cheap differentiable Heun with few steps.
inline SolverConfig train_solver_default() {
  SolverConfig cfg;
  cfg.scheme = Scheme::kHeun;
  cfg.steps = 5;
  return cfg;
}

inline SolverConfig infer_solver_default() {
  SolverConfig cfg;
  cfg.scheme = Scheme::kRk4;
  cfg.steps = 20;
  cfg.record_points = SolverConfig::uniform_grid();
  return cfg;
}

}  // namespace lrxf::model
