#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "lrxf/tape.hpp"
#include "lrxf/tensor.hpp"

namespace lrxf::ad {

// Named parameter set with gradient and Adam moment buffers. std::map keeps
// iteration order (and therefore update order) deterministic, and element
// addresses stable for Tape::leaf.
struct ParamStore {
  struct Entry {
    Tensor<float> value;
    Tensor<float> grad;
    Tensor<float> m;
    Tensor<float> v;
  };

  std::map<std::string, Entry> items;

  Tensor<float>& add(const std::string& name, Tensor<float> init) {
    Entry e;
    e.grad = Tensor<float>(init.shape());
    e.m = Tensor<float>(init.shape());
    e.v = Tensor<float>(init.shape());
    e.value = std::move(init);
    auto [it, fresh] = items.emplace(name, std::move(e));
    if (!fresh) throw TapeError("duplicate parameter name: " + name);
    return it->second.value;
  }

  Entry& at(const std::string& name) {
    auto it = items.find(name);
    if (it == items.end()) throw TapeError("unknown parameter: " + name);
    return it->second;
  }
  const Entry& at(const std::string& name) const {
    auto it = items.find(name);
    if (it == items.end()) throw TapeError("unknown parameter: " + name);
    return it->second;
  }

  void zero_grad() {
    for (auto& [name, e] : items)
      std::fill(e.grad.vec().begin(), e.grad.vec().end(), 0.0f);
  }

  long long param_count() const {
    long long n = 0;
    for (const auto& [name, e] : items) n += e.value.size();
    return n;
  }
};

struct AdamConfig {
  float lr = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

// One Adam update with bias correction over every parameter in the store.
// If any gradient entry is non-finite the whole step is skipped and false
// is returned; `skipped` counts such events.
struct AdamState {
  long long step = 0;
  long long skipped = 0;
};

inline bool adam_step(ParamStore& params, AdamState& state,
                      const AdamConfig& cfg = {}) {
  for (const auto& [name, e] : params.items)
    if (!e.grad.all_finite()) {
      ++state.skipped;
      return false;
    }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const float c1 = 1.0f - static_cast<float>(std::pow(cfg.beta1, t));
  const float c2 = 1.0f - static_cast<float>(std::pow(cfg.beta2, t));
  for (auto& [name, e] : params.items) {
    float* w = e.value.data();
    const float* g = e.grad.data();
    float* m = e.m.data();
    float* v = e.v.data();
    const long long n = e.value.size();
    for (long long i = 0; i < n; ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0f - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0f - cfg.beta2) * g[i] * g[i];
      const float mhat = m[i] / c1;
      const float vhat = v[i] / c2;
      w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
  return true;
}

// Central-difference gradient check. `forward` must rebuild the loss from
// scratch on the given tape using the supplied parameter leaves; the checker
// runs it once for analytic gradients and twice per probed coordinate for
// the numeric estimate. Relative error uses the symmetric denominator.
template <class S>
struct GradCheckResult {
  double max_rel_err = 0.0;
  int probes = 0;
};

template <class S, class Forward>
GradCheckResult<S> grad_check(
    Forward&& forward, std::map<std::string, Tensor<S>>& theta, S step,
    const std::vector<std::pair<std::string, long long>>& probe_coords) {
  using Ids = std::map<std::string, typename Tape<S>::Id>;
  auto run = [&](Tape<S>& tape) {
    Ids ids;
    for (auto& [name, t] : theta) ids[name] = tape.leaf(&t);
    return std::pair<typename Tape<S>::Id, Ids>(forward(tape, ids), ids);
  };

  Tape<S> tape;
  auto [loss, ids] = run(tape);
  const S base = tape.val(loss).item();
  if (!std::isfinite(static_cast<double>(base)))
    throw NumericError("grad_check: non-finite loss");
  tape.backward(loss);
  std::map<std::string, Tensor<S>> analytic;
  for (auto& [name, id] : ids) analytic[name] = tape.grad(id);

  GradCheckResult<S> res;
  for (const auto& [name, coord] : probe_coords) {
    S& slot = theta.at(name).vec()[static_cast<std::size_t>(coord)];
    const S orig = slot;
    slot = orig + step;
    Tape<S> tp;
    const S fp = tp.val(run(tp).first).item();
    slot = orig - step;
    Tape<S> tm;
    const S fm = tm.val(run(tm).first).item();
    slot = orig;
    if (!std::isfinite(static_cast<double>(fp)) ||
        !std::isfinite(static_cast<double>(fm)))
      throw NumericError("grad_check: non-finite perturbed loss");
    const double numeric = static_cast<double>(fp - fm) / (2.0 * step);
    const double a =
        analytic.at(name).vec()[static_cast<std::size_t>(coord)];
    const double err =
        std::abs(a - numeric) / (std::abs(a) + std::abs(numeric) + 1e-8);
    res.max_rel_err = std::max(res.max_rel_err, err);
    ++res.probes;
  }
  return res;
}

// Check every coordinate of every tensor.
template <class S, class Forward>
GradCheckResult<S> grad_check_all(Forward&& forward,
                                  std::map<std::string, Tensor<S>>& theta,
                                  S step) {
  std::vector<std::pair<std::string, long long>> coords;
  for (auto& [name, t] : theta)
    for (long long i = 0; i < t.size(); ++i) coords.emplace_back(name, i);
  return grad_check<S>(forward, theta, step, coords);
}

}  // namespace lrxf::ad
