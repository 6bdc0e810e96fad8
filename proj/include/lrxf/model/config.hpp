#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "lrxf/chem/graph.hpp"

namespace lrxf::model {

struct EncoderConfig {
  int layers = 3;
  int dim = 64;
  int heads = 4;
  int max_atoms = 64;
  int ffn_mult = 4;
};

struct ConditionConfig {
  int table_k = 128;   // frequent-agent multi-hot width
  int fp_width = 512;  // fingerprint bits
  int fp_hidden = 128; // MLP over fingerprints
  int set_dim = 512;   // pooled embedding width
  int cond_dim() const { return table_k + set_dim; }
};

struct FlowConfig {
  int time_dim = 32;     // sinusoidal features, sin/cos pairs
  int hidden = 64;       // baseline field MLP width
  int depth = 1;         // hidden layers in the baseline field
  int film_hidden = 128; // conditioner MLP width
  float sigma = 0.05f;   // path noise, train and inference
};

// How the conditional agents reach the model.
enum class ConditionMode {
  kFilm,    // FiLM modulation of the vector field
  kConcat,  // agents appended to the reactant graph, no FiLM
  kNone     // agents ignored entirely
};

inline std::string to_string(ConditionMode m) {
  switch (m) {
    case ConditionMode::kFilm: return "film";
    case ConditionMode::kConcat: return "concat";
    case ConditionMode::kNone: return "none";
  }
  return "film";
}

inline ConditionMode condition_mode_from(const std::string& s) {
  if (s == "film") return ConditionMode::kFilm;
  if (s == "concat") return ConditionMode::kConcat;
  if (s == "none") return ConditionMode::kNone;
  throw chem::ChemError("unknown condition mode: " + s);
}

enum class Scheme { kEuler, kHeun, kRk4 };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::kEuler: return "euler";
    case Scheme::kHeun: return "heun";
    case Scheme::kRk4: return "rk4";
  }
  return "rk4";
}

inline Scheme scheme_from(const std::string& s) {
  if (s == "euler") return Scheme::kEuler;
  if (s == "heun") return Scheme::kHeun;
  if (s == "rk4") return Scheme::kRk4;
  throw chem::ChemError("unknown solver scheme: " + s);
}

struct SolverConfig {
  Scheme scheme = Scheme::kRk4;
  int steps = 20;
  // Sorted, inside [0,1], first 0 and last 1. Empty means record only the
  // endpoints. steps must be a multiple of point count minus one so the
  // grid is hit exactly.
  std::vector<double> record_points;

  static std::vector<double> uniform_grid(int points = 11) {
    std::vector<double> r;
    for (int i = 0; i < points; ++i)
      r.push_back(static_cast<double>(i) / (points - 1));
    return r;
  }
};

struct ModelConfig {
  EncoderConfig encoder;
  ConditionConfig condition;
  FlowConfig flow;
  ConditionMode condition_mode = ConditionMode::kFilm;
  bool disable_flow = false;  // decode straight from z_r (no latent flow)
  int charge_classes = 13;    // formal charge in [-6, +6]
};

// Fixed element vocabulary for atom embeddings; anything else shares the
// trailing bucket.
inline const std::vector<std::string>& element_vocab() {
  static const std::vector<std::string> v = {"C",  "N", "O", "S", "P", "B",
                                             "F",  "Cl", "Br", "I", "?"};
  return v;
}

inline int element_index(const std::string& symbol) {
  const auto& v = element_vocab();
  for (std::size_t i = 0; i + 1 < v.size(); ++i)
    if (v[i] == symbol) return static_cast<int>(i);
  return static_cast<int>(v.size()) - 1;
}

// Discrete bond-order classes used by edge-aware attention.
inline int bond_order_index(float order) {
  if (order == 0.0f) return 0;
  if (order == 1.0f) return 1;
  if (order == 1.5f) return 2;
  if (order == 2.0f) return 3;
  return 4;  // triple
}
inline constexpr int kBondOrderClasses = 5;

// Structural input-embedding buckets: node degree and twice the bond-order
// sum (half-integer aromatic orders land on integers), both clamped.
inline constexpr int kDegreeBuckets = 8;
inline constexpr int kValenceBuckets = 14;

inline int degree_bucket(int degree) {
  return std::min(degree, kDegreeBuckets - 1);
}
inline int valence_bucket(float valence_sum) {
  int v = static_cast<int>(valence_sum * 2.0f + 0.5f);
  return std::min(std::max(v, 0), kValenceBuckets - 1);
}

}  // namespace lrxf::model
