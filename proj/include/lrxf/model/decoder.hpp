#pragma once

#include <cmath>
#include <vector>

#include "lrxf/chem/graph.hpp"
#include "lrxf/chem/reaction.hpp"
#include "lrxf/tape.hpp"

namespace lrxf::model {

// Bond orders a decoded entry may take; rounding is nearest-value with
// ties toward the smaller order, which also clamps into [0, 3].
inline float round_bond_order(float x) {
  static const float kOrders[] = {0.0f, 1.0f, 1.5f, 2.0f, 3.0f};
  float best = kOrders[0];
  float best_d = std::abs(x - kOrders[0]);
  for (float c : kOrders) {
    float d = std::abs(x - c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

// Charge argmax with ties resolved toward neutral (0, -1, +1, -2, ...), so
// all-zero logits decode to formal charge 0.
inline int charge_from_logits(const float* logits, int classes) {
  int best_class = classes / 2;  // charge 0
  float best = logits[best_class];
  for (int k = 1; k <= classes / 2; ++k) {
    for (int cls : {classes / 2 - k, classes / 2 + k}) {
      if (logits[cls] > best) {
        best = logits[cls];
        best_class = cls;
      }
    }
  }
  return best_class - classes / 2;
}

// Residual bond decoding: adjacency A_r + (M_inc - M_dec) discretized onto
// the bond-order set; charges and aromaticity replaced from the property
// logits. The result keeps the reactant indexing and may be
// valence-invalid; validity is the caller's check, never a silent repair.
inline chem::MolGraph decode_product(const chem::MolGraph& reactant,
                                     const ad::Tensor<float>& m_inc,
                                     const ad::Tensor<float>& m_dec,
                                     const ad::Tensor<float>& charge_logits,
                                     const ad::Tensor<float>& arom_logits) {
  const int n = reactant.atom_count();
  if (m_inc.rows() != n || m_inc.cols() != n || !m_inc.same_shape(m_dec))
    throw ad::ShapeError("decode_product delta shape mismatch");
  if (charge_logits.rows() != n || arom_logits.rows() != n)
    throw ad::ShapeError("decode_product property shape mismatch");
  std::vector<chem::AtomRecord> atoms;
  atoms.reserve(static_cast<std::size_t>(n));
  const int classes = charge_logits.cols();
  for (int i = 0; i < n; ++i) {
    chem::AtomRecord a = reactant.atom(i);
    a.charge = charge_from_logits(
        charge_logits.data() + static_cast<std::size_t>(i) * classes,
        classes);
    a.aromatic = arom_logits.at(i, 0) > 0.0f;  // sigmoid(x) > 0.5
    atoms.push_back(std::move(a));
  }
  chem::MolGraph out(std::move(atoms));
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      float cont = reactant.order(i, j) + m_inc.at(i, j) - m_dec.at(i, j);
      float rounded = round_bond_order(cont);
      if (rounded != 0.0f) out.set_order(i, j, rounded);
    }
  return out;
}

// Ground-truth bond delta A_p - A_r.
inline ad::Tensor<float> bond_delta_target(const chem::ReactionRecord& r) {
  const int n = r.reactant.atom_count();
  ad::Tensor<float> d({n, n});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      d.at(i, j) = r.product.order(i, j) - r.reactant.order(i, j);
  return d;
}

// Structural reconstruction loss on the tape: center-upweighted MSE on the
// signed delta matrix plus property cross entropies.
template <class S>
typename ad::Tape<S>::Id struct_loss(
    ad::Tape<S>& tape, typename ad::Tape<S>::Id m_inc,
    typename ad::Tape<S>::Id m_dec, typename ad::Tape<S>::Id charge_logits,
    typename ad::Tape<S>::Id arom_logits, const chem::ReactionRecord& truth,
    float lambda_prop, float w_center) {
  using Id = typename ad::Tape<S>::Id;
  const int n = truth.reactant.atom_count();
  if (truth.product.atom_count() != n)
    throw chem::ChemError("struct_loss: side atom counts differ");
  ad::Tensor<float> target_f = bond_delta_target(truth);
  ad::Tensor<S> target({n, n});
  ad::Tensor<S> weights({n, n});
  for (long long i = 0; i < target.size(); ++i) {
    target.data()[i] = static_cast<S>(target_f.data()[i]);
    weights.data()[i] =
        target_f.data()[i] != 0.0f ? static_cast<S>(w_center) : S(1);
  }
  Id delta = tape.sub(m_inc, m_dec);
  Id err = tape.sub(delta, tape.constant(std::move(target)));
  Id sq = tape.mul(err, err);
  Id weighted = tape.mul(sq, tape.constant(std::move(weights)));
  Id l_bond = tape.scale(tape.sum_all(weighted),
                         S(1) / static_cast<S>(static_cast<double>(n) * n));

  std::vector<int> charge_labels;
  ad::Tensor<S> arom_targets({n, 1});
  for (int i = 0; i < n; ++i) {
    charge_labels.push_back(truth.product.atom(i).charge + 6);
    arom_targets.at(i, 0) = truth.product.atom(i).aromatic ? S(1) : S(0);
  }
  Id l_charge = tape.cross_entropy(charge_logits, charge_labels);
  Id l_arom = tape.bce_logits(arom_logits, arom_targets);
  return tape.add(l_bond, tape.scale(tape.add(l_charge, l_arom),
                                     static_cast<S>(lambda_prop)));
}

}  // namespace lrxf::model
