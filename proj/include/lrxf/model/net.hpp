#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lrxf/chem/fingerprint.hpp"
#include "lrxf/chem/graph.hpp"
#include "lrxf/chem/smiles.hpp"
#include "lrxf/model/config.hpp"
#include "lrxf/model/table.hpp"
#include "lrxf/optim.hpp"
#include "lrxf/tape.hpp"

namespace lrxf::model {

namespace detail {
inline ad::Tensor<float> uniform_init(std::vector<int> shape, int fan_in,
                                      rng::Stream& rs) {
  float bound = 1.0f / std::sqrt(static_cast<float>(fan_in));
  return ad::Tensor<float>::randu(std::move(shape), -bound, bound, rs);
}
}  // namespace detail

// Creates every model parameter. Final layers of the baseline field, the
// FiLM conditioner, the fuse MLP and all decoder output heads start at
// zero so the model begins as the identity map onto the reactant and the
// unconditional field; bilinear delta heads zero only the query side to
// keep gradients alive.
inline void init_params(ad::ParamStore& ps, const ModelConfig& cfg,
                        std::uint64_t seed) {
  rng::Stream rs = rng::Stream::root(seed).split("init");
  const int d = cfg.encoder.dim;
  const int ffn = d * cfg.encoder.ffn_mult;
  auto u = [&](const std::string& name, std::vector<int> shape, int fan_in) {
    ps.add(name, detail::uniform_init(std::move(shape), fan_in, rs));
  };
  auto zeros = [&](const std::string& name, std::vector<int> shape) {
    ps.add(name, ad::Tensor<float>(std::move(shape)));
  };
  auto ones = [&](const std::string& name, std::vector<int> shape) {
    ps.add(name, ad::Tensor<float>(std::move(shape), 1.0f));
  };

  const int vocab = static_cast<int>(element_vocab().size());
  u("enc/elem", {vocab, d}, d);
  u("enc/charge", {cfg.charge_classes, d}, d);
  u("enc/arom", {2, d}, d);
  u("enc/degree", {kDegreeBuckets, d}, d);
  u("enc/valsum", {kValenceBuckets, d}, d);
  for (int l = 0; l < cfg.encoder.layers; ++l) {
    const std::string base = "enc/l" + std::to_string(l) + "/";
    ones(base + "ln1g", {1, d});
    zeros(base + "ln1b", {1, d});
    u(base + "wq", {d, d}, d);
    u(base + "wk", {d, d}, d);
    u(base + "wv", {d, d}, d);
    u(base + "wo", {d, d}, d);
    u(base + "edge", {kBondOrderClasses, cfg.encoder.heads}, 1);
    ones(base + "ln2g", {1, d});
    zeros(base + "ln2b", {1, d});
    u(base + "ffw1", {d, ffn}, d);
    u(base + "ffb1", {1, ffn}, d);
    u(base + "ffw2", {ffn, d}, ffn);
    u(base + "ffb2", {1, d}, ffn);
  }
  ones("enc/lng", {1, d});
  zeros("enc/lnb", {1, d});

  const auto& cc = cfg.condition;
  u("cond/fpw1", {cc.fp_width, cc.fp_hidden}, cc.fp_width);
  u("cond/fpb1", {1, cc.fp_hidden}, cc.fp_width);
  u("cond/fpw2", {cc.fp_hidden, cc.set_dim}, cc.fp_hidden);
  u("cond/fpb2", {1, cc.set_dim}, cc.fp_hidden);
  u("cond/scorew", {cc.set_dim, 1}, cc.set_dim);
  u("cond/scoreb", {1, 1}, cc.set_dim);

  const auto& fc = cfg.flow;
  int in = d + fc.time_dim;
  for (int l = 0; l < fc.depth; ++l) {
    u("flow/bw" + std::to_string(l), {in, fc.hidden}, in);
    u("flow/bb" + std::to_string(l), {1, fc.hidden}, in);
    in = fc.hidden;
  }
  zeros("flow/bwo", {in, d});
  zeros("flow/bbo", {1, d});
  u("flow/cw1", {cc.cond_dim(), fc.film_hidden}, cc.cond_dim());
  u("flow/cb1", {1, fc.film_hidden}, cc.cond_dim());
  zeros("flow/cwo", {fc.film_hidden, 2 * d});
  zeros("flow/cbo", {1, 2 * d});

  u("dec/fw1", {2 * d, d}, 2 * d);
  u("dec/fb1", {1, d}, 2 * d);
  zeros("dec/fw2", {d, d});
  zeros("dec/fb2", {1, d});
  zeros("dec/incq", {d, d});
  u("dec/inck", {d, d}, d);
  zeros("dec/decq", {d, d});
  u("dec/deck", {d, d}, d);
  zeros("dec/chw", {d, cfg.charge_classes});
  zeros("dec/chb", {1, cfg.charge_classes});
  zeros("dec/arw", {d, 1});
  zeros("dec/arb", {1, 1});
}

// Parameters bound onto one tape. Float binds by reference into the store;
// other scalar types carry cast copies (used by gradient checking).
template <class S>
struct BoundParams {
  std::map<std::string, typename ad::Tape<S>::Id> ids;
  std::map<std::string, ad::Tensor<S>> storage;

  typename ad::Tape<S>::Id at(const std::string& name) const {
    auto it = ids.find(name);
    if (it == ids.end())
      throw ad::TapeError("unbound parameter: " + name);
    return it->second;
  }
};

template <class S>
BoundParams<S> bind_params(ad::Tape<S>& tape, const ad::ParamStore& ps,
                           bool trainable = true);

template <>
inline BoundParams<float> bind_params(ad::Tape<float>& tape,
                                      const ad::ParamStore& ps,
                                      bool trainable) {
  BoundParams<float> out;
  for (const auto& [name, e] : ps.items)
    out.ids[name] =
        trainable ? tape.leaf(&e.value) : tape.constant_ref(&e.value);
  return out;
}

template <class S>
BoundParams<S> bind_params(ad::Tape<S>& tape, const ad::ParamStore& ps,
                           bool trainable) {
  BoundParams<S> out;
  for (const auto& [name, e] : ps.items)
    out.storage.emplace(name, e.value.template cast<S>());
  for (auto& [name, t] : out.storage)
    out.ids[name] = trainable ? tape.leaf(&t) : tape.constant(t);
  return out;
}

// Sinusoidal features of t at geometrically spaced frequencies 2^k pi,
// sin/cos pairs, replicated over `rows`.
template <class S>
ad::Tensor<S> time_features(double t, int time_dim, int rows) {
  ad::Tensor<S> e({rows, time_dim});
  for (int k = 0; k < time_dim / 2; ++k) {
    double f = std::ldexp(3.14159265358979323846, k) * t;
    S sv = static_cast<S>(std::sin(f));
    S cv = static_cast<S>(std::cos(f));
    for (int r = 0; r < rows; ++r) {
      e.at(r, 2 * k) = sv;
      e.at(r, 2 * k + 1) = cv;
    }
  }
  return e;
}

// Forward graph builder over one tape. All methods append nodes; values
// are read back through the tape.
template <class S>
struct Net {
  using Id = typename ad::Tape<S>::Id;

  const ModelConfig& cfg;
  ad::Tape<S>& tape;
  const BoundParams<S>& p;

  Net(const ModelConfig& cfg, ad::Tape<S>& tape, const BoundParams<S>& bound)
      : cfg(cfg), tape(tape), p(bound) {}

  Id param(const std::string& name) const { return p.at(name); }

  // Graph encoder: edge-aware transformer over atom embeddings.
  Id encode_graph(const chem::MolGraph& g) const {
    const int n = g.atom_count();
    if (n > cfg.encoder.max_atoms)
      throw chem::ChemError("graph exceeds max_atoms: " + std::to_string(n));
    const int d = cfg.encoder.dim;
    const int heads = cfg.encoder.heads;
    const int dh = d / heads;

    std::vector<int> elem_idx(static_cast<std::size_t>(n));
    std::vector<int> charge_idx(static_cast<std::size_t>(n));
    std::vector<int> arom_idx(static_cast<std::size_t>(n));
    std::vector<int> deg_idx(static_cast<std::size_t>(n));
    std::vector<int> val_idx(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      elem_idx[static_cast<std::size_t>(i)] = element_index(g.atom(i).element);
      charge_idx[static_cast<std::size_t>(i)] = g.atom(i).charge + 6;
      arom_idx[static_cast<std::size_t>(i)] = g.atom(i).aromatic ? 1 : 0;
      deg_idx[static_cast<std::size_t>(i)] = degree_bucket(g.degree(i));
      val_idx[static_cast<std::size_t>(i)] = valence_bucket(g.valence_sum(i));
    }
    Id x = tape.add(tape.gather_rows(param("enc/elem"), elem_idx),
                    tape.gather_rows(param("enc/charge"), charge_idx));
    x = tape.add(x, tape.gather_rows(param("enc/arom"), arom_idx));
    x = tape.add(x, tape.gather_rows(param("enc/degree"), deg_idx));
    x = tape.add(x, tape.gather_rows(param("enc/valsum"), val_idx));

    std::vector<int> bond_idx(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        bond_idx[static_cast<std::size_t>(i) * n + j] =
            bond_order_index(g.order(i, j));

    for (int l = 0; l < cfg.encoder.layers; ++l) {
      const std::string base = "enc/l" + std::to_string(l) + "/";
      Id xn = tape.layer_norm(x, param(base + "ln1g"), param(base + "ln1b"));
      Id q = tape.matmul(xn, param(base + "wq"));
      Id k = tape.matmul(xn, param(base + "wk"));
      Id v = tape.matmul(xn, param(base + "wv"));
      Id bias_all = tape.gather_rows(param(base + "edge"), bond_idx);
      Id mixed = tape.multihead_attention(q, k, v, bias_all, heads);
      x = tape.add(x, tape.matmul(mixed, param(base + "wo")));
      Id xn2 = tape.layer_norm(x, param(base + "ln2g"), param(base + "ln2b"));
      Id hdn = tape.gelu(
          tape.affine(xn2, param(base + "ffw1"), param(base + "ffb1")));
      x = tape.add(x,
                   tape.affine(hdn, param(base + "ffw2"), param(base + "ffb2")));
    }
    return tape.layer_norm(x, param("enc/lng"), param("enc/lnb"));
  }

  // Frequent-agent multi-hot (constant: no parameters touch it).
  ad::Tensor<S> freq_multihot(const std::vector<chem::MolGraph>& agents,
                              const FrequencyTable& table) const {
    ad::Tensor<S> h({1, cfg.condition.table_k});
    for (const auto& a : agents) {
      int r = table.rank_of(chem::canonical_smiles(a));
      if (r >= 0 && r < cfg.condition.table_k) h.at(0, r) = S(1);
    }
    return h;
  }

  // Condition vector h_c = [h_freq, h_set]; the set embedding pools
  // fingerprint MLP outputs with learned softmax scores. An empty agent
  // set pools to the zero vector.
  Id encode_conditions(const std::vector<chem::MolGraph>& agents,
                       const FrequencyTable& table) const {
    Id hf = tape.constant(freq_multihot(agents, table));
    Id hs;
    if (agents.empty()) {
      hs = tape.constant(ad::Tensor<S>({1, cfg.condition.set_dim}));
    } else {
      const int na = static_cast<int>(agents.size());
      ad::Tensor<S> fps({na, cfg.condition.fp_width});
      for (int i = 0; i < na; ++i) {
        chem::Fingerprint fp =
            chem::fingerprint(agents[static_cast<std::size_t>(i)], 2,
                              cfg.condition.fp_width);
        for (int b = 0; b < fp.width(); ++b)
          if (fp.test(b)) fps.at(i, b) = S(1);
      }
      Id u = tape.affine(
          tape.gelu(tape.affine(tape.constant(std::move(fps)),
                                param("cond/fpw1"), param("cond/fpb1"))),
          param("cond/fpw2"), param("cond/fpb2"));
      Id scores =
          tape.affine(u, param("cond/scorew"), param("cond/scoreb"));
      Id weights = tape.softmax(tape.reshape(scores, {1, na}));
      hs = tape.matmul(weights, u);
    }
    return tape.concat_cols(hf, hs);
  }

  // FiLM scale and shift from the condition vector.
  std::pair<Id, Id> film_params(Id h_c) const {
    Id hidden = tape.gelu(
        tape.affine(h_c, param("flow/cw1"), param("flow/cb1")));
    Id gb = tape.affine(hidden, param("flow/cwo"), param("flow/cbo"));
    const int d = cfg.encoder.dim;
    return {tape.slice_cols(gb, 0, d), tape.slice_cols(gb, d, d)};
  }

  // Baseline field: per-atom MLP over [z_t, e_t].
  Id base_field(Id z, double t) const {
    if (t < 0.0 || t > 1.0)
      throw ad::NumericError("field time out of [0,1]: " + std::to_string(t));
    const int rows = tape.val(z).rows();
    Id h = tape.concat_cols(
        z, tape.constant(time_features<S>(t, cfg.flow.time_dim, rows)));
    for (int l = 0; l < cfg.flow.depth; ++l) {
      h = tape.gelu(tape.affine(h, param("flow/bw" + std::to_string(l)),
                                param("flow/bb" + std::to_string(l))));
    }
    return tape.affine(h, param("flow/bwo"), param("flow/bbo"));
  }

  // v = v_base * (1 + gamma) + beta, rowwise.
  Id apply_film(Id v_base, std::pair<Id, Id> film) const {
    if (tape.val(film.first).cols() != tape.val(v_base).cols())
      throw ad::ShapeError("film width mismatch");
    return tape.add(tape.mul(v_base, tape.add_const(film.first, S(1))),
                    film.second);
  }

  // Conditional field; film is absent under kConcat / kNone.
  Id field(Id z, double t,
           const std::optional<std::pair<Id, Id>>& film) const {
    Id v = base_field(z, t);
    return film ? apply_film(v, *film) : v;
  }

  // Scaffold-anchored residual fusion, identity at zero-initialized output.
  Id fuse(Id z_r, Id z_hat) const {
    Id delta = tape.sub(z_hat, z_r);
    Id h = tape.gelu(tape.affine(tape.concat_cols(z_r, delta),
                                 param("dec/fw1"), param("dec/fb1")));
    return tape.add(z_r,
                    tape.affine(h, param("dec/fw2"), param("dec/fb2")));
  }

  // Dual bilinear heads; each is softplus of a scaled bilinear score,
  // mirrored from the upper triangle with a zero diagonal.
  std::pair<Id, Id> delta_heads(Id z_in) const {
    const int d = cfg.encoder.dim;
    auto head = [&](const std::string& q, const std::string& k) {
      Id scores = tape.scale(
          tape.matmul_nt(tape.matmul(z_in, param(q)),
                         tape.matmul(z_in, param(k))),
          S(1) / std::sqrt(static_cast<S>(d)));
      return tape.sym_upper(tape.softplus(scores));
    };
    return {head("dec/incq", "dec/inck"), head("dec/decq", "dec/deck")};
  }

  // Charge logits (|V| x 13) and aromaticity logits (|V| x 1).
  std::pair<Id, Id> property_heads(Id z_in) const {
    return {tape.affine(z_in, param("dec/chw"), param("dec/chb")),
            tape.affine(z_in, param("dec/arw"), param("dec/arb"))};
  }
};

}  // namespace lrxf::model
