#include "lrxf/model/model.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "lrxf/checkpoint.hpp"
#include "lrxf/model/decoder.hpp"

namespace lrxf::model {

chem::MolGraph encoder_input(const Model& m, const chem::MolGraph& reactant,
                             const std::vector<chem::MolGraph>& agents) {
  if (m.cfg.condition_mode != ConditionMode::kConcat || agents.empty())
    return reactant;
  std::vector<chem::AtomRecord> atoms = reactant.atoms();
  for (const auto& a : agents)
    for (int i = 0; i < a.atom_count(); ++i) atoms.push_back(a.atom(i));
  chem::MolGraph g(std::move(atoms));
  for (int i = 0; i < reactant.atom_count(); ++i)
    for (int j = i + 1; j < reactant.atom_count(); ++j)
      if (reactant.order(i, j) != 0.0f)
        g.set_order(i, j, reactant.order(i, j));
  int base = reactant.atom_count();
  for (const auto& a : agents) {
    for (int i = 0; i < a.atom_count(); ++i)
      for (int j = i + 1; j < a.atom_count(); ++j)
        if (a.order(i, j) != 0.0f)
          g.set_order(base + i, base + j, a.order(i, j));
    base += a.atom_count();
  }
  return g;
}

namespace {

ad::Tensor<float> mean_pool_rows(const ad::Tensor<float>& t, int rows) {
  ad::Tensor<float> out({1, t.cols()});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < t.cols(); ++c) out.at(0, c) += t.at(r, c) / rows;
  return out;
}

}  // namespace

Prediction predict_one(const Model& m, const chem::MolGraph& reactant,
                       const std::vector<chem::MolGraph>& agents,
                       const SolverConfig& solver, rng::Stream* noise) {
  using Tape = ad::Tape<float>;
  using Id = Tape::Id;
  Tape tape;
  BoundParams<float> bound =
      bind_params<float>(tape, m.params, /*trainable=*/false);
  Net<float> net(m.cfg, tape, bound);

  const chem::MolGraph input = encoder_input(m, reactant, agents);
  const int n_r = reactant.atom_count();
  Id z_r = net.encode_graph(input);

  std::optional<std::pair<Id, Id>> film;
  if (m.cfg.condition_mode == ConditionMode::kFilm)
    film = net.film_params(net.encode_conditions(agents, m.table));

  Id z0 = z_r;
  if (noise != nullptr && m.cfg.flow.sigma > 0.0f) {
    ad::Tensor<float> eps(tape.val(z_r).shape());
    for (auto& v : eps.vec())
      v = m.cfg.flow.sigma * static_cast<float>(noise->next_normal());
    z0 = tape.add(z_r, tape.constant(std::move(eps)));
  }

  Prediction out;
  std::vector<Id> rec_states;
  Id z_hat;
  if (m.cfg.disable_flow) {
    z_hat = z0;
    out.times = solver.record_points.empty()
                    ? std::vector<double>{0.0, 1.0}
                    : solver.record_points;
    rec_states.assign(out.times.size(), z0);
  } else {
    auto res = integrate<float>(
        tape, z0,
        [&](Id z, double t) { return net.field(z, t, film); }, solver);
    z_hat = res.final_state;
    out.times = res.trajectory.times;
    rec_states = res.trajectory.states;
    if (rec_states.empty()) {
      out.times = {1.0};
      rec_states = {z_hat};
    }
  }

  for (std::size_t k = 0; k < rec_states.size(); ++k) {
    Id z_in = net.fuse(z_r, rec_states[k]);
    if (input.atom_count() != n_r) z_in = tape.slice_rows(z_in, 0, n_r);
    auto [m_inc, m_dec] = net.delta_heads(z_in);
    auto [charge, arom] = net.property_heads(z_in);
    chem::MolGraph g =
        decode_product(reactant, tape.val(m_inc), tape.val(m_dec),
                       tape.val(charge), tape.val(arom));
    ad::Tensor<float> state = tape.val(rec_states[k]);
    if (state.rows() != n_r) {
      ad::Tensor<float> cut({n_r, state.cols()});
      for (int r = 0; r < n_r; ++r)
        for (int c = 0; c < state.cols(); ++c) cut.at(r, c) = state.at(r, c);
      state = std::move(cut);
    }
    out.pooled.push_back(mean_pool_rows(state, n_r));
    out.states.push_back(std::move(state));
    out.decoded.push_back(std::move(g));
  }
  out.product = out.decoded.back();
  return out;
}

std::vector<Candidate> predict_topk(const Model& m,
                                    const chem::MolGraph& reactant,
                                    const std::vector<chem::MolGraph>& agents,
                                    const SolverConfig& solver, int k,
                                    rng::Stream candidates_stream) {
  SolverConfig cfg = solver;
  if (cfg.record_points.empty())
    cfg.record_points = SolverConfig::uniform_grid();
  std::vector<Candidate> ranked;
  for (int c = 0; c < k; ++c) {
    rng::Stream noise = candidates_stream.split(static_cast<std::uint64_t>(c));
    Prediction pred = predict_one(m, reactant, agents, cfg, &noise);
    Candidate cand;
    cand.product = pred.product;
    const std::size_t last = pred.pooled.size() - 1;
    if (pred.pooled.size() >= 2) {
      double s = 0.0;
      for (int col = 0; col < pred.pooled[last].cols(); ++col) {
        double d = pred.pooled[last].at(0, col) -
                   pred.pooled[last - 1].at(0, col);
        s += d * d;
      }
      cand.terminal_speed = std::sqrt(s);
    }
    cand.dwell = 1;
    for (std::size_t i = pred.decoded.size() - 1; i-- > 0;) {
      if (chem::graphs_equal(pred.decoded[i], pred.product))
        ++cand.dwell;
      else
        break;
    }
    bool dup = false;
    for (auto& existing : ranked)
      if (chem::graphs_equal(existing.product, cand.product)) {
        dup = true;
        // keep the more confident trajectory for the shared product
        if (cand.terminal_speed < existing.terminal_speed ||
            (cand.terminal_speed == existing.terminal_speed &&
             cand.dwell > existing.dwell))
          existing = cand;
        break;
      }
    if (!dup) ranked.push_back(std::move(cand));
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Candidate& a, const Candidate& b) {
                     if (a.terminal_speed != b.terminal_speed)
                       return a.terminal_speed < b.terminal_speed;
                     return a.dwell > b.dwell;
                   });
  return ranked;
}

std::string model_config_json(const ModelConfig& cfg) {
  nlohmann::json j;
  j["encoder"] = {{"layers", cfg.encoder.layers},
                  {"dim", cfg.encoder.dim},
                  {"heads", cfg.encoder.heads},
                  {"max_atoms", cfg.encoder.max_atoms},
                  {"ffn_mult", cfg.encoder.ffn_mult}};
  j["condition"] = {{"table_k", cfg.condition.table_k},
                    {"fp_width", cfg.condition.fp_width},
                    {"fp_hidden", cfg.condition.fp_hidden},
                    {"set_dim", cfg.condition.set_dim}};
  j["flow"] = {{"time_dim", cfg.flow.time_dim},
               {"hidden", cfg.flow.hidden},
               {"depth", cfg.flow.depth},
               {"film_hidden", cfg.flow.film_hidden},
               {"sigma", cfg.flow.sigma}};
  j["condition_mode"] = to_string(cfg.condition_mode);
  j["disable_flow"] = cfg.disable_flow;
  return j.dump(2);
}

ModelConfig model_config_from_json(const std::string& json) {
  nlohmann::json j = nlohmann::json::parse(json);
  ModelConfig cfg;
  cfg.encoder.layers = j["encoder"]["layers"];
  cfg.encoder.dim = j["encoder"]["dim"];
  cfg.encoder.heads = j["encoder"]["heads"];
  cfg.encoder.max_atoms = j["encoder"]["max_atoms"];
  cfg.encoder.ffn_mult = j["encoder"]["ffn_mult"];
  cfg.condition.table_k = j["condition"]["table_k"];
  cfg.condition.fp_width = j["condition"]["fp_width"];
  cfg.condition.fp_hidden = j["condition"]["fp_hidden"];
  cfg.condition.set_dim = j["condition"]["set_dim"];
  cfg.flow.time_dim = j["flow"]["time_dim"];
  cfg.flow.hidden = j["flow"]["hidden"];
  cfg.flow.depth = j["flow"]["depth"];
  cfg.flow.film_hidden = j["flow"]["film_hidden"];
  cfg.flow.sigma = j["flow"]["sigma"];
  cfg.condition_mode = condition_mode_from(j["condition_mode"]);
  cfg.disable_flow = j["disable_flow"];
  return cfg;
}

void save_model(const Model& m, const std::string& dir) {
  std::filesystem::create_directories(dir);
  std::map<std::string, ad::Tensor<float>> arrays;
  for (const auto& [name, e] : m.params.items) arrays[name] = e.value;
  ad::save_arrays(dir + "/weights.lrxf", arrays);
  m.table.save(dir + "/table.tsv");
  std::ofstream os(dir + "/model.json");
  os << model_config_json(m.cfg) << "\n";
}

Model load_model(const std::string& dir) {
  Model m;
  std::ifstream is(dir + "/model.json");
  if (!is) throw chem::ChemError("missing model.json in " + dir);
  std::string json((std::istreambuf_iterator<char>(is)),
                   std::istreambuf_iterator<char>());
  m.cfg = model_config_from_json(json);
  m.init(0);
  auto arrays = ad::load_arrays(dir + "/weights.lrxf");
  for (auto& [name, e] : m.params.items) {
    auto it = arrays.find(name);
    if (it == arrays.end())
      throw ad::CheckpointError("checkpoint missing parameter " + name);
    if (it->second.shape() != e.value.shape())
      throw ad::CheckpointError("checkpoint shape mismatch for " + name);
    e.value = it->second;
  }
  m.table = FrequencyTable::load(dir + "/table.tsv");
  return m;
}

}  // namespace lrxf::model
