#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lrxf/chem/graph.hpp"
#include "lrxf/chem/reaction.hpp"
#include "lrxf/model/config.hpp"
#include "lrxf/model/net.hpp"
#include "lrxf/model/solver.hpp"
#include "lrxf/model/table.hpp"
#include "lrxf/optim.hpp"

namespace lrxf::model {

// Trained artifact: configuration, parameters, frequency table.
struct Model {
  ModelConfig cfg;
  ad::ParamStore params;
  FrequencyTable table;

  void init(std::uint64_t seed) { init_params(params, cfg, seed); }
};

// Reactant (plus appended agents under input-concatenation conditioning).
chem::MolGraph encoder_input(const Model& m, const chem::MolGraph& reactant,
                             const std::vector<chem::MolGraph>& agents);

// One integrated and decoded trajectory on the reactant indexing.
struct Prediction {
  chem::MolGraph product;                  // decoded at t = 1
  std::vector<double> times;               // record grid
  std::vector<chem::MolGraph> decoded;     // decoded graph per record point
  std::vector<ad::Tensor<float>> states;   // raw reactant-row latents
  std::vector<ad::Tensor<float>> pooled;   // 1 x d mean-pooled latents
};

// Integrate from z_r (optionally sigma-perturbed via `noise`) and decode.
// With record points in `solver`, intermediate states are decoded too.
Prediction predict_one(const Model& m, const chem::MolGraph& reactant,
                       const std::vector<chem::MolGraph>& agents,
                       const SolverConfig& solver,
                       rng::Stream* noise = nullptr);

// Ranked stochastic candidates: k independent sigma-perturbations of z_r,
// integrated and decoded, deduplicated by graphs_equal, ordered by rising
// terminal speed then falling terminal dwell time.
struct Candidate {
  chem::MolGraph product;
  double terminal_speed = 0.0;
  int dwell = 0;  // trailing record points decoding to the same graph
};

std::vector<Candidate> predict_topk(const Model& m,
                                    const chem::MolGraph& reactant,
                                    const std::vector<chem::MolGraph>& agents,
                                    const SolverConfig& solver, int k,
                                    rng::Stream candidates_stream);

// Model directory layout: weights.lrxf + table.tsv + model.json.
void save_model(const Model& m, const std::string& dir);
Model load_model(const std::string& dir);

std::string model_config_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& json);

}  // namespace lrxf::model
