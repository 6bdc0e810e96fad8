#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lrxf/data/corpus.hpp"
#include "lrxf/model/model.hpp"
#include "lrxf/optim.hpp"

namespace lrxf::train {

// Run configuration. Serializes as key=value lines with a version key;
// command-line flags override file values.
struct TrainConfig {
  int epochs = 30;
  int batch_size = 32;
  float lr = 3e-4f;
  float sigma = 0.05f;
  float lambda_flow = 1.0f;
  float lambda_prop = 1.0f;
  float w_center = 10.0f;
  model::Scheme train_scheme = model::Scheme::kHeun;
  int train_steps = 5;
  model::Scheme infer_scheme = model::Scheme::kRk4;
  int infer_steps = 20;
  std::uint64_t seed = 0;
  int threads = 1;
  int eval_topk = 5;
  int epoch_eval_limit = 200;  // validation records scored per epoch
  model::ModelConfig model;

  std::string to_text() const;
  static TrainConfig from_text(const std::string& text);
  static TrainConfig load(const std::string& path);
  void save(const std::string& path) const;
  // Apply one key=value override; unknown keys error.
  void set(const std::string& key, const std::string& value);
};

struct EpochReport {
  int epoch = 0;
  double flow_loss = 0.0;
  double struct_loss = 0.0;
  double top1 = 0.0;  // held-out
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochReport> epochs;
  long long skipped_batches = 0;

  void save_csv(const std::string& path) const;
};

// Losses for one record on a fresh tape, gradients accumulated into
// `grads` (keyed like the store). Returns {flow, struct}.
std::pair<double, double> record_losses(
    const model::Model& m, const chem::ReactionRecord& rec,
    const TrainConfig& cfg, rng::Stream noise,
    std::map<std::string, ad::Tensor<float>>* grads, float loss_scale);

// End-to-end optimization of struct + lambda_flow * flow with
// solver-in-the-loop decoding. Deterministic for a fixed seed and config
// regardless of thread count.
TrainReport train(model::Model& m, const data::Corpus& corpus,
                  const TrainConfig& cfg,
                  const std::function<void(const EpochReport&)>& on_epoch = {});

// Top-k accuracy for k = 1..k_max on one record set.
std::map<int, double> evaluate_topk(const model::Model& m,
                                    const std::vector<chem::ReactionRecord>&
                                        records,
                                    const model::SolverConfig& solver,
                                    int k_max, std::uint64_t seed);

// Adam state round-trip alongside the model directory.
void save_training_state(const model::Model& m, const ad::AdamState& st,
                         const std::string& dir);
bool load_training_state(model::Model& m, ad::AdamState& st,
                         const std::string& dir);

}  // namespace lrxf::train
