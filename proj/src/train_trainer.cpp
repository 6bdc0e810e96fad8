#include "lrxf/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "lrxf/checkpoint.hpp"
#include "lrxf/model/decoder.hpp"
#include "lrxf/model/flow.hpp"
#include "lrxf/model/net.hpp"
#include "lrxf/model/solver.hpp"

namespace lrxf::train {

namespace {
constexpr int kConfigVersion = 1;
constexpr int kShards = 8;  // fixed so results do not depend on threads
}  // namespace

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "version=" << kConfigVersion << "\n";
  os << "epochs=" << epochs << "\n";
  os << "batch_size=" << batch_size << "\n";
  os << "lr=" << lr << "\n";
  os << "sigma=" << sigma << "\n";
  os << "lambda_flow=" << lambda_flow << "\n";
  os << "lambda_prop=" << lambda_prop << "\n";
  os << "w_center=" << w_center << "\n";
  os << "train_solver=" << model::to_string(train_scheme) << "\n";
  os << "train_steps=" << train_steps << "\n";
  os << "infer_solver=" << model::to_string(infer_scheme) << "\n";
  os << "infer_steps=" << infer_steps << "\n";
  os << "seed=" << seed << "\n";
  os << "threads=" << threads << "\n";
  os << "eval_topk=" << eval_topk << "\n";
  os << "epoch_eval_limit=" << epoch_eval_limit << "\n";
  os << "enc_layers=" << model.encoder.layers << "\n";
  os << "enc_dim=" << model.encoder.dim << "\n";
  os << "enc_heads=" << model.encoder.heads << "\n";
  os << "max_atoms=" << model.encoder.max_atoms << "\n";
  os << "table_k=" << model.condition.table_k << "\n";
  os << "flow_hidden=" << model.flow.hidden << "\n";
  os << "flow_depth=" << model.flow.depth << "\n";
  os << "film_hidden=" << model.flow.film_hidden << "\n";
  os << "condition_mode=" << model::to_string(model.condition_mode) << "\n";
  os << "disable_flow=" << (model.disable_flow ? 1 : 0) << "\n";
  return os.str();
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  auto as_int = [&] { return std::stoi(value); };
  auto as_float = [&] { return std::stof(value); };
  if (key == "version") {
    if (std::stoi(value) != kConfigVersion)
      throw chem::ChemError("config version mismatch: file has " + value);
  } else if (key == "epochs") epochs = as_int();
  else if (key == "batch_size") batch_size = as_int();
  else if (key == "lr") lr = as_float();
  else if (key == "sigma") { sigma = as_float(); model.flow.sigma = sigma; }
  else if (key == "lambda_flow") lambda_flow = as_float();
  else if (key == "lambda_prop") lambda_prop = as_float();
  else if (key == "w_center") w_center = as_float();
  else if (key == "train_solver") train_scheme = model::scheme_from(value);
  else if (key == "train_steps") train_steps = as_int();
  else if (key == "infer_solver") infer_scheme = model::scheme_from(value);
  else if (key == "infer_steps") infer_steps = as_int();
  else if (key == "seed") seed = std::stoull(value);
  else if (key == "threads") threads = as_int();
  else if (key == "eval_topk") eval_topk = as_int();
  else if (key == "epoch_eval_limit") epoch_eval_limit = as_int();
  else if (key == "enc_layers") model.encoder.layers = as_int();
  else if (key == "enc_dim") model.encoder.dim = as_int();
  else if (key == "enc_heads") model.encoder.heads = as_int();
  else if (key == "max_atoms") model.encoder.max_atoms = as_int();
  else if (key == "table_k") model.condition.table_k = as_int();
  else if (key == "flow_hidden") model.flow.hidden = as_int();
  else if (key == "flow_depth") model.flow.depth = as_int();
  else if (key == "film_hidden") model.flow.film_hidden = as_int();
  else if (key == "condition_mode")
    model.condition_mode = model::condition_mode_from(value);
  else if (key == "disable_flow") model.disable_flow = as_int() != 0;
  else throw chem::ChemError("unknown config key: " + key);
}

TrainConfig TrainConfig::from_text(const std::string& text) {
  TrainConfig cfg;
  std::istringstream is(text);
  std::string line;
  bool saw_version = false;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw chem::ChemError("malformed config line: " + line);
    std::string key = line.substr(0, eq);
    if (key == "version") saw_version = true;
    cfg.set(key, line.substr(eq + 1));
  }
  if (!saw_version)
    throw chem::ChemError("config is missing the version key");
  cfg.model.flow.sigma = cfg.sigma;
  return cfg;
}

TrainConfig TrainConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw chem::ChemError("cannot read config: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return from_text(ss.str());
}

void TrainConfig::save(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw chem::ChemError("cannot write config: " + path);
  os << to_text();
}

void TrainReport::save_csv(const std::string& path) const {
  std::ofstream os(path);
  if (!os) throw chem::ChemError("cannot write report: " + path);
  os << "epoch,flow_loss,struct_loss,top1,seconds\n";
  for (const auto& e : epochs)
    os << e.epoch << ',' << e.flow_loss << ',' << e.struct_loss << ','
       << e.top1 << ',' << e.seconds << '\n';
}

std::pair<double, double> record_losses(
    const model::Model& m, const chem::ReactionRecord& rec,
    const TrainConfig& cfg, rng::Stream noise,
    std::map<std::string, ad::Tensor<float>>* grads, float loss_scale) {
  using Tape = ad::Tape<float>;
  using Id = Tape::Id;
  Tape tape;
  model::BoundParams<float> bound =
      model::bind_params<float>(tape, m.params, grads != nullptr);
  model::Net<float> net(m.cfg, tape, bound);

  const chem::MolGraph enc_in =
      model::encoder_input(m, rec.reactant, rec.agents);
  Id z_r = net.encode_graph(enc_in);

  std::optional<std::pair<Id, Id>> film;
  if (m.cfg.condition_mode == model::ConditionMode::kFilm)
    film = net.film_params(net.encode_conditions(rec.agents, m.table));
  auto field = [&](Id z, double t) { return net.field(z, t, film); };

  Id l_flow = -1;
  Id z_hat;
  if (m.cfg.disable_flow) {
    z_hat = z_r;
  } else {
    // product runs through the same encoder; under concat conditioning the
    // agent rows ride along on both sides
    const chem::MolGraph enc_p =
        model::encoder_input(m, rec.product, rec.agents);
    Id z_p = net.encode_graph(enc_p);
    auto sample =
        model::sample_path<float>(tape, z_r, z_p, cfg.sigma, noise);
    l_flow = model::flow_loss_term<float>(tape, sample, field);

    model::SolverConfig sc;
    sc.scheme = cfg.train_scheme;
    sc.steps = cfg.train_steps;
    z_hat = model::integrate<float>(tape, z_r, field, sc).final_state;
  }

  Id z_in = net.fuse(z_r, z_hat);
  const int n_r = rec.reactant.atom_count();
  if (tape.val(z_in).rows() != n_r) z_in = tape.slice_rows(z_in, 0, n_r);
  auto [m_inc, m_dec] = net.delta_heads(z_in);
  auto [charge, arom] = net.property_heads(z_in);
  Id l_struct = model::struct_loss<float>(tape, m_inc, m_dec, charge, arom,
                                          rec, cfg.lambda_prop, cfg.w_center);

  Id total = l_struct;
  if (l_flow >= 0)
    total = tape.add(l_struct, tape.scale(l_flow, cfg.lambda_flow));
  double flow_v = l_flow >= 0 ? tape.val(l_flow).item() : 0.0;
  double struct_v = tape.val(l_struct).item();

  if (grads != nullptr) {
    tape.backward(tape.scale(total, loss_scale));
    for (auto& [name, g] : *grads) {
      ad::Tensor<float> dg = tape.grad(bound.at(name));
      for (long long i = 0; i < g.size(); ++i) g.data()[i] += dg.data()[i];
    }
  }
  return {flow_v, struct_v};
}

namespace {

std::map<std::string, ad::Tensor<float>> zero_like(
    const ad::ParamStore& ps) {
  std::map<std::string, ad::Tensor<float>> out;
  for (const auto& [name, e] : ps.items)
    out.emplace(name, ad::Tensor<float>(e.value.shape()));
  return out;
}

// Seeded shuffle, then a stable sort into atom-count buckets, then a
// shuffle of whole batches: batches stay size-homogeneous while the visit
// order over sizes is random. Deterministic in (seed, epoch).
std::vector<int> epoch_order(const std::vector<chem::ReactionRecord>& recs,
                             std::uint64_t seed, int epoch, int batch_size) {
  std::vector<int> idx(recs.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  rng::Stream rs = rng::Stream::root(seed).split("shuffle").split(
      static_cast<std::uint64_t>(epoch));
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rs.next_below(i)]);
  std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
    return recs[static_cast<std::size_t>(a)].reactant.atom_count() <
           recs[static_cast<std::size_t>(b)].reactant.atom_count();
  });
  const std::size_t bs = static_cast<std::size_t>(batch_size);
  const std::size_t nbatches = (idx.size() + bs - 1) / bs;
  std::vector<std::size_t> border(nbatches);
  for (std::size_t b = 0; b < nbatches; ++b) border[b] = b;
  for (std::size_t i = border.size(); i > 1; --i)
    std::swap(border[i - 1], border[rs.next_below(i)]);
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t b : border)
    for (std::size_t k = b * bs; k < std::min(idx.size(), (b + 1) * bs); ++k)
      out.push_back(idx[k]);
  return out;
}

}  // namespace

TrainReport train(model::Model& m, const data::Corpus& corpus,
                  const TrainConfig& cfg,
                  const std::function<void(const EpochReport&)>& on_epoch) {
  if (corpus.train.empty()) throw chem::ChemError("empty training split");
  TrainReport report;
  ad::AdamState adam_state;
  ad::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;

  model::SolverConfig eval_solver;
  eval_solver.scheme = cfg.infer_scheme;
  eval_solver.steps = cfg.infer_steps;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto t0 = std::chrono::steady_clock::now();
    std::vector<int> order =
        epoch_order(corpus.train, cfg.seed, epoch, cfg.batch_size);
    double flow_sum = 0.0, struct_sum = 0.0;
    long long seen = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const int bsz = static_cast<int>(end - start);
      const float scale = 1.0f / static_cast<float>(bsz);

      // fixed shard partition; grads merge in shard order so results do
      // not depend on the worker count
      std::vector<std::map<std::string, ad::Tensor<float>>> shard_grads(
          kShards);
      std::vector<std::pair<double, double>> shard_losses(kShards,
                                                          {0.0, 0.0});
      std::vector<std::string> shard_errors(kShards);
      auto run_shard = [&](int s) {
        try {
          auto grads = zero_like(m.params);
          double fl = 0.0, st = 0.0;
          for (std::size_t k = start + static_cast<std::size_t>(s); k < end;
               k += kShards) {
            const auto& rec =
                corpus.train[static_cast<std::size_t>(order[k])];
            rng::Stream noise = rng::Stream::root(cfg.seed)
                                    .split("path")
                                    .split(static_cast<std::uint64_t>(epoch))
                                    .split(static_cast<std::uint64_t>(k));
            auto [f, l] = record_losses(m, rec, cfg, noise, &grads, scale);
            fl += f;
            st += l;
          }
          shard_grads[static_cast<std::size_t>(s)] = std::move(grads);
          shard_losses[static_cast<std::size_t>(s)] = {fl, st};
        } catch (const std::exception& e) {
          shard_errors[static_cast<std::size_t>(s)] = e.what();
        }
      };

      const int workers = std::max(1, std::min(cfg.threads, kShards));
      if (workers == 1) {
        for (int s = 0; s < kShards; ++s) run_shard(s);
      } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w)
          pool.emplace_back([&, w] {
            for (int s = w; s < kShards; s += workers) run_shard(s);
          });
        for (auto& th : pool) th.join();
      }

      bool failed = false;
      for (const auto& err : shard_errors)
        if (!err.empty()) failed = true;
      if (failed) {
        // divergence in some record: skip the whole batch and continue
        ++report.skipped_batches;
        continue;
      }

      m.params.zero_grad();
      for (int s = 0; s < kShards; ++s) {
        if (shard_grads[static_cast<std::size_t>(s)].empty()) continue;
        for (auto& [name, g] : shard_grads[static_cast<std::size_t>(s)]) {
          auto& dst = m.params.at(name).grad;
          for (long long i = 0; i < dst.size(); ++i)
            dst.data()[i] += g.data()[i];
        }
        flow_sum += shard_losses[static_cast<std::size_t>(s)].first;
        struct_sum += shard_losses[static_cast<std::size_t>(s)].second;
      }
      seen += bsz;
      if (!ad::adam_step(m.params, adam_state, adam_cfg))
        ++report.skipped_batches;
    }

    EpochReport er;
    er.epoch = epoch;
    er.flow_loss = seen > 0 ? flow_sum / static_cast<double>(seen) : 0.0;
    er.struct_loss = seen > 0 ? struct_sum / static_cast<double>(seen) : 0.0;

    // quick held-out check with a single candidate per record
    const auto& valid = corpus.valid.empty() ? corpus.train : corpus.valid;
    const std::size_t limit =
        std::min<std::size_t>(valid.size(),
                              static_cast<std::size_t>(cfg.epoch_eval_limit));
    int hits = 0;
    for (std::size_t i = 0; i < limit; ++i) {
      model::SolverConfig quick = eval_solver;
      auto pred = model::predict_one(m, valid[i].reactant, valid[i].agents,
                                     quick, nullptr);
      try {
        if (chem::graphs_equal(pred.product, valid[i].product)) ++hits;
      } catch (const chem::ChemError&) {
      }
    }
    er.top1 = limit > 0 ? static_cast<double>(hits) /
                              static_cast<double>(limit)
                        : 0.0;
    er.seconds = std::chrono::duration<double>(
                     std::chrono::steady_clock::now() - t0)
                     .count();
    report.epochs.push_back(er);
    if (on_epoch) on_epoch(er);
  }
  return report;
}

std::map<int, double> evaluate_topk(const model::Model& m,
                                    const std::vector<chem::ReactionRecord>&
                                        records,
                                    const model::SolverConfig& solver,
                                    int k_max, std::uint64_t seed) {
  std::map<int, long long> hits;
  for (int k = 1; k <= k_max; ++k) hits[k] = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    rng::Stream cand = rng::Stream::root(seed).split("candidates").split(
        static_cast<std::uint64_t>(i));
    auto ranked =
        model::predict_topk(m, records[i].reactant, records[i].agents,
                            solver, k_max, cand);
    int first_hit = -1;
    for (std::size_t c = 0; c < ranked.size(); ++c) {
      try {
        if (chem::graphs_equal(ranked[c].product, records[i].product)) {
          first_hit = static_cast<int>(c);
          break;
        }
      } catch (const chem::ChemError&) {
      }
    }
    if (first_hit >= 0)
      for (int k = first_hit + 1; k <= k_max; ++k) ++hits[k];
  }
  std::map<int, double> acc;
  for (int k = 1; k <= k_max; ++k)
    acc[k] = records.empty() ? 0.0
                             : static_cast<double>(hits[k]) /
                                   static_cast<double>(records.size());
  return acc;
}

void save_training_state(const model::Model& m, const ad::AdamState& st,
                         const std::string& dir) {
  std::map<std::string, ad::Tensor<float>> arrays;
  for (const auto& [name, e] : m.params.items) {
    arrays["adam/m/" + name] = e.m;
    arrays["adam/v/" + name] = e.v;
  }
  arrays["adam/step"] =
      ad::Tensor<float>::scalar(static_cast<float>(st.step));
  ad::save_arrays(dir + "/adam.lrxf", arrays);
}

bool load_training_state(model::Model& m, ad::AdamState& st,
                         const std::string& dir) {
  std::ifstream probe(dir + "/adam.lrxf");
  if (!probe) return false;
  auto arrays = ad::load_arrays(dir + "/adam.lrxf");
  for (auto& [name, e] : m.params.items) {
    e.m = arrays.at("adam/m/" + name);
    e.v = arrays.at("adam/v/" + name);
  }
  st.step = static_cast<long long>(arrays.at("adam/step").item());
  return true;
}

}  // namespace lrxf::train
