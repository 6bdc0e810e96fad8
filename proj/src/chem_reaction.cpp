#include "lrxf/chem/reaction.hpp"

#include <map>
#include <set>

#include <json.hpp>

namespace lrxf::chem {

std::pair<MolGraph, std::vector<MolGraph>> split_roles(
    const std::vector<MolGraph>& src, const MolGraph& tgt) {
  std::set<int> tgt_maps;
  for (int i = 0; i < tgt.atom_count(); ++i)
    if (tgt.atom(i).map != 0) tgt_maps.insert(tgt.atom(i).map);
  if (tgt_maps.empty())
    throw ChemError("split_roles: product has no atom maps");

  std::vector<const MolGraph*> reactants;
  std::vector<MolGraph> agents;
  for (const MolGraph& m : src) {
    bool shares = false;
    for (int i = 0; i < m.atom_count(); ++i)
      if (m.atom(i).map != 0 && tgt_maps.count(m.atom(i).map)) shares = true;
    if (shares) {
      reactants.push_back(&m);
    } else {
      MolGraph a = m;
      for (int i = 0; i < a.atom_count(); ++i) a.atom(i).map = 0;
      agents.push_back(std::move(a));
    }
  }

  // Merge reactant molecules block-diagonally, preserving input order; this
  // is the global re-indexing onto {0..N_R-1}.
  std::vector<AtomRecord> atoms;
  for (const MolGraph* m : reactants)
    for (int i = 0; i < m->atom_count(); ++i) atoms.push_back(m->atom(i));
  MolGraph merged(std::move(atoms));
  int base = 0;
  for (const MolGraph* m : reactants) {
    for (int i = 0; i < m->atom_count(); ++i)
      for (int j = i + 1; j < m->atom_count(); ++j)
        if (m->order(i, j) != 0.0f)
          merged.set_order(base + i, base + j, m->order(i, j));
    base += m->atom_count();
  }

  std::set<int> src_maps;
  for (int i = 0; i < merged.atom_count(); ++i)
    if (merged.atom(i).map != 0) src_maps.insert(merged.atom(i).map);
  for (int m : tgt_maps)
    if (!src_maps.count(m))
      throw AtomConservationError(
          "product atom map " + std::to_string(m) +
          " has no source counterpart");
  return {std::move(merged), std::move(agents)};
}

MolGraph align_product(const MolGraph& reactant, const MolGraph& tgt) {
  if (reactant.atom_count() != tgt.atom_count())
    throw AtomConservationError(
        "atom count mismatch: reactant " +
        std::to_string(reactant.atom_count()) + " vs product " +
        std::to_string(tgt.atom_count()));
  std::map<int, int> by_map;
  for (int i = 0; i < tgt.atom_count(); ++i) {
    int m = tgt.atom(i).map;
    if (m == 0)
      throw AtomConservationError("product atom " + std::to_string(i) +
                                  " is unmapped");
    if (!by_map.emplace(m, i).second)
      throw AtomConservationError("duplicate product atom map " +
                                  std::to_string(m));
  }
  std::vector<int> perm;
  perm.reserve(static_cast<std::size_t>(reactant.atom_count()));
  for (int i = 0; i < reactant.atom_count(); ++i) {
    int m = reactant.atom(i).map;
    if (m == 0)
      throw AtomConservationError("reactant atom " + std::to_string(i) +
                                  " is unmapped");
    auto it = by_map.find(m);
    if (it == by_map.end())
      throw AtomConservationError("reactant atom map " + std::to_string(m) +
                                  " missing from product");
    if (tgt.atom(it->second).element != reactant.atom(i).element)
      throw AtomConservationError("atom map " + std::to_string(m) +
                                  " changes element");
    perm.push_back(it->second);
  }
  return tgt.permuted(perm);
}

ReactionRecord make_record(const std::vector<MolGraph>& src,
                           const MolGraph& tgt) {
  auto [reactant, agents] = split_roles(src, tgt);
  ReactionRecord r;
  r.product = align_product(reactant, tgt);
  r.reactant = std::move(reactant);
  r.agents = std::move(agents);
  return r;
}

namespace {

nlohmann::json graph_json(const MolGraph& g) {
  nlohmann::json j;
  j["atoms"] = nlohmann::json::array();
  j["charge"] = nlohmann::json::array();
  j["aromatic"] = nlohmann::json::array();
  bool any_map = false;
  for (int i = 0; i < g.atom_count(); ++i) {
    j["atoms"].push_back(g.atom(i).element);
    j["charge"].push_back(g.atom(i).charge);
    j["aromatic"].push_back(g.atom(i).aromatic);
    any_map = any_map || g.atom(i).map != 0;
  }
  if (any_map) {
    j["maps"] = nlohmann::json::array();
    for (int i = 0; i < g.atom_count(); ++i)
      j["maps"].push_back(g.atom(i).map);
  }
  j["bonds"] = nlohmann::json::array();
  for (int i = 0; i < g.atom_count(); ++i)
    for (int k = i + 1; k < g.atom_count(); ++k)
      if (g.order(i, k) != 0.0f)
        j["bonds"].push_back({i, k, g.order(i, k)});
  return j;
}

MolGraph graph_from(const nlohmann::json& j) {
  std::vector<AtomRecord> atoms;
  const auto& els = j.at("atoms");
  const auto& charges = j.at("charge");
  const auto& arom = j.at("aromatic");
  if (els.size() != charges.size() || els.size() != arom.size())
    throw ChemError("graph json: array lengths disagree");
  for (std::size_t i = 0; i < els.size(); ++i) {
    AtomRecord a;
    a.element = els[i].get<std::string>();
    a.charge = charges[i].get<int>();
    a.aromatic = arom[i].get<bool>();
    if (j.contains("maps")) a.map = j["maps"][i].get<int>();
    atoms.push_back(std::move(a));
  }
  MolGraph g(std::move(atoms));
  for (const auto& b : j.at("bonds"))
    g.set_order(b[0].get<int>(), b[1].get<int>(), b[2].get<float>());
  return g;
}

}  // namespace

std::string graph_to_json(const MolGraph& g) { return graph_json(g).dump(); }

MolGraph graph_from_json(const std::string& json) {
  return graph_from(nlohmann::json::parse(json));
}

std::string record_to_json(const ReactionRecord& r) {
  nlohmann::json j;
  j["id"] = r.id;
  if (r.label >= 0) j["label"] = r.label;
  j["reactant"] = graph_json(r.reactant);
  j["agents"] = nlohmann::json::array();
  for (const auto& a : r.agents) j["agents"].push_back(graph_json(a));
  j["product"] = graph_json(r.product);
  return j.dump();
}

ReactionRecord record_from_json(const std::string& json) {
  nlohmann::json j = nlohmann::json::parse(json);
  ReactionRecord r;
  r.id = j.value("id", "");
  r.label = j.value("label", -1);
  r.reactant = graph_from(j.at("reactant"));
  for (const auto& a : j.at("agents")) r.agents.push_back(graph_from(a));
  r.product = graph_from(j.at("product"));
  if (r.reactant.atom_count() != r.product.atom_count())
    throw AtomConservationError("record json: side atom counts differ");
  return r;
}

}  // namespace lrxf::chem
