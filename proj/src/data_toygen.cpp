#include "lrxf/data/toygen.hpp"

#include <algorithm>
#include <set>

#include "lrxf/chem/smiles.hpp"

namespace lrxf::data {

std::vector<ToyTemplate> default_templates() {
  return {
      {0, "N", "O", "O"},  {1, "O", "N", "N"},  {2, "N", "S", "S"},
      {3, "S", "N", "P"},  {4, "O", "S", "C"},  {5, "S", "O", "CC"},
      {6, "N", "P", "CO"}, {7, "P", "N", "CN"},
  };
}

std::vector<std::string> rare_agent_pool(int per_template) {
  // distinct small molecules: chains of length 2-3 over a few elements and
  // bond orders, deduplicated by canonical form
  std::vector<std::string> out;
  std::set<std::string> seen;
  const std::vector<std::string> els = {"C", "N", "O", "S", "P"};
  const std::vector<std::string> bonds = {"", "="};
  for (const auto& b1 : bonds)
    for (const auto& e1 : els)
      for (const auto& e2 : els)
        for (const auto& e3 : els) {
          std::string smiles = e1 + b1 + e2 + e3;
          try {
            chem::MolGraph g = chem::parse_smiles(smiles);
            std::string canon = chem::canonical_smiles(g);
            if (seen.insert(canon).second) out.push_back(canon);
          } catch (const chem::ChemError&) {
            continue;
          }
          if (static_cast<int>(out.size()) >= per_template * 8) return out;
        }
  return out;
}

std::optional<MatchResult> match_template(const chem::MolGraph& scaffold,
                                          const ToyTemplate& t) {
  MatchResult m;
  int ab_count = 0;
  for (int i = 0; i < scaffold.atom_count(); ++i) {
    if (scaffold.atom(i).element != "C") continue;
    for (int j = 0; j < scaffold.atom_count(); ++j) {
      if (scaffold.atom(j).element != t.break_elem) continue;
      if (scaffold.order(i, j) != 1.0f) continue;
      ++ab_count;
      m.a = i;
      m.b = j;
    }
  }
  if (ab_count != 1) return std::nullopt;
  int c_count = 0;
  for (int k = 0; k < scaffold.atom_count(); ++k) {
    if (k == m.a || k == m.b) continue;
    if (scaffold.atom(k).element != t.form_elem) continue;
    if (scaffold.order(m.a, k) != 0.0f) {
      continue;  // already bonded to A
    }
    auto mv = chem::max_valence(scaffold.atom(k).element, 0);
    if (mv && scaffold.valence_sum(k) + 1.0f > *mv) continue;
    ++c_count;
    m.c = k;
  }
  if (c_count != 1) return std::nullopt;
  return m;
}

chem::MolGraph apply_template(const chem::MolGraph& scaffold,
                              const MatchResult& m) {
  chem::MolGraph out = scaffold;
  out.set_order(m.a, m.b, 0.0f);
  out.set_order(m.a, m.c, 1.0f);
  if (auto err = chem::valence_violation(out))
    throw chem::ChemError("template application broke valence: " + *err);
  return out;
}

namespace {

// All-carbon random tree with two heteroatom leaves on distinct hosts.
chem::MolGraph random_scaffold(int atoms, const std::string& x,
                               const std::string& y, rng::Stream& rs) {
  const int carbons = atoms - 2;
  std::vector<chem::AtomRecord> recs(
      static_cast<std::size_t>(carbons), chem::AtomRecord{"C", 0, false, 0});
  recs.push_back({x, 0, false, 0});
  recs.push_back({y, 0, false, 0});
  chem::MolGraph g(std::move(recs));
  for (int i = 1; i < carbons; ++i) {
    std::vector<int> hosts;
    for (int j = 0; j < i; ++j)
      if (g.valence_sum(j) + 1.0f <= 4.0f) hosts.push_back(j);
    g.set_order(i, hosts[rs.next_below(hosts.size())], 1.0f);
  }
  // distinct carbon hosts for the two heteroatoms
  std::vector<int> free;
  for (int j = 0; j < carbons; ++j)
    if (g.valence_sum(j) + 1.0f <= 4.0f) free.push_back(j);
  if (free.size() < 2) return random_scaffold(atoms, x, y, rs);
  int hx = free[rs.next_below(free.size())];
  int hy = hx;
  while (hy == hx) hy = free[rs.next_below(free.size())];
  g.set_order(carbons, hx, 1.0f);
  g.set_order(carbons + 1, hy, 1.0f);
  for (int i = 0; i < g.atom_count(); ++i) g.atom(i).map = i + 1;
  return g;
}

}  // namespace

Corpus generate_corpus(const ToyGenConfig& cfg,
                       const std::vector<ToyTemplate>& templates) {
  if (templates.empty())
    throw chem::ChemError("generate_corpus needs at least one template");
  {
    std::set<std::string> agents;
    for (const auto& t : templates)
      if (!agents.insert(t.agent).second)
        throw chem::ChemError("templates must be distinguishable by agent");
  }
  // heteroatom pairs that select exactly the templates able to match
  std::vector<std::pair<std::string, std::string>> pairs;
  {
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& t : templates) {
      auto p = std::minmax(t.break_elem, t.form_elem);
      if (p.first != p.second) seen.insert({p.first, p.second});
    }
    pairs.assign(seen.begin(), seen.end());
  }
  if (pairs.empty())
    throw chem::ChemError("templates define no usable heteroatom pair");

  std::vector<std::string> rare_pool;
  if (cfg.rare_agents) rare_pool = rare_agent_pool(/*per_template=*/16);

  rng::Stream root = rng::Stream::root(cfg.seed).split("gen_corpus");
  Corpus corpus;
  std::set<std::string> seen_scaffolds;
  const int want_total = cfg.n_train + cfg.n_valid + cfg.n_test;
  const int required_matches =
      std::min<int>(2, static_cast<int>(templates.size()));
  long long serial = 0;
  int emitted = 0;
  long long attempts = 0;
  const long long max_attempts =
      static_cast<long long>(want_total) * cfg.max_retries;
  while (emitted < want_total && attempts < max_attempts) {
    ++attempts;
    rng::Stream rs = root.split(static_cast<std::uint64_t>(serial++));
    int atoms = cfg.min_atoms +
                static_cast<int>(rs.next_below(
                    static_cast<std::uint64_t>(cfg.max_atoms - cfg.min_atoms +
                                               1)));
    auto [x, y] = pairs[rs.next_below(pairs.size())];
    chem::MolGraph scaffold = random_scaffold(atoms, x, y, rs);
    if (auto err = chem::valence_violation(scaffold)) continue;

    std::vector<std::pair<const ToyTemplate*, MatchResult>> matches;
    for (const auto& t : templates)
      if (auto m = match_template(scaffold, t)) matches.emplace_back(&t, *m);
    if (static_cast<int>(matches.size()) < required_matches) continue;

    std::string canon = chem::canonical_smiles(scaffold);
    if (!seen_scaffolds.insert(canon).second) continue;

    auto [tpl, match] = matches[rs.next_below(matches.size())];
    chem::ReactionRecord rec;
    rec.reactant = scaffold;
    rec.product = apply_template(scaffold, match);
    rec.label = tpl->id;
    std::string agent_smiles = tpl->agent;
    if (cfg.rare_agents && rs.next_unit() < 0.5) {
      // tail half: a rare agent that still identifies the template
      const int per = static_cast<int>(rare_pool.size()) /
                      static_cast<int>(templates.size());
      int pick = tpl->id * per + static_cast<int>(rs.next_below(per));
      agent_smiles = rare_pool[static_cast<std::size_t>(pick)];
    }
    rec.agents.push_back(chem::parse_smiles(agent_smiles));

    // split membership is a pure function of the scaffold
    std::uint64_t bucket = rng::fnv1a(canon) % 12;
    std::vector<chem::ReactionRecord>* split = nullptr;
    if (bucket < 10) split = &corpus.train;
    else if (bucket == 10) split = &corpus.valid;
    else split = &corpus.test;
    int quota = split == &corpus.train ? cfg.n_train
                : split == &corpus.valid ? cfg.n_valid
                                         : cfg.n_test;
    if (static_cast<int>(split->size()) >= quota) continue;
    rec.id = "toy" + std::to_string(emitted);
    split->push_back(std::move(rec));
    ++emitted;
  }
  if (emitted < want_total)
    throw chem::ChemError(
        "corpus generation exhausted retries; requested sizes unreachable");
  return corpus;
}

}  // namespace lrxf::data
