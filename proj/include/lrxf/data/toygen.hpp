#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lrxf/chem/graph.hpp"
#include "lrxf/data/corpus.hpp"
#include "lrxf/rng.hpp"

namespace lrxf::data {

// Rewrite rule: break the unique A-B bond (A carbon, B of break_elem) and
// form A-C to the unique form_elem atom with a free valence slot that is
// not adjacent to A. The required agent token selects this template among
// the ones matching a scaffold.
struct ToyTemplate {
  int id = 0;
  std::string break_elem;  // B
  std::string form_elem;   // C
  std::string agent;       // SMILES of the selecting agent
};

// Eight templates over ordered heteroatom pairs, each selected by one of
// eight distinct small-molecule agents.
std::vector<ToyTemplate> default_templates();

// Agents for the long-tail variant: each template keyed by many distinct
// rare molecules instead of one common one.
std::vector<std::string> rare_agent_pool(int per_template);

struct ToyGenConfig {
  int n_train = 5000;
  int n_valid = 500;
  int n_test = 500;
  std::uint64_t seed = 0;
  int min_atoms = 6;
  int max_atoms = 14;
  bool rare_agents = false;  // head/tail mixed agent distribution
  int max_retries = 200;
};

struct MatchResult {
  int a = -1;  // carbon keeping its bond count
  int b = -1;  // atom losing the bond
  int c = -1;  // atom gaining the bond
};

// Template application point, or nothing if the pattern is not unique.
std::optional<MatchResult> match_template(const chem::MolGraph& scaffold,
                                          const ToyTemplate& t);

chem::MolGraph apply_template(const chem::MolGraph& scaffold,
                              const MatchResult& m);

// Random valence-valid scaffolds with exactly the agent-resolvable
// ambiguity: at least two templates match and the drawn agent decides.
Corpus generate_corpus(const ToyGenConfig& cfg,
                       const std::vector<ToyTemplate>& templates);

inline Corpus generate_corpus(const ToyGenConfig& cfg) {
  return generate_corpus(cfg, default_templates());
}

}  // namespace lrxf::data
