#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "lrxf/chem/graph.hpp"

namespace lrxf::chem {

// Raised on malformed input; `offset` is the byte position in the input.
struct SmilesError : ChemError {
  SmilesError(const std::string& what, std::size_t offset)
      : ChemError(what + " at byte " + std::to_string(offset)),
        offset(offset) {}
  std::size_t offset;
};

// Parses the supported SMILES subset: organic-subset atoms
// B/C/N/O/P/S/F/Cl/Br/I, aromatic lowercase, bonds -/=/#/:, branches,
// ring-closure digits (and %nn), bracket atoms with optional hydrogen
// count, charge and atom map, dot-separated components. Stereo marks and
// isotopes are rejected explicitly. The result is valence-checked.
MolGraph parse_smiles(std::string_view text);

// Top-level dot-split into separately parsed molecules.
std::vector<MolGraph> parse_components(std::string_view text);

struct ReactionLine {
  std::vector<MolGraph> source;  // reactants field plus agents field
  std::vector<MolGraph> target;  // products field
  int source_reactant_count = 0; // molecules from the first field
};

// `reactants>agents>products`; both left fields form the source set.
ReactionLine parse_reaction_line(std::string_view line);

// Canonical SMILES writer. The emitted atom order (write order) is the
// parse order of the returned string, so parse(write(g)) indexes atoms by
// `order` below. Atom maps are emitted when nonzero unless stripped.
struct WriteResult {
  std::string smiles;
  std::vector<int> order;  // order[k] = original index of k-th written atom
};

WriteResult write_smiles_ordered(const MolGraph& g, bool keep_maps = true);

inline std::string write_smiles(const MolGraph& g, bool keep_maps = true) {
  return write_smiles_ordered(g, keep_maps).smiles;
}

// Map-free canonical form; identical strings iff same structure for the
// molecule classes this toolkit handles.
inline std::string canonical_smiles(const MolGraph& g) {
  return write_smiles(g, /*keep_maps=*/false);
}

// Canonical atom ranks (all distinct) used by the writer; invariant under
// input atom permutation.
std::vector<int> canonical_ranks(const MolGraph& g);

}  // namespace lrxf::chem
