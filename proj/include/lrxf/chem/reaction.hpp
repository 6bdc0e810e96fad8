#pragma once

#include <string>
#include <utility>
#include <vector>

#include "lrxf/chem/graph.hpp"

namespace lrxf::chem {

struct AtomConservationError : ChemError {
  using ChemError::ChemError;
};

// Reactant / conditional agents / product with a shared 0..N-1 atom
// indexing between the two sides (index i is the same physical atom).
struct ReactionRecord {
  MolGraph reactant;
  std::vector<MolGraph> agents;  // atom-map-free
  MolGraph product;
  std::string id;
  int label = -1;  // optional class label, -1 = none
};

// Molecules sharing at least one atom-map index with tgt merge (in input
// order) into one re-indexed reactant graph; the rest become agents with
// maps stripped. Errors if tgt has no maps or a tgt map lacks a source
// counterpart.
std::pair<MolGraph, std::vector<MolGraph>> split_roles(
    const std::vector<MolGraph>& src, const MolGraph& tgt);

// Re-orders tgt onto the reactant indexing via the atom-map bijection.
// Errors when the bijection does not hold (atom conservation).
MolGraph align_product(const MolGraph& reactant, const MolGraph& tgt);

// Full pipeline: split, re-index, align. Metadata left to the caller.
ReactionRecord make_record(const std::vector<MolGraph>& src,
                           const MolGraph& tgt);

// JSON-lines graph format: {"atoms":[...], "bonds":[[i,j,order],...],
// "charge":[...], "aromatic":[...]} with an optional "maps" array.
std::string graph_to_json(const MolGraph& g);
MolGraph graph_from_json(const std::string& json);

std::string record_to_json(const ReactionRecord& r);
ReactionRecord record_from_json(const std::string& json);

}  // namespace lrxf::chem
