#include "lrxf/chem/graph.hpp"

#include <algorithm>

namespace lrxf::chem {

std::vector<std::vector<int>> MolGraph::components() const {
  std::vector<int> comp(atoms_.size(), -1);
  std::vector<std::vector<int>> out;
  for (int start = 0; start < atom_count(); ++start) {
    if (comp[static_cast<std::size_t>(start)] >= 0) continue;
    std::vector<int> stack{start};
    std::vector<int> members;
    comp[static_cast<std::size_t>(start)] = static_cast<int>(out.size());
    while (!stack.empty()) {
      int i = stack.back();
      stack.pop_back();
      members.push_back(i);
      for (int j = 0; j < atom_count(); ++j)
        if (order(i, j) != 0.0f && comp[static_cast<std::size_t>(j)] < 0) {
          comp[static_cast<std::size_t>(j)] = static_cast<int>(out.size());
          stack.push_back(j);
        }
    }
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  return out;
}

MolGraph MolGraph::induced(const std::vector<int>& keep) const {
  std::vector<AtomRecord> atoms;
  atoms.reserve(keep.size());
  for (int i : keep) atoms.push_back(atom(i));
  MolGraph g(std::move(atoms));
  for (std::size_t a = 0; a < keep.size(); ++a)
    for (std::size_t b = a + 1; b < keep.size(); ++b) {
      float o = order(keep[a], keep[b]);
      if (o != 0.0f)
        g.set_order(static_cast<int>(a), static_cast<int>(b), o);
    }
  return g;
}

bool graphs_equal(const MolGraph& a, const MolGraph& b) {
  if (a.atom_count() != b.atom_count())
    throw ChemError("graphs_equal: differing atom counts " +
                    std::to_string(a.atom_count()) + " vs " +
                    std::to_string(b.atom_count()));
  for (int i = 0; i < a.atom_count(); ++i) {
    if (a.atom(i).element != b.atom(i).element) return false;
    if (a.atom(i).charge != b.atom(i).charge) return false;
    if (a.atom(i).aromatic != b.atom(i).aromatic) return false;
  }
  return a.adjacency() == b.adjacency();
}

std::optional<float> max_valence(const std::string& element, int charge) {
  if (element == "C") return 4.0f;
  if (element == "N") return charge == 1 ? 4.0f : 3.0f;
  if (element == "O") return 2.0f;
  if (element == "S") return 6.0f;
  if (element == "P") return 5.0f;
  if (element == "B") return 3.0f;
  if (element == "F" || element == "Cl" || element == "Br" || element == "I")
    return 1.0f;
  return std::nullopt;
}

std::optional<std::string> valence_violation(const MolGraph& g) {
  for (int i = 0; i < g.atom_count(); ++i) {
    const AtomRecord& a = g.atom(i);
    auto mv = max_valence(a.element, a.charge);
    if (!mv) continue;
    float v = g.valence_sum(i);
    if (v > *mv + 1e-6f)
      return "atom " + std::to_string(i) + " (" + a.element + "): valence " +
             std::to_string(v) + " exceeds " + std::to_string(*mv);
  }
  return std::nullopt;
}

}  // namespace lrxf::chem
