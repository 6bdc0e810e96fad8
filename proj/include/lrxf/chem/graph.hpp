#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace lrxf::chem {

struct ChemError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct AtomRecord {
  std::string element;   // symbol, e.g. "C", "Cl", "Na"
  int charge = 0;        // formal charge in [-6, +6]
  bool aromatic = false;
  int map = 0;           // atom-map index, 0 = unmapped
};

// Atom-indexed molecular graph. Bonds live in a dense symmetric adjacency
// of orders {0, 1, 1.5, 2, 3}; aromatic bonds are stored as 1.5 and count
// 1.5 toward valence.
class MolGraph {
 public:
  MolGraph() = default;
  explicit MolGraph(std::vector<AtomRecord> atoms)
      : atoms_(std::move(atoms)),
        bonds_(atoms_.size() * atoms_.size(), 0.0f) {}

  int atom_count() const { return static_cast<int>(atoms_.size()); }

  const AtomRecord& atom(int i) const { return atoms_[idx(i)]; }
  AtomRecord& atom(int i) { return atoms_[idx(i)]; }
  const std::vector<AtomRecord>& atoms() const { return atoms_; }

  float order(int i, int j) const {
    return bonds_[idx(i) * atoms_.size() + idx(j)];
  }

  void set_order(int i, int j, float order) {
    if (i == j) throw ChemError("self-bond rejected");
    bonds_[idx(i) * atoms_.size() + idx(j)] = order;
    bonds_[idx(j) * atoms_.size() + idx(i)] = order;
  }

  // Sum of bond orders at atom i (aromatic counts 1.5).
  float valence_sum(int i) const {
    float s = 0.0f;
    for (int j = 0; j < atom_count(); ++j) s += order(i, j);
    return s;
  }

  int degree(int i) const {
    int d = 0;
    for (int j = 0; j < atom_count(); ++j)
      if (order(i, j) != 0.0f) ++d;
    return d;
  }

  std::vector<int> neighbors(int i) const {
    std::vector<int> out;
    for (int j = 0; j < atom_count(); ++j)
      if (order(i, j) != 0.0f) out.push_back(j);
    return out;
  }

  const std::vector<float>& adjacency() const { return bonds_; }

  // Connected components as atom index lists, in first-atom order.
  std::vector<std::vector<int>> components() const;

  // New graph over the given atom subset; `keep[k]` becomes index k.
  MolGraph induced(const std::vector<int>& keep) const;

  // New graph with atom old index perm[k] placed at new index k.
  MolGraph permuted(const std::vector<int>& perm) const { return induced(perm); }

 private:
  std::size_t idx(int i) const {
    if (i < 0 || i >= atom_count())
      throw ChemError("atom index out of range: " + std::to_string(i));
    return static_cast<std::size_t>(i);
  }

  std::vector<AtomRecord> atoms_;
  std::vector<float> bonds_;
};

// Entrywise equality of bond matrices, charges, aromaticity flags and
// element symbols on a shared indexing. Differing atom counts are a
// structural error, not inequality.
bool graphs_equal(const MolGraph& a, const MolGraph& b);

// Maximum valence table; elements outside it are unconstrained.
// N gains one slot at formal charge +1.
std::optional<float> max_valence(const std::string& element, int charge);

// First valence violation, if any: "atom <i> (<El>): valence <v> exceeds <m>".
std::optional<std::string> valence_violation(const MolGraph& g);

inline bool valence_ok(const MolGraph& g) {
  return !valence_violation(g).has_value();
}

}  // namespace lrxf::chem
