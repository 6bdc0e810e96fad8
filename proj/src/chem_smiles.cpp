#include "lrxf/chem/smiles.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <set>
#include <tuple>

namespace lrxf::chem {

namespace {

const std::set<std::string>& known_elements() {
  static const std::set<std::string> table = {
      "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na",
      "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar", "K",  "Ca", "Sc", "Ti",
      "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
      "Se", "Br", "Kr", "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru",
      "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe", "Cs",
      "Ba", "La", "Ce", "Pr", "Nd", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho",
      "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W",  "Re", "Os", "Ir", "Pt",
      "Au", "Hg", "Tl", "Pb", "Bi"};
  return table;
}

bool is_organic_subset(const std::string& e) {
  return e == "B" || e == "C" || e == "N" || e == "O" || e == "P" ||
         e == "S" || e == "F" || e == "Cl" || e == "Br" || e == "I";
}

bool aromatic_symbol_ok(const std::string& e) {
  return e == "B" || e == "C" || e == "N" || e == "O" || e == "P" || e == "S";
}

struct PendingRing {
  int atom = -1;
  float bond = -1.0f;  // -1 = implicit
  std::size_t offset = 0;
};

struct Parser {
  std::string_view text;
  std::size_t pos = 0;

  std::vector<AtomRecord> atoms;
  std::vector<std::tuple<int, int, float>> bonds;  // (i, j, order)
  std::vector<int> stack;                          // branch points
  int prev = -1;
  float pending_bond = -1.0f;   // -1 = implicit
  std::size_t pending_off = 0;
  std::map<int, PendingRing> rings;

  [[noreturn]] void fail(const std::string& msg) const {
    throw SmilesError(msg, pos);
  }

  char peek() const { return pos < text.size() ? text[pos] : '\0'; }
  char take() { return text[pos++]; }
  bool done() const { return pos >= text.size(); }

  int read_digits() {
    int v = 0;
    bool any = false;
    while (!done() && std::isdigit(static_cast<unsigned char>(peek()))) {
      v = v * 10 + (take() - '0');
      any = true;
    }
    return any ? v : -1;
  }

  void add_atom(AtomRecord a) {
    int idx = static_cast<int>(atoms.size());
    atoms.push_back(std::move(a));
    if (prev >= 0) {
      float order = pending_bond;
      if (order < 0.0f)
        order = (atoms[static_cast<std::size_t>(prev)].aromatic &&
                 atoms.back().aromatic)
                    ? 1.5f
                    : 1.0f;
      bonds.emplace_back(prev, idx, order);
    } else if (pending_bond >= 0.0f) {
      throw SmilesError("bond symbol with no preceding atom", pending_off);
    }
    pending_bond = -1.0f;
    prev = idx;
  }

  void ring_closure(int number) {
    auto it = rings.find(number);
    if (prev < 0) fail("ring closure before any atom");
    if (it == rings.end()) {
      rings[number] = PendingRing{prev, pending_bond, pos};
      pending_bond = -1.0f;
      return;
    }
    PendingRing open = it->second;
    rings.erase(it);
    if (open.atom == prev) fail("ring closure to the same atom");
    float order = -1.0f;
    if (open.bond >= 0.0f && pending_bond >= 0.0f &&
        open.bond != pending_bond)
      fail("conflicting ring-closure bond orders");
    order = pending_bond >= 0.0f ? pending_bond : open.bond;
    if (order < 0.0f)
      order = (atoms[static_cast<std::size_t>(open.atom)].aromatic &&
               atoms[static_cast<std::size_t>(prev)].aromatic)
                  ? 1.5f
                  : 1.0f;
    bonds.emplace_back(open.atom, prev, order);
    pending_bond = -1.0f;
  }

  void parse_bracket() {
    std::size_t open_off = pos;
    take();  // '['
    if (done()) fail("unterminated bracket atom");
    if (std::isdigit(static_cast<unsigned char>(peek())))
      fail("unsupported feature: isotope");
    AtomRecord a;
    char c = peek();
    if (std::islower(static_cast<unsigned char>(c))) {
      std::string sym(1, static_cast<char>(std::toupper(take())));
      if (!aromatic_symbol_ok(sym)) fail("unknown aromatic atom in bracket");
      a.element = sym;
      a.aromatic = true;
    } else if (std::isupper(static_cast<unsigned char>(c))) {
      std::string sym(1, take());
      if (!done() && std::islower(static_cast<unsigned char>(peek()))) {
        std::string two = sym + peek();
        if (known_elements().count(two)) {
          sym = two;
          take();
        }
      }
      if (!known_elements().count(sym)) fail("unknown element " + sym);
      a.element = sym;
    } else {
      fail(std::string("unexpected character '") + c + "' in bracket atom");
    }
    // optional hydrogen count: parsed and discarded, hydrogens stay implicit
    if (peek() == 'H') {
      take();
      read_digits();
    }
    if (peek() == '+' || peek() == '-') {
      char sign = take();
      int mag = 1;
      while (peek() == sign) {
        take();
        ++mag;
      }
      int digits = read_digits();
      if (digits >= 0) {
        if (mag != 1) fail("malformed charge");
        mag = digits;
      }
      a.charge = sign == '+' ? mag : -mag;
      if (a.charge < -6 || a.charge > 6) fail("charge out of range [-6, +6]");
    }
    if (peek() == '@') fail("unsupported feature: stereo mark");
    if (peek() == ':') {
      take();
      int m = read_digits();
      if (m < 0) fail("malformed atom map");
      a.map = m;
    }
    if (peek() != ']')
      throw SmilesError("unterminated bracket atom", open_off);
    take();
    add_atom(std::move(a));
  }

  void run() {
    while (!done()) {
      char c = peek();
      if (c == '[') {
        parse_bracket();
      } else if (c == 'C' && pos + 1 < text.size() && text[pos + 1] == 'l') {
        pos += 2;
        add_atom({"Cl", 0, false, 0});
      } else if (c == 'B' && pos + 1 < text.size() && text[pos + 1] == 'r') {
        pos += 2;
        add_atom({"Br", 0, false, 0});
      } else if (c == 'B' || c == 'C' || c == 'N' || c == 'O' || c == 'P' ||
                 c == 'S' || c == 'F' || c == 'I') {
        take();
        add_atom({std::string(1, c), 0, false, 0});
      } else if (c == 'b' || c == 'c' || c == 'n' || c == 'o' || c == 'p' ||
                 c == 's') {
        take();
        add_atom({std::string(1, static_cast<char>(std::toupper(c))), 0,
                  true, 0});
      } else if (c == '-' || c == '=' || c == '#' || c == ':') {
        pending_off = pos;
        take();
        if (pending_bond >= 0.0f) fail("duplicate bond symbol");
        pending_bond = c == '-' ? 1.0f : c == '=' ? 2.0f : c == '#' ? 3.0f
                                                                    : 1.5f;
      } else if (std::isdigit(static_cast<unsigned char>(c))) {
        take();
        ring_closure(c - '0');
      } else if (c == '%') {
        take();
        if (pos + 1 >= text.size() + 0 ||
            !std::isdigit(static_cast<unsigned char>(peek())))
          fail("malformed %nn ring closure");
        int hi = take() - '0';
        if (!std::isdigit(static_cast<unsigned char>(peek())))
          fail("malformed %nn ring closure");
        int lo = take() - '0';
        ring_closure(hi * 10 + lo);
      } else if (c == '(') {
        take();
        if (prev < 0) fail("branch with no preceding atom");
        stack.push_back(prev);
      } else if (c == ')') {
        take();
        if (stack.empty()) fail("unmatched ')'");
        prev = stack.back();
        stack.pop_back();
      } else if (c == '/' || c == '\\' || c == '@') {
        fail("unsupported feature: stereo mark");
      } else if (c == '.') {
        take();
        if (pending_bond >= 0.0f)
          throw SmilesError("bond symbol before dot", pending_off);
        prev = -1;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        fail("whitespace inside SMILES");
      } else {
        fail(std::string("unexpected character '") + c + "'");
      }
    }
    if (!stack.empty()) fail("unclosed branch");
    if (pending_bond >= 0.0f)
      throw SmilesError("dangling bond symbol", pending_off);
    if (!rings.empty())
      throw SmilesError("unclosed ring bond " +
                            std::to_string(rings.begin()->first),
                        rings.begin()->second.offset);
    if (atoms.empty()) fail("empty SMILES");
  }

  MolGraph build() const {
    MolGraph g(atoms);
    for (auto [i, j, order] : bonds) {
      if (g.order(i, j) != 0.0f) throw SmilesError("duplicate bond", 0);
      g.set_order(i, j, order);
    }
    std::set<int> maps;
    for (int i = 0; i < g.atom_count(); ++i) {
      int m = g.atom(i).map;
      if (m != 0 && !maps.insert(m).second)
        throw SmilesError("duplicate atom map " + std::to_string(m), 0);
    }
    if (auto err = valence_violation(g))
      throw ChemError("valence violation: " + *err);
    return g;
  }
};

}  // namespace

MolGraph parse_smiles(std::string_view text) {
  Parser p;
  p.text = text;
  p.run();
  return p.build();
}

std::vector<MolGraph> parse_components(std::string_view text) {
  std::vector<MolGraph> out;
  std::size_t start = 0;
  int bracket_depth = 0;
  for (std::size_t i = 0; i <= text.size(); ++i) {
    if (i < text.size() && text[i] == '[') ++bracket_depth;
    if (i < text.size() && text[i] == ']') --bracket_depth;
    if (i == text.size() || (text[i] == '.' && bracket_depth == 0)) {
      if (i > start) out.push_back(parse_smiles(text.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

ReactionLine parse_reaction_line(std::string_view line) {
  std::array<std::string_view, 3> fields;
  std::size_t field = 0, start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == '>') {
      if (field >= 3) throw SmilesError("too many '>' separators", i);
      fields[field++] = line.substr(start, i - start);
      start = i + 1;
    }
  }
  if (field != 3)
    throw SmilesError("reaction line needs reactants>agents>products",
                      line.size());
  ReactionLine out;
  out.source = parse_components(fields[0]);
  out.source_reactant_count = static_cast<int>(out.source.size());
  for (auto& m : parse_components(fields[1])) out.source.push_back(std::move(m));
  out.target = parse_components(fields[2]);
  if (out.target.empty())
    throw SmilesError("reaction line has no product", line.size());
  return out;
}

// --- canonical writer ---

namespace {

std::vector<int> dense_ranks(const std::vector<std::string>& keys) {
  std::vector<int> idx(keys.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    return keys[static_cast<std::size_t>(a)] <
           keys[static_cast<std::size_t>(b)];
  });
  std::vector<int> rank(keys.size());
  int r = 0;
  for (std::size_t k = 0; k < idx.size(); ++k) {
    if (k > 0 && keys[static_cast<std::size_t>(idx[k])] !=
                     keys[static_cast<std::size_t>(idx[k - 1])])
      ++r;
    rank[static_cast<std::size_t>(idx[k])] = r;
  }
  return rank;
}

std::string pad_num(int v, int width = 6) {
  std::string s = std::to_string(v);
  return std::string(static_cast<std::size_t>(width) - s.size(), '0') + s;
}

int refine(const MolGraph& g, std::vector<int>& rank) {
  const int n = g.atom_count();
  while (true) {
    std::vector<std::string> keys(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      std::string k = pad_num(rank[static_cast<std::size_t>(i)]);
      std::vector<std::string> nb;
      for (int j : g.neighbors(i))
        nb.push_back(pad_num(static_cast<int>(g.order(i, j) * 2.0f)) + ":" +
                     pad_num(rank[static_cast<std::size_t>(j)]));
      std::sort(nb.begin(), nb.end());
      for (auto& s : nb) k += "|" + s;
      keys[static_cast<std::size_t>(i)] = std::move(k);
    }
    std::vector<int> next = dense_ranks(keys);
    int cells = *std::max_element(next.begin(), next.end()) + 1;
    if (next == rank) return cells;
    rank = std::move(next);
  }
}

}  // namespace

std::vector<int> canonical_ranks(const MolGraph& g) {
  const int n = g.atom_count();
  std::vector<std::string> keys(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const AtomRecord& a = g.atom(i);
    keys[static_cast<std::size_t>(i)] =
        a.element + "|" + pad_num(g.degree(i)) + "|" +
        pad_num(a.charge + 6) + "|" + (a.aromatic ? "1" : "0") + "|" +
        pad_num(static_cast<int>(g.valence_sum(i) * 2.0f));
  }
  std::vector<int> rank = dense_ranks(keys);
  int cells = refine(g, rank);
  while (cells < n) {
    // Bump one member of the lowest tied cell; members of a stable cell are
    // interchangeable for the molecule classes handled here.
    int target_rank = -1, chosen = -1;
    std::vector<int> count(static_cast<std::size_t>(n), 0);
    for (int r : rank) ++count[static_cast<std::size_t>(r)];
    for (int i = 0; i < n; ++i) {
      int r = rank[static_cast<std::size_t>(i)];
      if (count[static_cast<std::size_t>(r)] > 1 &&
          (target_rank < 0 || r < target_rank)) {
        target_rank = r;
        chosen = i;
      }
    }
    for (int i = 0; i < n; ++i)
      rank[static_cast<std::size_t>(i)] =
          rank[static_cast<std::size_t>(i)] * 2 +
          (i == chosen ? 0 : 1);
    std::vector<std::string> rk(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
      rk[static_cast<std::size_t>(i)] =
          pad_num(rank[static_cast<std::size_t>(i)], 9);
    rank = dense_ranks(rk);
    cells = refine(g, rank);
  }
  return rank;
}

namespace {

struct Writer {
  const MolGraph& g;
  bool keep_maps;
  std::vector<int> rank;
  std::vector<bool> visited;
  std::vector<std::vector<std::pair<int, int>>> ring_marks;  // (number, other)
  std::map<std::pair<int, int>, float> ring_bond;
  int next_ring = 1;
  std::vector<int> order;

  explicit Writer(const MolGraph& graph, bool maps)
      : g(graph),
        keep_maps(maps),
        rank(canonical_ranks(graph)),
        visited(static_cast<std::size_t>(graph.atom_count()), false),
        ring_marks(static_cast<std::size_t>(graph.atom_count())) {}

  std::vector<int> sorted_neighbors(int i) const {
    std::vector<int> nb = g.neighbors(i);
    std::sort(nb.begin(), nb.end(), [&](int a, int b) {
      return rank[static_cast<std::size_t>(a)] <
             rank[static_cast<std::size_t>(b)];
    });
    return nb;
  }

  // Spanning DFS marking ring-closure (back) edges.
  void find_rings(int start) {
    std::vector<bool> seen(static_cast<std::size_t>(g.atom_count()), false);
    std::vector<int> parent(static_cast<std::size_t>(g.atom_count()), -1);
    std::set<std::pair<int, int>> tree_edges;
    struct Frame {
      int atom;
      std::vector<int> nb;
      std::size_t next = 0;
    };
    std::vector<Frame> frames;
    seen[static_cast<std::size_t>(start)] = true;
    frames.push_back({start, sorted_neighbors(start)});
    while (!frames.empty()) {
      Frame& f = frames.back();
      if (f.next >= f.nb.size()) {
        frames.pop_back();
        continue;
      }
      int j = f.nb[f.next++];
      if (!seen[static_cast<std::size_t>(j)]) {
        seen[static_cast<std::size_t>(j)] = true;
        parent[static_cast<std::size_t>(j)] = f.atom;
        tree_edges.insert({std::min(f.atom, j), std::max(f.atom, j)});
        frames.push_back({j, sorted_neighbors(j)});
      } else if (parent[static_cast<std::size_t>(f.atom)] != j) {
        auto key = std::make_pair(std::min(f.atom, j), std::max(f.atom, j));
        if (!tree_edges.count(key) && !ring_bond.count(key)) {
          int number = next_ring++;
          ring_bond[key] = g.order(f.atom, j);
          ring_marks[static_cast<std::size_t>(f.atom)].push_back({number, j});
          ring_marks[static_cast<std::size_t>(j)].push_back({number, f.atom});
        }
      }
    }
  }

  std::string bond_symbol(int i, int j) const {
    float o = g.order(i, j);
    bool both_arom = g.atom(i).aromatic && g.atom(j).aromatic;
    if (o == 1.0f) return both_arom ? "-" : "";
    if (o == 1.5f) return both_arom ? "" : ":";
    if (o == 2.0f) return "=";
    if (o == 3.0f) return "#";
    throw ChemError("unwritable bond order " + std::to_string(o));
  }

  std::string atom_token(int i) const {
    const AtomRecord& a = g.atom(i);
    std::string sym = a.element;
    if (a.aromatic) {
      if (!aromatic_symbol_ok(sym))
        throw ChemError("aromatic flag on unwritable element " + sym);
      for (auto& ch : sym) ch = static_cast<char>(std::tolower(ch));
    }
    bool organic = is_organic_subset(a.element);
    bool need_bracket =
        !organic || a.charge != 0 || (keep_maps && a.map != 0);
    if (!need_bracket) return sym;
    std::string t = "[" + sym;
    if (a.charge != 0) {
      t += a.charge > 0 ? "+" : "-";
      int mag = std::abs(a.charge);
      if (mag > 1) t += std::to_string(mag);
    }
    if (keep_maps && a.map != 0) t += ":" + std::to_string(a.map);
    t += "]";
    return t;
  }

  std::string ring_token(int atom, int number, int other) const {
    std::string sym = bond_symbol(atom, other);
    std::string num = number < 10 ? std::to_string(number)
                                  : "%" + std::to_string(number);
    return sym + num;
  }

  bool ring_partner(int i, int j) const {
    return ring_bond.count({std::min(i, j), std::max(i, j)}) > 0;
  }

  // Removing ring edges leaves a spanning tree, so plain recursion works;
  // molecule sizes keep the depth harmless.
  std::string emit_atom(int i, int from) {
    visited[static_cast<std::size_t>(i)] = true;
    order.push_back(i);
    std::string s = from >= 0 ? bond_symbol(from, i) : std::string();
    s += atom_token(i);
    for (auto [num, other] : ring_marks[static_cast<std::size_t>(i)])
      s += ring_token(i, num, other);
    std::vector<std::string> subs;
    for (int j : sorted_neighbors(i))
      if (!visited[static_cast<std::size_t>(j)] && !ring_partner(i, j))
        subs.push_back(emit_atom(j, i));
    for (std::size_t k = 0; k + 1 < subs.size(); ++k)
      s += "(" + subs[k] + ")";
    if (!subs.empty()) s += subs.back();
    return s;
  }

  std::string emit(int start) {
    find_rings(start);
    return emit_atom(start, -1);
  }
};

}  // namespace

WriteResult write_smiles_ordered(const MolGraph& g, bool keep_maps) {
  if (g.atom_count() == 0) throw ChemError("cannot write empty graph");
  // Each component is emitted separately; component strings are sorted for
  // a canonical multi-component form.
  std::vector<std::vector<int>> comps = g.components();
  std::vector<std::pair<std::string, std::vector<int>>> parts;
  for (const auto& comp : comps) {
    MolGraph sub = g.induced(comp);
    Writer w(sub, keep_maps);
    int start = 0;
    for (int i = 1; i < sub.atom_count(); ++i)
      if (w.rank[static_cast<std::size_t>(i)] <
          w.rank[static_cast<std::size_t>(start)])
        start = i;
    std::string s = w.emit(start);
    std::vector<int> ord;
    for (int local : w.order) ord.push_back(comp[static_cast<std::size_t>(local)]);
    parts.emplace_back(std::move(s), std::move(ord));
  }
  std::sort(parts.begin(), parts.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  WriteResult res;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    if (k > 0) res.smiles += ".";
    res.smiles += parts[k].first;
    for (int i : parts[k].second) res.order.push_back(i);
  }
  return res;
}

}  // namespace lrxf::chem
