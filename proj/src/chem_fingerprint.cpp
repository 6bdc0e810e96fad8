#include "lrxf/chem/fingerprint.hpp"

#include <algorithm>
#include <string>

#include "lrxf/rng.hpp"

namespace lrxf::chem {

namespace {

std::uint64_t hash_bytes(const std::string& s) { return rng::fnv1a(s); }

void append_u64(std::string& s, std::uint64_t v) {
  for (int k = 0; k < 8; ++k)
    s.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

}  // namespace

Fingerprint fingerprint(const MolGraph& m, int radius, int width) {
  if (radius < 0) throw ChemError("fingerprint radius must be >= 0");
  Fingerprint fp(width);
  const int n = m.atom_count();

  std::vector<std::uint64_t> inv(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const AtomRecord& a = m.atom(i);
    std::string key = a.element;
    key += '|';
    key += std::to_string(m.degree(i));
    key += '|';
    key += std::to_string(a.charge);
    key += '|';
    key += a.aromatic ? '1' : '0';
    inv[static_cast<std::size_t>(i)] = hash_bytes(key);
  }
  for (std::uint64_t h : inv)
    fp.set(static_cast<int>(h % static_cast<std::uint64_t>(width)));

  for (int round = 1; round <= radius; ++round) {
    std::vector<std::uint64_t> next(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      std::vector<std::pair<int, std::uint64_t>> nb;
      for (int j : m.neighbors(i))
        nb.emplace_back(static_cast<int>(m.order(i, j) * 2.0f),
                        inv[static_cast<std::size_t>(j)]);
      std::sort(nb.begin(), nb.end());
      std::string key;
      append_u64(key, inv[static_cast<std::size_t>(i)]);
      for (auto [ord, h] : nb) {
        key.push_back(static_cast<char>(ord));
        append_u64(key, h);
      }
      next[static_cast<std::size_t>(i)] = hash_bytes(key);
    }
    inv = std::move(next);
    for (std::uint64_t h : inv)
      fp.set(static_cast<int>(h % static_cast<std::uint64_t>(width)));
  }
  return fp;
}

}  // namespace lrxf::chem
