#pragma once

#include <cstdint>
#include <vector>

#include "lrxf/chem/graph.hpp"

namespace lrxf::chem {

// Fixed-width bit vector produced by iterative circular hashing. Bit i is
// stored little-endian within bytes: byte i/8, bit position i%8.
class Fingerprint {
 public:
  explicit Fingerprint(int width) : width_(width), bytes_(width / 8, 0) {
    if (width <= 0 || (width & (width - 1)) != 0 || width % 8 != 0)
      throw ChemError("fingerprint width must be a power of two >= 8");
  }

  int width() const { return width_; }

  void set(int bit) {
    bytes_[static_cast<std::size_t>(bit / 8)] |=
        static_cast<std::uint8_t>(1u << (bit % 8));
  }

  bool test(int bit) const {
    return (bytes_[static_cast<std::size_t>(bit / 8)] >> (bit % 8)) & 1u;
  }

  int popcount() const {
    int n = 0;
    for (auto b : bytes_) n += __builtin_popcount(b);
    return n;
  }

  const std::vector<std::uint8_t>& bytes() const { return bytes_; }

  bool operator==(const Fingerprint& o) const {
    return width_ == o.width_ && bytes_ == o.bytes_;
  }
  bool operator!=(const Fingerprint& o) const { return !(*this == o); }

  // Bits as a 0/1 float vector, for feeding encoders.
  std::vector<float> to_floats() const {
    std::vector<float> out(static_cast<std::size_t>(width_), 0.0f);
    for (int i = 0; i < width_; ++i)
      if (test(i)) out[static_cast<std::size_t>(i)] = 1.0f;
    return out;
  }

 private:
  int width_;
  std::vector<std::uint8_t> bytes_;
};

// Hashed circular fingerprint: round-0 invariant is (element, degree,
// charge, aromatic); each further round hashes the atom's previous
// invariant with the sorted (bond order, neighbor invariant) list. Every
// round hash of every atom folds into the bit vector modulo width.
// Deterministic and invariant to atom reordering; bit-compatibility with
// external toolkits is not a goal.
Fingerprint fingerprint(const MolGraph& m, int radius = 2, int width = 512);

}  // namespace lrxf::chem
