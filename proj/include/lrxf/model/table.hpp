#pragma once

#include <algorithm>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "lrxf/chem/reaction.hpp"
#include "lrxf/chem/smiles.hpp"

namespace lrxf::model {

// Top-K most frequent conditional agents by canonical string, descending
// count, ties broken lexicographically.
class FrequencyTable {
 public:
  FrequencyTable() = default;

  template <class RecordRange>
  static FrequencyTable build(const RecordRange& corpus, int k) {
    std::map<std::string, long long> counts;
    bool any = false;
    for (const chem::ReactionRecord& r : corpus) {
      any = true;
      for (const chem::MolGraph& a : r.agents)
        ++counts[chem::canonical_smiles(a)];
    }
    if (!any) throw chem::ChemError("frequency table needs a nonempty corpus");
    std::vector<std::pair<long long, std::string>> entries;
    for (auto& [smiles, count] : counts) entries.emplace_back(count, smiles);
    std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    if (static_cast<int>(entries.size()) > k) entries.resize(k);
    FrequencyTable t;
    t.entries_ = std::move(entries);
    t.index_rebuild();
    return t;
  }

  int size() const { return static_cast<int>(entries_.size()); }

  // Rank of a canonical agent string, or -1.
  int rank_of(const std::string& canonical) const {
    auto it = rank_.find(canonical);
    return it == rank_.end() ? -1 : it->second;
  }

  const std::vector<std::pair<long long, std::string>>& entries() const {
    return entries_;
  }

  void save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw chem::ChemError("cannot write frequency table: " + path);
    for (const auto& [count, smiles] : entries_)
      os << count << '\t' << smiles << '\n';
  }

  static FrequencyTable load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw chem::ChemError("cannot read frequency table: " + path);
    FrequencyTable t;
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos)
        throw chem::ChemError("malformed frequency table line: " + line);
      t.entries_.emplace_back(std::stoll(line.substr(0, tab)),
                              line.substr(tab + 1));
    }
    t.index_rebuild();
    return t;
  }

 private:
  void index_rebuild() {
    rank_.clear();
    for (std::size_t i = 0; i < entries_.size(); ++i)
      rank_[entries_[i].second] = static_cast<int>(i);
  }

  std::vector<std::pair<long long, std::string>> entries_;
  std::map<std::string, int> rank_;
};

}  // namespace lrxf::model
