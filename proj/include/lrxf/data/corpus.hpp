#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lrxf/chem/reaction.hpp"

namespace lrxf::data {

// Train/valid/test splits with disjoint reactant scaffolds (by canonical
// string; membership is a pure function of the scaffold).
struct Corpus {
  std::vector<chem::ReactionRecord> train;
  std::vector<chem::ReactionRecord> valid;
  std::vector<chem::ReactionRecord> test;
};

void save_corpus(const Corpus& c, const std::string& dir);
Corpus load_corpus(const std::string& dir);

std::vector<chem::ReactionRecord> load_records(const std::string& path);
void save_records(const std::vector<chem::ReactionRecord>& records,
                  const std::string& path);

// FNV-1a over the serialized records of all splits, train then valid then
// test; stable across runs for identical corpora.
std::uint64_t corpus_hash(const Corpus& c);

// Reaction-SMILES ingestion: parse, split roles, re-index, valence-check.
// Lines outside the subset are skipped and counted by reason.
struct IngestResult {
  std::vector<chem::ReactionRecord> records;
  std::map<std::string, long long> rejected;
  long long lines = 0;
};

IngestResult ingest_uspto(const std::string& path, long long limit = -1);

}  // namespace lrxf::data
