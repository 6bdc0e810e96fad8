#include "lrxf/data/corpus.hpp"

#include <filesystem>
#include <fstream>

#include "lrxf/chem/smiles.hpp"
#include "lrxf/rng.hpp"

namespace lrxf::data {

void save_records(const std::vector<chem::ReactionRecord>& records,
                  const std::string& path) {
  std::ofstream os(path);
  if (!os) throw chem::ChemError("cannot write " + path);
  for (const auto& r : records) os << chem::record_to_json(r) << '\n';
}

std::vector<chem::ReactionRecord> load_records(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw chem::ChemError("cannot read " + path);
  std::vector<chem::ReactionRecord> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    out.push_back(chem::record_from_json(line));
  }
  return out;
}

void save_corpus(const Corpus& c, const std::string& dir) {
  std::filesystem::create_directories(dir);
  save_records(c.train, dir + "/train.jsonl");
  save_records(c.valid, dir + "/valid.jsonl");
  save_records(c.test, dir + "/test.jsonl");
}

Corpus load_corpus(const std::string& dir) {
  Corpus c;
  c.train = load_records(dir + "/train.jsonl");
  c.valid = load_records(dir + "/valid.jsonl");
  c.test = load_records(dir + "/test.jsonl");
  return c;
}

std::uint64_t corpus_hash(const Corpus& c) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto* split : {&c.train, &c.valid, &c.test})
    for (const auto& r : *split) h = rng::fnv1a(chem::record_to_json(r), h);
  return h;
}

IngestResult ingest_uspto(const std::string& path, long long limit) {
  std::ifstream is(path);
  if (!is) throw chem::ChemError("cannot read reaction file: " + path);
  IngestResult res;
  std::string line;
  long long n = 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (limit >= 0 && n >= limit) break;
    ++n;
    ++res.lines;
    try {
      chem::ReactionLine parsed = chem::parse_reaction_line(line);
      if (parsed.target.size() != 1) {
        // multiple product molecules stay one graph via component merge on
        // the mapped side; concatenate them
        std::vector<chem::AtomRecord> atoms;
        for (const auto& t : parsed.target)
          for (int i = 0; i < t.atom_count(); ++i) atoms.push_back(t.atom(i));
        chem::MolGraph merged(std::move(atoms));
        int base = 0;
        for (const auto& t : parsed.target) {
          for (int i = 0; i < t.atom_count(); ++i)
            for (int j = i + 1; j < t.atom_count(); ++j)
              if (t.order(i, j) != 0.0f)
                merged.set_order(base + i, base + j, t.order(i, j));
          base += t.atom_count();
        }
        parsed.target = {std::move(merged)};
      }
      chem::ReactionRecord rec = chem::make_record(parsed.source,
                                                   parsed.target[0]);
      rec.id = "line" + std::to_string(res.lines);
      res.records.push_back(std::move(rec));
    } catch (const chem::AtomConservationError&) {
      ++res.rejected["atom_conservation"];
    } catch (const chem::SmilesError& e) {
      std::string what = e.what();
      if (what.find("unsupported feature") != std::string::npos)
        ++res.rejected["unsupported_feature"];
      else
        ++res.rejected["syntax_error"];
    } catch (const chem::ChemError& e) {
      std::string what = e.what();
      if (what.find("valence") != std::string::npos)
        ++res.rejected["valence_violation"];
      else if (what.find("no atom maps") != std::string::npos)
        ++res.rejected["missing_maps"];
      else
        ++res.rejected["other"];
    }
  }
  return res;
}

}  // namespace lrxf::data
