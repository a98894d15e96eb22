#pragma once

// Fixed-budget exemplar store and the five exemplar selectors.

#include "essential/datamodel.hpp"
#include "essential/trajectory.hpp"

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

namespace essential {

struct Provenance {
  SelectorKind selector = SelectorKind::Uta;
  double score = 0.0;  // higher = preferred by the selector that stored it
};

struct MemoryBank {
  int budget = 0;
  std::map<ClassId, std::vector<SampleId>> entries;
  std::map<SampleId, Provenance> provenance;

  std::size_t total() const;
  bool contains(SampleId id) const { return provenance.count(id) != 0; }
  std::vector<SampleId> all_ids() const;
};

// Per-class counts: floor(budget / n), remainder one each to the lowest classes.
std::vector<int> quota(int budget, int num_seen_classes);
inline std::vector<int> quota(const MemoryBank& bank, int num_seen_classes) {
  return quota(bank.budget, num_seen_classes);
}

struct SelectedExemplar {
  SampleId id = 0;
  double score = 0.0;
};

// class -> chosen exemplars in preference order.
struct Selection {
  SelectorKind selector = SelectorKind::Uta;
  std::map<ClassId, std::vector<SelectedExemplar>> per_class;
  std::vector<std::string> warnings;
};

using ClassOf = std::map<SampleId, ClassId>;

Selection select_uta(const std::map<SampleId, double>& scores, const ClassOf& class_of,
                     const std::vector<int>& quotas);
Selection select_random(const std::vector<SampleId>& ids, const ClassOf& class_of, const std::vector<int>& quotas,
                        std::uint64_t seed);
Selection select_nme(const std::map<SampleId, std::vector<double>>& embeddings, const ClassOf& class_of,
                     const std::vector<int>& quotas);
Selection select_pool(const std::map<SampleId, ProbVector>& probs, const ClassOf& class_of,
                      const std::vector<int>& quotas);
Selection select_committee(const std::vector<std::map<SampleId, ProbVector>>& member_probs,
                           const ClassOf& class_of, const std::vector<int>& quotas);

// Vote entropy of the members' argmax predictions for one sample.
double vote_entropy(const std::vector<int>& votes);

// Shrinks old classes to the new quota keeping their highest stored scores, then
// stores the selection for the classes it covers.
MemoryBank update_bank(const MemoryBank& bank, const Selection& selection, int num_seen_classes);

// Plain-text manifest: `class<TAB>sample_id<TAB>selector<TAB>score`.
void write_bank_manifest(std::ostream& out, const MemoryBank& bank);
MemoryBank read_bank_manifest(std::istream& in, int budget);

}  // namespace essential
