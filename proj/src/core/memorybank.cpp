#include "essential/memorybank.hpp"

#include "essential/error.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>

namespace essential {

namespace {

int quota_for(const std::vector<int>& quotas, ClassId c) {
  require(c >= 0 && static_cast<std::size_t>(c) < quotas.size(), ErrorKind::Input,
          "class " + std::to_string(c) + " has no quota");
  return quotas[static_cast<std::size_t>(c)];
}

ClassId class_for(const ClassOf& class_of, SampleId id) {
  auto it = class_of.find(id);
  require(it != class_of.end(), ErrorKind::Input, "sample " + std::to_string(id) + " has no class");
  return it->second;
}

// Highest score first, ties by ascending id.
bool prefer(const SelectedExemplar& a, const SelectedExemplar& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.id < b.id;
}

// Groups scored ids by class and keeps the best `quota` per class.
Selection take_top(SelectorKind kind, const std::map<SampleId, double>& scores, const ClassOf& class_of,
                   const std::vector<int>& quotas) {
  Selection sel;
  sel.selector = kind;
  std::map<ClassId, std::vector<SelectedExemplar>> groups;
  for (const auto& [id, s] : scores) groups[class_for(class_of, id)].push_back({id, s});
  for (auto& [c, items] : groups) {
    const int q = quota_for(quotas, c);
    std::sort(items.begin(), items.end(), prefer);
    if (q > static_cast<int>(items.size()))
      sel.warnings.push_back("class " + std::to_string(c) + ": quota " + std::to_string(q) + " exceeds population " +
                             std::to_string(items.size()) + "; taking all");
    items.resize(std::min<std::size_t>(items.size(), static_cast<std::size_t>(std::max(0, q))));
    sel.per_class[c] = std::move(items);
  }
  return sel;
}

std::string selector_token(SelectorKind k) { return to_string(k); }

}  // namespace

std::size_t MemoryBank::total() const {
  std::size_t n = 0;
  for (const auto& [c, ids] : entries) n += ids.size();
  return n;
}

std::vector<SampleId> MemoryBank::all_ids() const {
  std::vector<SampleId> out;
  for (const auto& [c, ids] : entries) out.insert(out.end(), ids.begin(), ids.end());
  return out;
}

std::vector<int> quota(int budget, int num_seen_classes) {
  require(num_seen_classes >= 1, ErrorKind::Input, "quota: need at least one seen class");
  require(budget >= 0, ErrorKind::Input, "quota: negative budget");
  std::vector<int> q(static_cast<std::size_t>(num_seen_classes), budget / num_seen_classes);
  const int rem = budget % num_seen_classes;
  for (int c = 0; c < rem; ++c) ++q[static_cast<std::size_t>(c)];
  return q;
}

Selection select_uta(const std::map<SampleId, double>& scores, const ClassOf& class_of,
                     const std::vector<int>& quotas) {
  return take_top(SelectorKind::Uta, scores, class_of, quotas);
}

Selection select_random(const std::vector<SampleId>& ids, const ClassOf& class_of, const std::vector<int>& quotas,
                        std::uint64_t seed) {
  std::map<ClassId, std::vector<SampleId>> groups;
  for (SampleId id : ids) groups[class_for(class_of, id)].push_back(id);
  std::mt19937_64 rng(seed);
  Selection sel;
  sel.selector = SelectorKind::Random;
  for (auto& [c, members] : groups) {
    std::sort(members.begin(), members.end());
    members.erase(std::unique(members.begin(), members.end()), members.end());
    const int q = quota_for(quotas, c);
    if (q > static_cast<int>(members.size()))
      sel.warnings.push_back("class " + std::to_string(c) + ": quota exceeds population; taking all");
    const std::size_t take = std::min<std::size_t>(members.size(), static_cast<std::size_t>(std::max(0, q)));
    // Partial Fisher-Yates: the first `take` slots are a uniform sample without replacement.
    for (std::size_t i = 0; i < take; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, members.size() - 1);
      std::swap(members[i], members[pick(rng)]);
    }
    auto& out = sel.per_class[c];
    for (std::size_t i = 0; i < take; ++i)
      out.push_back({members[i], static_cast<double>(take - i)});
  }
  return sel;
}

Selection select_nme(const std::map<SampleId, std::vector<double>>& embeddings, const ClassOf& class_of,
                     const std::vector<int>& quotas) {
  Selection sel;
  sel.selector = SelectorKind::Nme;
  std::map<ClassId, std::vector<SampleId>> groups;
  std::size_t dim = 0;
  for (const auto& [id, e] : embeddings) {
    if (dim == 0) dim = e.size();
    require(e.size() == dim && dim > 0, ErrorKind::Input, "select_nme: embeddings must share one dimension");
    groups[class_for(class_of, id)].push_back(id);
  }
  for (std::size_t c = 0; c < quotas.size(); ++c)
    if (quotas[c] > 0 && !groups.count(static_cast<ClassId>(c)) && !embeddings.empty())
      sel.warnings.push_back("class " + std::to_string(c) + ": no samples; skipped");

  auto cosine_distance = [](const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      dot += a[i] * b[i];
      na += a[i] * a[i];
      nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 1.0;
    return 1.0 - dot / std::sqrt(na * nb);
  };

  for (auto& [c, members] : groups) {
    const int q = quota_for(quotas, c);
    if (q > static_cast<int>(members.size()))
      sel.warnings.push_back("class " + std::to_string(c) + ": quota exceeds population; taking all");
    const std::size_t take = std::min<std::size_t>(members.size(), static_cast<std::size_t>(std::max(0, q)));
    std::vector<double> mean(dim, 0.0);
    for (SampleId id : members) {
      const auto& e = embeddings.at(id);
      for (std::size_t i = 0; i < dim; ++i) mean[i] += e[i];
    }
    for (double& v : mean) v /= static_cast<double>(members.size());

    std::vector<double> running(dim, 0.0);
    std::vector<bool> used(members.size(), false);
    auto& out = sel.per_class[c];
    for (std::size_t k = 0; k < take; ++k) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_i = members.size();
      for (std::size_t i = 0; i < members.size(); ++i) {  // members ascending, strict < keeps lowest id on ties
        if (used[i]) continue;
        const auto& e = embeddings.at(members[i]);
        std::vector<double> cand(dim);
        for (std::size_t j = 0; j < dim; ++j) cand[j] = (running[j] + e[j]) / static_cast<double>(k + 1);
        const double d = cosine_distance(cand, mean);
        if (d < best) {
          best = d;
          best_i = i;
        }
      }
      used[best_i] = true;
      const auto& e = embeddings.at(members[best_i]);
      for (std::size_t j = 0; j < dim; ++j) running[j] += e[j];
      out.push_back({members[best_i], static_cast<double>(take - k)});
    }
  }
  return sel;
}

Selection select_pool(const std::map<SampleId, ProbVector>& probs, const ClassOf& class_of,
                      const std::vector<int>& quotas) {
  std::map<SampleId, double> scores;
  for (const auto& [id, p] : probs) {
    require(p.size() >= 2, ErrorKind::Input, "select_pool: margin needs at least 2 classes");
    check_probability_vector(p);
    ProbVector sorted = p;
    std::partial_sort(sorted.begin(), sorted.begin() + 2, sorted.end(), std::greater<>());
    scores[id] = 1.0 - (sorted[0] - sorted[1]);  // smallest margin first
  }
  return take_top(SelectorKind::Pool, scores, class_of, quotas);
}

double vote_entropy(const std::vector<int>& votes) {
  require(!votes.empty(), ErrorKind::Input, "vote_entropy: no votes");
  std::map<int, int> counts;
  for (int v : votes) ++counts[v];
  double h = 0.0;
  const double n = static_cast<double>(votes.size());
  for (const auto& [cls, k] : counts) {
    const double p = k / n;
    h -= p * std::log(p);
  }
  return std::max(0.0, h);
}

Selection select_committee(const std::vector<std::map<SampleId, ProbVector>>& member_probs,
                           const ClassOf& class_of, const std::vector<int>& quotas) {
  require(member_probs.size() >= 2, ErrorKind::Input, "select_committee: needs at least 2 members");
  const auto& first = member_probs.front();
  for (const auto& m : member_probs) {
    require(m.size() == first.size(), ErrorKind::Input, "select_committee: members cover different samples");
    for (const auto& [id, p] : first)
      require(m.count(id) != 0, ErrorKind::Input, "select_committee: members cover different samples");
  }
  std::map<SampleId, double> scores;
  for (const auto& [id, unused] : first) {
    std::vector<int> votes;
    for (const auto& m : member_probs) {
      const auto& p = m.at(id);
      votes.push_back(static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin()));
    }
    scores[id] = vote_entropy(votes);
  }
  return take_top(SelectorKind::Committee, scores, class_of, quotas);
}

MemoryBank update_bank(const MemoryBank& bank, const Selection& selection, int num_seen_classes) {
  const std::vector<int> q = quota(bank.budget, num_seen_classes);
  MemoryBank next;
  next.budget = bank.budget;

  for (const auto& [c, ids] : bank.entries) {
    if (selection.per_class.count(c)) continue;
    require(c >= 0 && c < num_seen_classes, ErrorKind::Internal,
            "bank holds class " + std::to_string(c) + " beyond the seen classes");
    std::vector<SelectedExemplar> kept;
    for (SampleId id : ids) kept.push_back({id, bank.provenance.at(id).score});
    std::sort(kept.begin(), kept.end(), prefer);
    kept.resize(std::min<std::size_t>(kept.size(), static_cast<std::size_t>(q[static_cast<std::size_t>(c)])));
    auto& out = next.entries[c];
    for (const auto& e : kept) {
      out.push_back(e.id);
      next.provenance[e.id] = bank.provenance.at(e.id);
    }
  }
  for (const auto& [c, items] : selection.per_class) {
    require(c >= 0 && c < num_seen_classes, ErrorKind::Input,
            "selection covers class " + std::to_string(c) + " beyond the seen classes");
    require(static_cast<int>(items.size()) <= q[static_cast<std::size_t>(c)], ErrorKind::Input,
            "selection for class " + std::to_string(c) + " exceeds its quota");
    auto& out = next.entries[c];
    for (const auto& e : items) {
      out.push_back(e.id);
      next.provenance[e.id] = Provenance{selection.selector, e.score};
    }
  }
  for (auto it = next.entries.begin(); it != next.entries.end();)
    it = it->second.empty() ? next.entries.erase(it) : std::next(it);

  require(next.total() <= static_cast<std::size_t>(next.budget), ErrorKind::Internal,
          "memory bank exceeds its budget");
  require(next.provenance.size() == next.total(), ErrorKind::Internal, "memory bank holds duplicate ids");
  return next;
}

void write_bank_manifest(std::ostream& out, const MemoryBank& bank) {
  out << "class\tsample_id\tselector\tscore\n";
  char buf[32];
  for (const auto& [c, ids] : bank.entries)
    for (SampleId id : ids) {
      const auto& p = bank.provenance.at(id);
      std::snprintf(buf, sizeof buf, "%.17g", p.score);
      out << c << '\t' << id << '\t' << selector_token(p.selector) << '\t' << buf << '\n';
    }
}

MemoryBank read_bank_manifest(std::istream& in, int budget) {
  MemoryBank bank;
  bank.budget = budget;
  std::string line;
  if (!std::getline(in, line) || line.rfind("class\tsample_id", 0) != 0)
    fail(ErrorKind::Format, "bank manifest: missing header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    ClassId c = 0;
    SampleId id = 0;
    std::string selector;
    double score = 0;
    if (!(ls >> c >> id >> selector >> score)) fail(ErrorKind::Format, "bank manifest: bad line '" + line + "'");
    bank.entries[c].push_back(id);
    bank.provenance[id] = Provenance{parse_selector(selector), score};
  }
  return bank;
}

}  // namespace essential
