#include <algorithm>
#include <cmath>
#include <set>

#include "dfnet/corpus.hpp"
#include "dfnet/rng.hpp"

// Synthetic multi-domain QA corpus. Each domain draws its relation,
// object, and subject inventories partly from pools shared across all
// domains ("com_*" tokens) and partly from domain-private pools; the
// overlap fraction controls the split. Dialogues ask two KB questions
// using fixed templates, so the only cross-domain lexical overlap at
// overlap 0 is the handful of template function words.

namespace dfnet {

namespace {

std::vector<std::string> inventory(const std::string& domain,
                                   const char* kind, int total,
                                   double overlap) {
  int shared = static_cast<int>(
      std::ceil(overlap * static_cast<double>(total)));
  shared = std::min(shared, total);
  std::vector<std::string> out;
  out.reserve(static_cast<std::size_t>(total));
  for (int i = 0; i < shared; ++i) {
    out.push_back("com_" + std::string(kind) + "_" + std::to_string(i));
  }
  for (int i = shared; i < total; ++i) {
    out.push_back(domain + "_" + std::string(kind) + "_" + std::to_string(i));
  }
  return out;
}

template <typename T>
const T& pick(Rng& rng, const std::vector<T>& xs) {
  return xs[rng.uniform_int(xs.size())];
}

}  // namespace

Corpus make_toy_corpus(const ToySpec& spec) {
  if (spec.domains.empty()) throw UsageError("toy corpus: no domains given");
  if (spec.dialogues_per_domain <= 0) {
    throw UsageError("toy corpus: dialogues_per_domain must be positive");
  }
  if (spec.overlap < 0.0 || spec.overlap > 1.0) {
    throw UsageError("toy corpus: overlap must lie in [0, 1]");
  }
  if (spec.kb_entities <= 0 || spec.relations <= 0 || spec.objects <= 0 ||
      spec.subjects < spec.kb_entities) {
    throw UsageError("toy corpus: inventory sizes must be positive and "
                     "subjects >= kb_entities");
  }
  {
    std::set<std::string> uniq(spec.domains.begin(), spec.domains.end());
    if (uniq.size() != spec.domains.size()) {
      throw UsageError("toy corpus: duplicate domain name");
    }
  }

  Corpus corpus;
  corpus.domains = spec.domains;
  Rng rng(spec.seed);
  for (const auto& domain : spec.domains) {
    auto relations = inventory(domain, "rel", spec.relations, spec.overlap);
    auto objects = inventory(domain, "obj", spec.objects, spec.overlap);
    auto subjects = inventory(domain, "subj", spec.subjects, spec.overlap);

    for (int n = 0; n < spec.dialogues_per_domain; ++n) {
      Dialogue d;
      d.domain = domain;

      std::vector<std::string> chosen = subjects;
      rng.shuffle(chosen);
      chosen.resize(static_cast<std::size_t>(spec.kb_entities));
      for (const auto& subj : chosen) {
        for (const auto& rel : relations) {
          d.kb.push_back({subj, rel, pick(rng, objects)});
        }
      }

      for (int t = 0; t < 2; ++t) {
        const KBTriple& asked =
            d.kb[rng.uniform_int(d.kb.size())];
        Turn turn;
        if (rng.bernoulli(0.5)) {
          turn.user = {"what", "is", "the", asked.relation, "of",
                       asked.subject};
        } else {
          turn.user = {"tell", "me", "the", asked.relation, "for",
                       asked.subject};
        }
        turn.system = {"the", asked.relation, "of", asked.subject, "is",
                       asked.object};
        d.turns.push_back(std::move(turn));
      }

      for (auto& turn : d.turns) {
        std::set<std::string> history_entities;
        turn.sketch = delexicalize(turn.system, d.kb, history_entities);
        std::set<std::string> objs;
        for (const auto& t : d.kb) objs.insert(t.object);
        std::set<std::string> found;
        for (const auto& w : turn.system) {
          if (objs.count(w)) found.insert(w);
        }
        turn.gold_entities.assign(found.begin(), found.end());
      }
      corpus.dialogues.push_back(std::move(d));
    }
  }
  return corpus;
}

}  // namespace dfnet
