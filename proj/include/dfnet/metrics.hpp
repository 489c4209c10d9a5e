#ifndef DFNET_METRICS_HPP
#define DFNET_METRICS_HPP

#include <map>
#include <set>
#include <string>
#include <vector>

#include "dfnet/corpus.hpp"

namespace dfnet {

struct MetricsCounts {
  long tp = 0;
  long fp = 0;
  long fn = 0;
};

struct MetricsReport {
  double bleu = 0.0;
  double micro_f1 = 0.0;
  std::map<std::string, double> per_domain_f1;
  std::map<std::string, MetricsCounts> per_domain_counts;
  MetricsCounts counts;
};

// Corpus-level BLEU-4: geometric mean of modified n-gram precisions with a
// 1e-9 numerator floor, times the brevity penalty.
double corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                   const std::vector<std::vector<std::string>>& references);

// Micro entity F1 under set semantics. The predicted set of a response is
// its tokens intersected with the lexicon; `domains` tags each pair for the
// per-domain breakdown and must match `responses` in length.
MetricsReport entity_f1(
    const std::vector<std::vector<std::string>>& responses,
    const std::vector<std::vector<std::string>>& gold_entities,
    const std::set<std::string>& lexicon,
    const std::vector<std::string>& domains);

// Union of KB objects across the corpus, the entity lexicon for scoring.
std::set<std::string> entity_lexicon(const Corpus& corpus);

double f1_from_counts(const MetricsCounts& c);

}  // namespace dfnet

#endif  // DFNET_METRICS_HPP
