#include "dfnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dfnet/error.hpp"

namespace dfnet {

namespace {

using NgramCounts = std::map<std::vector<std::string>, long>;

NgramCounts ngram_counts(const std::vector<std::string>& tokens,
                         std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    counts[{tokens.begin() + static_cast<long>(i),
            tokens.begin() + static_cast<long>(i + n)}] += 1;
  }
  return counts;
}

}  // namespace

double corpus_bleu(const std::vector<std::vector<std::string>>& hypotheses,
                   const std::vector<std::vector<std::string>>& references) {
  if (hypotheses.empty() || hypotheses.size() != references.size()) {
    throw UsageError("corpus_bleu: need equally many hypotheses and "
                     "references, at least one pair");
  }
  constexpr double kFloor = 1e-9;
  long hyp_len = 0;
  long ref_len = 0;
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    double matched = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < hypotheses.size(); ++i) {
      auto hyp = ngram_counts(hypotheses[i], n);
      auto ref = ngram_counts(references[i], n);
      for (const auto& [gram, count] : hyp) {
        total += static_cast<double>(count);
        auto it = ref.find(gram);
        if (it != ref.end()) {
          matched += static_cast<double>(std::min(count, it->second));
        }
      }
    }
    double p = std::max(matched, kFloor) / std::max(total, 1.0);
    log_sum += std::log(p);
  }
  for (std::size_t i = 0; i < hypotheses.size(); ++i) {
    hyp_len += static_cast<long>(hypotheses[i].size());
    ref_len += static_cast<long>(references[i].size());
  }
  if (hyp_len == 0) return 0.0;
  double bp = hyp_len < ref_len
                  ? std::exp(1.0 - static_cast<double>(ref_len) /
                                       static_cast<double>(hyp_len))
                  : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

double f1_from_counts(const MetricsCounts& c) {
  long denom = 2 * c.tp + c.fp + c.fn;
  if (denom == 0) return 1.0;
  return 2.0 * static_cast<double>(c.tp) / static_cast<double>(denom);
}

MetricsReport entity_f1(
    const std::vector<std::vector<std::string>>& responses,
    const std::vector<std::vector<std::string>>& gold_entities,
    const std::set<std::string>& lexicon,
    const std::vector<std::string>& domains) {
  if (responses.size() != gold_entities.size() ||
      responses.size() != domains.size()) {
    throw UsageError("entity_f1: responses, gold lists, and domains must "
                     "align");
  }
  MetricsReport report;
  for (std::size_t i = 0; i < responses.size(); ++i) {
    std::set<std::string> predicted;
    for (const auto& tok : responses[i]) {
      if (lexicon.count(tok)) predicted.insert(tok);
    }
    std::set<std::string> gold(gold_entities[i].begin(),
                               gold_entities[i].end());
    MetricsCounts& dc = report.per_domain_counts[domains[i]];
    for (const auto& e : predicted) {
      (gold.count(e) ? dc.tp : dc.fp) += 1;
    }
    for (const auto& e : gold) {
      if (!predicted.count(e)) dc.fn += 1;
    }
  }
  for (const auto& [domain, dc] : report.per_domain_counts) {
    report.counts.tp += dc.tp;
    report.counts.fp += dc.fp;
    report.counts.fn += dc.fn;
    report.per_domain_f1[domain] = f1_from_counts(dc);
  }
  report.micro_f1 = f1_from_counts(report.counts);
  return report;
}

std::set<std::string> entity_lexicon(const Corpus& corpus) {
  std::set<std::string> lexicon;
  for (const auto& d : corpus.dialogues) {
    for (const auto& t : d.kb) lexicon.insert(t.object);
  }
  return lexicon;
}

}  // namespace dfnet
