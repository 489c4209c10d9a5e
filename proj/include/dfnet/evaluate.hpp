#ifndef DFNET_EVALUATE_HPP
#define DFNET_EVALUATE_HPP

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "dfnet/metrics.hpp"
#include "dfnet/model.hpp"

namespace dfnet {

// Greedy-decodes every turn of `test` conditioned on its gold history and
// scores the surface outputs. Deterministic: no sampling anywhere.
// Domain lists must match exactly: expert indices are positional.
template <typename S>
MetricsReport evaluate(DfNet<S>& model, const Corpus& test) {
  if (test.domains != model.domains()) {
    throw DataError("evaluate: corpus domains differ from model domains");
  }
  std::vector<std::vector<std::string>> hyps;
  std::vector<std::vector<std::string>> refs;
  std::vector<std::vector<std::string>> golds;
  std::vector<std::string> domains;
  for (std::size_t di = 0; di < test.dialogues.size(); ++di) {
    const Dialogue& d = test.dialogues[di];
    for (std::size_t ti = 0; ti < d.turns.size(); ++ti) {
      TurnExample ex = prepare_turn(test, di, ti, model.vocab());
      auto out = model.greedy_decode(ex, model.config().max_decode_len);
      hyps.push_back(out.surface);
      refs.push_back(d.turns[ti].system);
      golds.push_back(d.turns[ti].gold_entities);
      domains.push_back(d.domain);
    }
  }
  if (hyps.empty()) throw UsageError("evaluate: corpus has no turns");
  MetricsReport report =
      entity_f1(hyps, golds, entity_lexicon(test), domains);
  report.bleu = corpus_bleu(hyps, refs);
  return report;
}

struct GateTraceRow {
  std::string target_domain;
  std::string example_id;
  long token_index = 0;
  std::vector<double> alpha;
};

struct GateTrace {
  std::vector<std::string> expert_domains;  // alpha column order
  std::vector<GateTraceRow> rows;
  std::map<std::string, std::vector<double>> mean_alpha;  // by target domain
};

// Decoder gate activations over a seeded sample of `n_per_domain` turns per
// domain, plus the per-target-domain mean vector.
template <typename S>
GateTrace export_gates(DfNet<S>& model, const Corpus& corpus,
                       int n_per_domain, std::uint64_t seed) {
  if (!model.dec_gated()) {
    throw UsageError("export_gates: model has no decoder gate");
  }
  if (n_per_domain < 1) {
    throw UsageError("export_gates: need at least one example per domain");
  }
  if (corpus.domains != model.domains()) {
    throw DataError("export_gates: corpus domains differ from model domains");
  }
  GateTrace trace;
  trace.expert_domains = model.domains();
  std::size_t nd = trace.expert_domains.size();
  Rng rng(seed);
  for (const auto& domain : corpus.domains) {
    std::vector<std::pair<std::size_t, std::size_t>> turns;
    for (std::size_t di = 0; di < corpus.dialogues.size(); ++di) {
      if (corpus.dialogues[di].domain != domain) continue;
      for (std::size_t ti = 0; ti < corpus.dialogues[di].turns.size(); ++ti) {
        turns.push_back({di, ti});
      }
    }
    rng.shuffle(turns);
    if (turns.size() > static_cast<std::size_t>(n_per_domain)) {
      turns.resize(static_cast<std::size_t>(n_per_domain));
    }
    std::vector<double> mean(nd, 0.0);
    long tokens = 0;
    for (const auto& [di, ti] : turns) {
      TurnExample ex = prepare_turn(corpus, di, ti, model.vocab());
      auto out = model.greedy_decode(ex, model.config().max_decode_len);
      std::string id =
          std::to_string(di) + "." + std::to_string(ti);
      for (std::size_t t = 0; t < out.gates.size(); ++t) {
        GateTraceRow row;
        row.target_domain = domain;
        row.example_id = id;
        row.token_index = static_cast<long>(t);
        row.alpha.resize(nd);
        for (std::size_t k = 0; k < nd; ++k) {
          row.alpha[k] = static_cast<double>(
              out.gates[t](static_cast<Index>(k), 0));
          mean[k] += row.alpha[k];
        }
        trace.rows.push_back(std::move(row));
        ++tokens;
      }
    }
    if (tokens > 0) {
      for (auto& v : mean) v /= static_cast<double>(tokens);
    }
    trace.mean_alpha[domain] = mean;
  }
  return trace;
}

// CSV layout: per-token rows first, then one summary row per target domain
// with example_id "mean" and token_index -1.
inline void write_gate_trace(const GateTrace& trace,
                             const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write gate trace: " + path);
  out << "target_domain,example_id,token_index";
  for (const auto& d : trace.expert_domains) out << ",alpha_" << d;
  out << "\n";
  out.precision(17);
  for (const auto& row : trace.rows) {
    out << row.target_domain << "," << row.example_id << ","
        << row.token_index;
    for (double a : row.alpha) out << "," << a;
    out << "\n";
  }
  for (const auto& [domain, mean] : trace.mean_alpha) {
    out << domain << ",mean,-1";
    for (double a : mean) out << "," << a;
    out << "\n";
  }
  if (!out) throw DataError("gate trace write failed: " + path);
}

}  // namespace dfnet

#endif  // DFNET_EVALUATE_HPP
