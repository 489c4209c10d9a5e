#ifndef DFNET_TRAIN_HPP
#define DFNET_TRAIN_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <future>
#include <string>
#include <vector>

#include "dfnet/adam.hpp"
#include "dfnet/evaluate.hpp"
#include "dfnet/losses.hpp"
#include "dfnet/model.hpp"

namespace dfnet {

struct TrainConfig {
  ModelConfig model;
  ModelFlags flags;
  LossWeights weights;
  int batch = 16;
  double lr = 0.001;
  int epochs = 300;
  int patience = 10;
  double clip_norm = 10.0;
  std::uint64_t seed = 0;
  std::string precision = "f64";  // consumed by the CLI dispatcher
};

struct EpochStats {
  int epoch = 0;
  LossReport mean;  // per-example average over the epoch
  double val_bleu = 0.0;
  double val_f1 = 0.0;
  double grad_norm = 0.0;  // largest pre-clip batch gradient norm
  bool improved = false;
};

struct TrainResult {
  std::vector<EpochStats> history;
  int best_epoch = -1;
  double best_val_f1 = 0.0;
  bool stopped_by_callback = false;
};

// Returns true to end training after the current epoch. The model is left
// in its current state when the callback stops the run; otherwise the
// best-validation parameters are restored before returning.
using EpochCallback = std::function<bool(const EpochStats&)>;

inline void validate_train_config(const TrainConfig& cfg) {
  if (cfg.batch < 1) throw UsageError("train: batch must be >= 1");
  if (cfg.epochs < 1) throw UsageError("train: epochs must be >= 1");
  if (cfg.patience < 1) throw UsageError("train: patience must be >= 1");
  if (!(cfg.lr > 0.0)) throw UsageError("train: lr must be positive");
  if (!(cfg.clip_norm > 0.0)) {
    throw UsageError("train: clip_norm must be positive");
  }
  const LossWeights& w = cfg.weights;
  for (double g : {w.gamma_global, w.gamma_vocab, w.gamma_local,
                   w.gamma_basic, w.gamma_moe, w.gamma_adv}) {
    if (g < 0.0) throw UsageError("train: loss weights must be >= 0");
  }
}

inline bool corpus_has_turns(const Corpus& corpus) {
  for (const auto& d : corpus.dialogues) {
    if (!d.turns.empty()) return true;
  }
  return false;
}

// Dialogues of one domain, with the full domain list preserved.
inline Corpus domain_subset(const Corpus& corpus, const std::string& domain) {
  Corpus out;
  out.domains = corpus.domains;
  for (const auto& d : corpus.dialogues) {
    if (d.domain == domain) out.dialogues.push_back(d);
  }
  return out;
}

// Minimizes the composite objective with clipped Adam over seeded
// mini-batches; per-example graphs are joined into one batch-mean loss.
// Validation entity F1 picks the best epoch (strict improvement, early
// stop after cfg.patience epochs without one). An empty validation corpus
// falls back to the training corpus. A non-empty checkpoint_path is
// written once, after the final parameter state is settled.
template <typename S>
TrainResult train_model(DfNet<S>& model, const Corpus& train_corpus,
                        const Corpus& val_corpus, const TrainConfig& cfg,
                        const std::string& checkpoint_path = "",
                        const EpochCallback& on_epoch = nullptr) {
  validate_train_config(cfg);
  auto examples = prepare_examples(train_corpus, model.vocab());
  if (examples.empty()) throw UsageError("train: corpus has no turns");
  const Corpus& val_used =
      corpus_has_turns(val_corpus) ? val_corpus : train_corpus;

  auto params = model.manifest();
  AdamState<S> opt;
  opt.reset(params);
  AdamConfig<S> adam;
  adam.lr = static_cast<S>(cfg.lr);

  const auto n_domains = static_cast<Index>(model.domains().size());
  Rng master(cfg.seed);
  std::vector<std::size_t> order(examples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  std::vector<Mat<S>> best_values;
  TrainResult result;
  double best_loss = 0.0;
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng = master.fork(static_cast<std::uint64_t>(epoch));
    rng.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    for (std::size_t begin = 0; begin < order.size();
         begin += static_cast<std::size_t>(cfg.batch)) {
      std::size_t end = std::min(order.size(),
                                 begin + static_cast<std::size_t>(cfg.batch));
      Tape<S> tape;
      Tensor<S> batch_loss;
      {
        TapeScope<S> scope(tape);
        std::vector<Tensor<S>> totals;
        for (std::size_t i = begin; i < end; ++i) {
          const TurnExample& ex = examples[order[i]];
          auto tensors = model.teacher_forced_pass(
              ex, true, rng, cfg.model.teacher_forcing);
          auto loss = turn_loss(tensors, ex, n_domains, cfg.weights);
          stats.mean += loss.report;
          totals.push_back(loss.total);
        }
        batch_loss = scale(add_n(totals), S(1) / S(end - begin));
      }
      if (!std::isfinite(static_cast<double>(batch_loss.item()))) {
        throw NumericError("training diverged: non-finite loss at epoch " +
                           std::to_string(epoch) + ", batch starting at " +
                           std::to_string(begin));
      }
      tape.backward(batch_loss);
      double norm = static_cast<double>(
          clip_grad_norm(params, static_cast<S>(cfg.clip_norm)));
      if (!std::isfinite(norm)) {
        throw NumericError("training diverged: non-finite gradient at epoch " +
                           std::to_string(epoch));
      }
      stats.grad_norm = std::max(stats.grad_norm, norm);
      adam_step(params, opt, adam);
      zero_grads(params);
    }
    stats.mean = stats.mean.scaled(1.0 / double(examples.size()));

    auto val = evaluate(model, val_used);
    stats.val_bleu = val.bleu;
    stats.val_f1 = val.micro_f1;
    // Ties on validation F1 keep the lower-loss parameters; patience
    // counts only strict F1 gains.
    bool gained = result.best_epoch < 0 || stats.val_f1 > result.best_val_f1;
    bool refined = !gained && stats.val_f1 == result.best_val_f1 &&
                   stats.mean.total < best_loss;
    if (gained) {
      since_best = 0;
    } else {
      ++since_best;
    }
    if (gained || refined) {
      result.best_epoch = epoch;
      result.best_val_f1 = stats.val_f1;
      best_loss = stats.mean.total;
      stats.improved = true;
      best_values.clear();
      for (const auto& p : params) best_values.push_back(p.tensor.value());
    }
    result.history.push_back(stats);

    if (on_epoch && on_epoch(stats)) {
      result.stopped_by_callback = true;
      break;
    }
    if (since_best >= cfg.patience) break;
  }

  if (!result.stopped_by_callback && !best_values.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      params[i].tensor.value() = best_values[i];
    }
  }
  if (!checkpoint_path.empty()) model.save_checkpoint(checkpoint_path);
  return result;
}

// One row per epoch, loss parts unweighted, 17 significant digits.
inline void write_history_csv(const std::vector<EpochStats>& history,
                              const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw UsageError("cannot open history file: " + path);
  out << "epoch,total,basic,vocab,global,local,moe_enc,moe_dec,adv_enc,"
         "adv_dec,val_bleu,val_f1,grad_norm\n";
  out.precision(17);
  for (const auto& e : history) {
    out << e.epoch << ',' << e.mean.total << ',' << e.mean.basic << ','
        << e.mean.vocab << ',' << e.mean.global << ',' << e.mean.local << ','
        << e.mean.moe_enc << ',' << e.mean.moe_dec << ',' << e.mean.adv_enc
        << ',' << e.mean.adv_dec << ',' << e.val_bleu << ',' << e.val_f1
        << ',' << e.grad_norm << '\n';
  }
}

// ---- experiment drivers ----

struct ExperimentSpec {
  std::string protocol;  // "low-resource" | "zero-shot" | "ablation"
  std::vector<std::string> domains;  // empty = every corpus domain
  std::vector<double> ratios{0.05, 0.5};
  std::vector<std::string> ablations{"full",          "no-fusion",
                                     "no-multi-enc",  "no-multi-dec",
                                     "no-adv",        "shared-only"};
  std::vector<std::uint64_t> seeds{11, 12, 13};
  double val_frac = 0.1;
  double test_frac = 0.2;
  bool parallel = true;
};

struct ResultRow {
  std::string protocol;
  std::string domain;
  std::string setting;
  std::uint64_t seed = 0;
  double bleu = 0.0;
  double entity_f1 = 0.0;
};

// Named flag presets matching the ablation axes.
inline ModelFlags ablation_flags(const std::string& name) {
  ModelFlags f;
  if (name == "full") return f;
  if (name == "no-fusion") {
    f.dynamic_fusion = false;
    return f;
  }
  if (name == "no-multi-enc") {
    f.multi_encoder = false;
    return f;
  }
  if (name == "no-multi-dec") {
    f.multi_decoder = false;
    return f;
  }
  if (name == "no-adv") {
    f.adversarial = false;
    return f;
  }
  if (name == "shared-only") {
    f.multi_encoder = false;
    f.multi_decoder = false;
    f.dynamic_fusion = false;
    f.adversarial = false;
    return f;
  }
  throw UsageError("unknown ablation: " + name);
}

inline std::string format_setting(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", ratio);
  return buf;
}

namespace detail {

// One grid cell: build, train to best validation F1, score the target
// domain's test dialogues.
template <typename S>
ResultRow run_cell(const Corpus& corpus, const Vocabulary& vocab,
                   const TrainConfig& base, const ExperimentSpec& spec,
                   const std::string& protocol, const std::string& domain,
                   const std::string& setting, const ModelFlags& flags,
                   double ratio, std::uint64_t seed) {
  CorpusSplit split =
      split_train_val_test(corpus, spec.val_frac, spec.test_frac, seed);
  Corpus train = split.train;
  Corpus val = split.val;
  if (protocol == "zero-shot") {
    train = split_zero_shot(train, domain);
    val = split_zero_shot(val, domain);
  } else {
    train = split_low_resource(train, domain, ratio, seed);
  }

  Corpus test = domain_subset(split.test, domain);
  if (!corpus_has_turns(test)) {
    throw UsageError("experiment: no test turns for domain " + domain +
                     "; corpus too small for test_frac");
  }

  TrainConfig cfg = base;
  cfg.seed = seed;
  cfg.flags = flags;
  DfNet<S> model(vocab, corpus.domains, cfg.model, cfg.flags, seed);
  train_model(model, train, val, cfg);

  auto metrics = evaluate(model, test);
  ResultRow row;
  row.protocol = protocol;
  row.domain = domain;
  row.setting = setting;
  row.seed = seed;
  row.bleu = metrics.bleu;
  row.entity_f1 = metrics.micro_f1;
  return row;
}

}  // namespace detail

// Expands the protocol grid and trains one independent model per cell.
// Cells are deterministic in their seed, so the row table is identical
// whether cells run sequentially or in parallel.
template <typename S>
std::vector<ResultRow> run_experiment(const Corpus& corpus,
                                      const ExperimentSpec& spec,
                                      const TrainConfig& base) {
  if (!corpus_has_turns(corpus)) {
    throw UsageError("experiment: corpus has no turns");
  }
  std::vector<std::string> domains =
      spec.domains.empty() ? corpus.domains : spec.domains;
  for (const auto& d : domains) {
    if (std::find(corpus.domains.begin(), corpus.domains.end(), d) ==
        corpus.domains.end()) {
      throw UsageError("experiment: unknown domain: " + d);
    }
  }
  if (spec.seeds.empty()) throw UsageError("experiment: no seeds");

  struct Cell {
    std::string protocol, domain, setting;
    ModelFlags flags;
    double ratio;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  if (spec.protocol == "low-resource") {
    if (spec.ratios.empty()) throw UsageError("experiment: no ratios");
    for (const auto& d : domains) {
      for (double r : spec.ratios) {
        if (!(r > 0.0) || r > 1.0) {
          throw UsageError("experiment: ratio must be in (0, 1]");
        }
        for (auto s : spec.seeds) {
          cells.push_back({spec.protocol, d, format_setting(r), base.flags,
                           r, s});
        }
      }
    }
  } else if (spec.protocol == "zero-shot") {
    for (const auto& d : domains) {
      for (auto s : spec.seeds) {
        cells.push_back({spec.protocol, d, "0", base.flags, 0.0, s});
      }
    }
  } else if (spec.protocol == "ablation") {
    if (spec.ablations.empty()) throw UsageError("experiment: no ablations");
    double ratio = spec.ratios.empty() ? 1.0 : spec.ratios.front();
    if (!(ratio > 0.0) || ratio > 1.0) {
      throw UsageError("experiment: ratio must be in (0, 1]");
    }
    for (const auto& d : domains) {
      for (const auto& name : spec.ablations) {
        ModelFlags flags = ablation_flags(name);
        for (auto s : spec.seeds) {
          cells.push_back({spec.protocol, d, name, flags, ratio, s});
        }
      }
    }
  } else {
    throw UsageError("unknown protocol: " + spec.protocol);
  }

  Vocabulary vocab = Vocabulary::build(corpus);
  std::vector<ResultRow> rows(cells.size());
  if (spec.parallel) {
    std::vector<std::future<ResultRow>> futures;
    futures.reserve(cells.size());
    for (const auto& c : cells) {
      futures.push_back(std::async(std::launch::async, [&corpus, &vocab,
                                                        &base, &spec, c] {
        return detail::run_cell<S>(corpus, vocab, base, spec, c.protocol,
                                   c.domain, c.setting, c.flags, c.ratio,
                                   c.seed);
      }));
    }
    for (std::size_t i = 0; i < futures.size(); ++i) rows[i] = futures[i].get();
  } else {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      const Cell& c = cells[i];
      rows[i] = detail::run_cell<S>(corpus, vocab, base, spec, c.protocol,
                                    c.domain, c.setting, c.flags, c.ratio,
                                    c.seed);
    }
  }
  return rows;
}

inline void write_results_csv(const std::vector<ResultRow>& rows,
                              const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw UsageError("cannot open results file: " + path);
  out << "protocol,domain,setting,seed,bleu,entity_f1\n";
  out.precision(17);
  for (const auto& r : rows) {
    out << r.protocol << ',' << r.domain << ',' << r.setting << ',' << r.seed
        << ',' << r.bleu << ',' << r.entity_f1 << '\n';
  }
}

}  // namespace dfnet

#endif  // DFNET_TRAIN_HPP
