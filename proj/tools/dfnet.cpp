#include <filesystem>
#include <iostream>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dfnet/config.hpp"

namespace {

using namespace dfnet;

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

Corpus read_corpus(const std::string& path, bool smd) {
  return smd ? import_smd(path) : load_corpus(path);
}

struct ConfigCli {
  std::string file;
  std::vector<std::pair<std::string, std::string>> overrides;
};

// --config plus one override flag per key; flags beat file values.
void add_config_options(CLI::App* sub, ConfigCli& cc, bool& verbose) {
  sub->add_flag("--verbose", verbose, "print config provenance and details");
  sub->add_option("--config", cc.file,
                  "configuration file (key=value lines, '#' comments)");
  for (const auto& key : Config::keys()) {
    sub->add_option_function<std::string>(
        "--" + key,
        [&cc, key](const std::string& v) { cc.overrides.emplace_back(key, v); },
        "override config key " + key);
  }
}

Config resolve_config(const ConfigCli& cc, bool verbose) {
  Config cfg = Config::defaults();
  if (!cc.file.empty()) cfg.load_file(cc.file);
  for (const auto& [key, value] : cc.overrides) cfg.set_flag(key, value);
  if (verbose) std::cerr << cfg.provenance();
  return cfg;
}

void print_metrics(const MetricsReport& m) {
  std::cout << "bleu " << m.bleu << "\n";
  std::cout << "entity_f1 " << m.micro_f1 << "\n";
  for (const auto& [domain, f1] : m.per_domain_f1) {
    const MetricsCounts& c = m.per_domain_counts.at(domain);
    std::cout << "entity_f1[" << domain << "] " << f1 << " (tp " << c.tp
              << " fp " << c.fp << " fn " << c.fn << ")\n";
  }
}

template <typename S>
int cmd_train(const Config& cfg, const std::string& corpus_path, bool smd,
              const std::string& out_dir, std::string ckpt_path) {
  TrainConfig tc = cfg.to_train_config();
  Corpus corpus = read_corpus(corpus_path, smd);
  Vocabulary vocab = Vocabulary::build(corpus);
  CorpusSplit split =
      split_train_val_test(corpus, cfg.get_double("val_frac"),
                           cfg.get_double("test_frac"), tc.seed);

  std::filesystem::create_directories(out_dir);
  if (ckpt_path.empty()) ckpt_path = out_dir + "/model.ckpt";

  DfNet<S> model(vocab, corpus.domains, tc.model, tc.flags, tc.seed);
  TrainResult result =
      train_model(model, split.train, split.val, tc, ckpt_path);
  std::string history_path = out_dir + "/history.csv";
  write_history_csv(result.history, history_path);

  std::cout << "epochs " << result.history.size() << " (best "
            << result.best_epoch << ", val entity_f1 " << result.best_val_f1
            << ")\n";
  std::cout << "checkpoint " << ckpt_path << "\n";
  std::cout << "history " << history_path << "\n";
  if (corpus_has_turns(split.test)) {
    std::cout << "test metrics:\n";
    print_metrics(evaluate(model, split.test));
  } else {
    std::cout << "test split empty; no test metrics\n";
  }
  return 0;
}

template <typename S>
int cmd_evaluate(const std::string& corpus_path, bool smd,
                 const std::string& ckpt_path) {
  auto model = DfNet<S>::load_checkpoint(ckpt_path);
  Corpus corpus = read_corpus(corpus_path, smd);
  try {
    print_metrics(evaluate(model, corpus));
  } catch (const DataError& e) {
    throw DataError(std::string("checkpoint/corpus compatibility: ") +
                    e.what());
  }
  return 0;
}

template <typename S>
int cmd_experiment(const Config& cfg, const std::string& corpus_path,
                   bool smd, const ExperimentSpec& spec,
                   const std::string& out_dir) {
  TrainConfig tc = cfg.to_train_config();
  ExperimentSpec run = spec;
  run.val_frac = cfg.get_double("val_frac");
  run.test_frac = cfg.get_double("test_frac");
  Corpus corpus = read_corpus(corpus_path, smd);
  auto rows = run_experiment<S>(corpus, run, tc);

  std::filesystem::create_directories(out_dir);
  std::string results_path = out_dir + "/results.csv";
  write_results_csv(rows, results_path);
  std::cout << "protocol,domain,setting,seed,bleu,entity_f1\n";
  for (const auto& r : rows) {
    std::cout << r.protocol << ',' << r.domain << ',' << r.setting << ','
              << r.seed << ',' << r.bleu << ',' << r.entity_f1 << "\n";
  }
  std::cout << "results " << results_path << "\n";
  return 0;
}

template <typename S>
int cmd_export_gates(const Config& cfg, const std::string& corpus_path,
                     bool smd, const std::string& ckpt_path,
                     const std::string& out_file, int count) {
  auto model = DfNet<S>::load_checkpoint(ckpt_path);
  Corpus corpus = read_corpus(corpus_path, smd);
  GateTrace trace = export_gates(model, corpus, count, cfg.get_u64("seed"));
  write_gate_trace(trace, out_file);
  for (const auto& [target, mean] : trace.mean_alpha) {
    std::cout << "gates[" << target << "]";
    for (std::size_t k = 0; k < mean.size(); ++k) {
      std::cout << ' ' << trace.expert_domains[k] << '=' << mean[k];
    }
    std::cout << "\n";
  }
  std::cout << "trace " << out_file << "\n";
  return 0;
}

int cmd_make_toy(const Config& cfg, const std::string& out_file,
                 const ToySpec& base) {
  ToySpec spec = base;
  spec.seed = cfg.get_u64("seed");
  Corpus corpus = make_toy_corpus(spec);
  save_corpus(corpus, out_file);
  std::size_t turns = 0;
  for (const auto& d : corpus.dialogues) turns += d.turns.size();
  std::cout << "wrote " << corpus.dialogues.size() << " dialogues ("
            << turns << " turns, " << corpus.domains.size()
            << " domains) to " << out_file << "\n";
  return 0;
}

// KB file: either a canonical corpus (first dialogue's KB is used) or a
// bare JSON array of [subject, relation, object] triples.
std::vector<KBTriple> read_kb(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open kb file: " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError("kb file " + path + ": " + e.what());
  }
  if (doc.is_object() && doc.contains("dialogues")) {
    Corpus corpus = load_corpus(path);
    if (corpus.dialogues.empty()) {
      throw DataError("kb file has no dialogues: " + path);
    }
    return corpus.dialogues.front().kb;
  }
  if (!doc.is_array()) {
    throw DataError("kb file must be a corpus or a triple array: " + path);
  }
  std::vector<KBTriple> kb;
  for (const auto& item : doc) {
    if (!item.is_array() || item.size() != 3) {
      throw DataError("kb triple must be [subject, relation, object]");
    }
    KBTriple t;
    t.subject = item[0].get<std::string>();
    t.relation = item[1].get<std::string>();
    t.object = item[2].get<std::string>();
    for (std::string* field : {&t.subject, &t.relation, &t.object}) {
      auto toks = tokenize(*field);
      if (toks.size() != 1) {
        throw DataError("kb entries must be single tokens: " + *field);
      }
      *field = toks[0];
    }
    kb.push_back(t);
  }
  return kb;
}

template <typename S>
int cmd_chat(const std::string& ckpt_path, const std::string& kb_path,
             std::string domain, bool verbose) {
  auto model = DfNet<S>::load_checkpoint(ckpt_path);
  const Vocabulary& vocab = model.vocab();
  if (domain.empty()) domain = model.domains().front();
  if (std::find(model.domains().begin(), model.domains().end(), domain) ==
      model.domains().end()) {
    throw UsageError("domain not covered by checkpoint: " + domain);
  }

  Corpus live;
  live.domains = model.domains();
  live.dialogues.push_back(Dialogue{domain, read_kb(kb_path), {}});
  Dialogue& dlg = live.dialogues.front();

  std::set<std::string> warned;
  auto sanitize = [&](std::string& token) {
    if (token != kUnkToken && vocab.id(token) == Vocabulary::kUnk) {
      if (warned.insert(token).second) {
        std::cerr << "warning: '" << token
                  << "' not in checkpoint vocabulary; using " << kUnkToken
                  << "\n";
      }
      token = kUnkToken;
    }
  };
  for (auto& t : dlg.kb) {
    sanitize(t.subject);
    sanitize(t.relation);
    sanitize(t.object);
  }

  std::string line;
  while (true) {
    std::cerr << "> " << std::flush;
    if (!std::getline(std::cin, line)) break;
    auto user = tokenize(line);
    if (user.empty()) continue;
    if (user.size() == 1 && user[0] == "exit") break;
    for (auto& t : user) sanitize(t);

    dlg.turns.push_back(Turn{user, {}, {}, {}});
    TurnExample ex =
        prepare_turn(live, 0, dlg.turns.size() - 1, vocab);
    auto out = model.greedy_decode(ex, model.config().max_decode_len);
    std::cout << join(out.surface) << "\n";
    if (verbose) {
      std::cout << "sketch: " << join(out.sketch) << "\n";
      if (!out.gates.empty()) {
        std::vector<double> mean(model.domains().size(), 0.0);
        for (std::size_t t = 0; t < out.gates.size(); ++t) {
          std::cout << "gate[" << t << "]:";
          for (std::size_t k = 0; k < mean.size(); ++k) {
            double a = static_cast<double>(
                out.gates[t](static_cast<Index>(k), 0));
            mean[k] += a;
            std::cout << ' ' << model.domains()[k] << '=' << a;
          }
          std::cout << "\n";
        }
        std::cout << "gates:";
        for (std::size_t k = 0; k < mean.size(); ++k) {
          std::cout << ' ' << model.domains()[k] << '='
                    << mean[k] / double(out.gates.size());
        }
        std::cout << "\n";
      }
    }
    dlg.turns.back().system = out.surface;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dynamic fusion network for multi-domain dialogue"};
  app.require_subcommand(1);

  bool verbose = false;
  app.add_flag("--verbose", verbose, "print config provenance and details");

  ConfigCli cc_train, cc_eval, cc_exp, cc_gates, cc_toy, cc_chat;
  std::string corpus_path, ckpt_path, out_dir = ".", out_file;
  bool smd = false;

  auto* train = app.add_subcommand("train", "train a model on a corpus");
  train->add_option("--corpus", corpus_path, "corpus file")->required();
  train->add_flag("--smd", smd, "corpus is in SMD (KVRET) format");
  train->add_option("--out", out_dir, "output directory");
  train->add_option("--checkpoint", ckpt_path,
                    "checkpoint path (default <out>/model.ckpt)");
  add_config_options(train, cc_train, verbose);

  auto* eval = app.add_subcommand("evaluate", "score a checkpoint");
  eval->add_option("--corpus", corpus_path, "corpus file")->required();
  eval->add_flag("--smd", smd, "corpus is in SMD (KVRET) format");
  eval->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  add_config_options(eval, cc_eval, verbose);

  std::string protocol;
  std::vector<double> ratios{0.05, 0.5};
  std::vector<std::string> domains;
  std::vector<std::string> ablations;
  std::vector<std::uint64_t> seeds{11, 12, 13};
  auto* exp = app.add_subcommand("experiment", "run a protocol grid");
  exp->add_option("--corpus", corpus_path, "corpus file")->required();
  exp->add_flag("--smd", smd, "corpus is in SMD (KVRET) format");
  exp->add_option("--protocol", protocol,
                  "low-resource | zero-shot | ablation")
      ->required();
  exp->add_option("--ratios", ratios, "target-domain data fractions")
      ->delimiter(',');
  exp->add_option("--domain", domains, "target domains (default all)")
      ->delimiter(',');
  exp->add_option("--ablation", ablations, "ablation names")->delimiter(',');
  exp->add_option("--seeds", seeds, "one training run per seed")
      ->delimiter(',');
  exp->add_option("--out", out_dir, "output directory");
  add_config_options(exp, cc_exp, verbose);

  int gate_count = 10;
  auto* gates = app.add_subcommand("export-gates",
                                   "dump decoder gate activations");
  gates->add_option("--corpus", corpus_path, "corpus file")->required();
  gates->add_flag("--smd", smd, "corpus is in SMD (KVRET) format");
  gates->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  gates->add_option("--out", out_file, "trace csv path")
      ->default_val("gates.csv");
  gates->add_option("--count", gate_count, "examples per domain");
  add_config_options(gates, cc_gates, verbose);

  ToySpec toy;
  toy.domains = {"alpha", "beta", "gamma"};
  std::vector<std::string> toy_domains;
  auto* mk = app.add_subcommand("make-toy-data",
                                "generate a synthetic corpus");
  mk->add_option("--out", out_file, "corpus path to write")->required();
  mk->add_option("--domains", toy_domains, "domain names")->delimiter(',');
  mk->add_option("--dialogues", toy.dialogues_per_domain,
                 "dialogues per domain");
  mk->add_option("--overlap", toy.overlap,
                 "shared fraction of content vocabulary");
  mk->add_option("--entities", toy.kb_entities, "KB subjects per dialogue");
  mk->add_option("--relations", toy.relations, "relation inventory size");
  mk->add_option("--objects", toy.objects, "object inventory size");
  mk->add_option("--subjects", toy.subjects, "subject inventory size");
  add_config_options(mk, cc_toy, verbose);

  std::string kb_path, chat_domain;
  auto* chat = app.add_subcommand("chat", "interactive REPL on a checkpoint");
  chat->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
  chat->add_option("--kb", kb_path, "knowledge base file")->required();
  chat->add_option("--domain", chat_domain,
                   "dialogue domain (default: first in checkpoint)");
  add_config_options(chat, cc_chat, verbose);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (train->parsed()) {
      Config cfg = resolve_config(cc_train, verbose);
      return cfg.get("precision") == "f32"
                 ? cmd_train<float>(cfg, corpus_path, smd, out_dir, ckpt_path)
                 : cmd_train<double>(cfg, corpus_path, smd, out_dir,
                                     ckpt_path);
    }
    if (eval->parsed()) {
      Config cfg = resolve_config(cc_eval, verbose);
      return cfg.get("precision") == "f32"
                 ? cmd_evaluate<float>(corpus_path, smd, ckpt_path)
                 : cmd_evaluate<double>(corpus_path, smd, ckpt_path);
    }
    if (exp->parsed()) {
      Config cfg = resolve_config(cc_exp, verbose);
      ExperimentSpec spec;
      spec.protocol = protocol;
      spec.ratios = ratios;
      spec.domains = domains;
      if (!ablations.empty()) spec.ablations = ablations;
      spec.seeds = seeds;
      return cfg.get("precision") == "f32"
                 ? cmd_experiment<float>(cfg, corpus_path, smd, spec, out_dir)
                 : cmd_experiment<double>(cfg, corpus_path, smd, spec,
                                          out_dir);
    }
    if (gates->parsed()) {
      Config cfg = resolve_config(cc_gates, verbose);
      return cfg.get("precision") == "f32"
                 ? cmd_export_gates<float>(cfg, corpus_path, smd, ckpt_path,
                                           out_file, gate_count)
                 : cmd_export_gates<double>(cfg, corpus_path, smd, ckpt_path,
                                            out_file, gate_count);
    }
    if (mk->parsed()) {
      Config cfg = resolve_config(cc_toy, verbose);
      if (!toy_domains.empty()) toy.domains = toy_domains;
      return cmd_make_toy(cfg, out_file, toy);
    }
    if (chat->parsed()) {
      Config cfg = resolve_config(cc_chat, verbose);
      return cfg.get("precision") == "f32"
                 ? cmd_chat<float>(ckpt_path, kb_path, chat_domain, verbose)
                 : cmd_chat<double>(ckpt_path, kb_path, chat_domain, verbose);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
