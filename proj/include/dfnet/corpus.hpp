#ifndef DFNET_CORPUS_HPP
#define DFNET_CORPUS_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "dfnet/error.hpp"

namespace dfnet {

// Reserved token spellings. Speaker/turn tags follow the memory-cell
// convention used by pointer-network dialogue systems; the null token is
// the content of the sentinel cell every memory ends with.
inline constexpr const char* kPadToken = "<pad>";
inline constexpr const char* kSosToken = "<sos>";
inline constexpr const char* kEosToken = "<eos>";
inline constexpr const char* kUnkToken = "<unk>";
inline constexpr const char* kUserTag = "$u";
inline constexpr const char* kSystemTag = "$s";
inline constexpr const char* kNullToken = "$null";

struct KBTriple {
  std::string subject;
  std::string relation;
  std::string object;
};

// One exchange. sketch mirrors system token for token, with entity tokens
// replaced by '@'+relation tags. gold_entities is sorted and deduplicated.
struct Turn {
  std::vector<std::string> user;
  std::vector<std::string> system;
  std::vector<std::string> sketch;
  std::vector<std::string> gold_entities;
};

struct Dialogue {
  std::string domain;
  std::vector<KBTriple> kb;
  std::vector<Turn> turns;
};

struct Corpus {
  std::vector<std::string> domains;
  std::vector<Dialogue> dialogues;

  std::size_t domain_index(const std::string& name) const;
};

// Lowercase, split on whitespace runs.
std::vector<std::string> tokenize(const std::string& text);

// Canonical-schema loader. Validates as it reads; messages carry dialogue
// and turn indices.
Corpus load_corpus(const std::string& path);

// SMD (KVRET) importer: navigate/weather/schedule scenarios converted to
// the canonical schema with multi-word values underscore-joined.
Corpus import_smd(const std::string& path);

// Canonical-schema writer; load_corpus(save_corpus(c)) round-trips.
void save_corpus(const Corpus& corpus, const std::string& path);

// Entity tokens become '@'+relation of the first matching triple in KB
// order; everything else passes through, including history-entity tokens,
// which carry no slot type. Token count is preserved.
std::vector<std::string> delexicalize(
    const std::vector<std::string>& y, const std::vector<KBTriple>& kb,
    const std::set<std::string>& history_entities);

struct HistoryToken {
  std::string word;
  bool from_user = true;
  int turn = 0;
};

// Dialogue context fed to the encoder and memory for turn `turn_index`:
// all earlier turns (user then system) plus the current user utterance.
std::vector<HistoryToken> history_for_turn(const Dialogue& d,
                                           std::size_t turn_index);

struct MemoryCell {
  std::vector<std::string> tokens;       // bag embedded by summation
  std::optional<std::string> object;     // copy target; null cell has none
};

struct MemoryStore {
  std::vector<MemoryCell> cells;
  std::size_t kb_count = 0;       // b
  std::size_t history_count = 0;  // T

  std::size_t null_index() const { return kb_count + history_count; }
  std::size_t size() const { return cells.size(); }
};

MemoryStore build_memory(const std::vector<HistoryToken>& history,
                         const std::vector<KBTriple>& kb);

struct PointerLabels {
  std::vector<int> global;         // b+T entries in {0,1}; null excluded
  std::vector<std::size_t> local;  // one entry per y token, in [0, b+T]
};

// global[i] = 1 iff cell i's object occurs in y. local[t] = largest cell
// index whose object equals y[t], else the null index.
PointerLabels make_pointer_labels(const std::vector<std::string>& y,
                                  const MemoryStore& m);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kSos = 1;
  static constexpr int kEos = 2;
  static constexpr int kUnk = 3;

  Vocabulary();

  // Specials, then every corpus token in sorted order: utterances, sketch
  // responses, triple components, and the structural memory tokens.
  static Vocabulary build(const Corpus& corpus);

  // Rebuild from an explicit token list (checkpoint load). The first four
  // entries must be the specials.
  static Vocabulary from_tokens(const std::vector<std::string>& tokens);

  int id(const std::string& token) const;  // kUnk when absent
  bool contains(const std::string& token) const;
  const std::string& token(int id) const;
  std::size_t size() const { return tokens_.size(); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  int add(const std::string& token);
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> ids_;
};

// ---- synthetic corpus ----

struct ToySpec {
  std::vector<std::string> domains;
  int dialogues_per_domain = 20;
  double overlap = 0.0;  // fraction of content vocabulary shared, in [0,1]
  std::uint64_t seed = 0;
  int kb_entities = 2;      // subjects per dialogue KB
  int relations = 4;        // relation inventory size per domain
  int objects = 12;         // object inventory size per domain
  int subjects = 6;         // subject inventory size per domain
};

Corpus make_toy_corpus(const ToySpec& spec);

// Domain union, dialogue concatenation. Duplicate domain names collapse.
Corpus merge_corpora(const Corpus& a, const Corpus& b);

// ---- experiment splits ----

// Keeps ceil(ratio * n_target) seeded-sampled target-domain dialogues and
// every other-domain dialogue.
Corpus split_low_resource(const Corpus& corpus,
                          const std::string& target_domain, double ratio,
                          std::uint64_t seed);

// Drops the domain from training entirely; the domain stays declared so
// the model still allocates its expert paths.
Corpus split_zero_shot(const Corpus& corpus,
                       const std::string& removed_domain);

struct CorpusSplit {
  Corpus train;
  Corpus val;
  Corpus test;
};

// Seeded per-domain shuffle, then proportional slicing. Fractions apply
// per domain so small corpora keep every domain represented in each part.
CorpusSplit split_train_val_test(const Corpus& corpus, double val_frac,
                                 double test_frac, std::uint64_t seed);

}  // namespace dfnet

#endif  // DFNET_CORPUS_HPP
