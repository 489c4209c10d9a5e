#include "dfnet/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <set>
#include <sstream>

#include "dfnet/rng.hpp"

namespace dfnet {

using nlohmann::json;

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) {
        out.push_back(cur);
        cur.clear();
      }
    } else {
      cur.push_back(static_cast<char>(
          std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

std::size_t Corpus::domain_index(const std::string& name) const {
  for (std::size_t i = 0; i < domains.size(); ++i) {
    if (domains[i] == name) return i;
  }
  throw DomainError("unknown domain '" + name + "'");
}

namespace {

std::string single_token_field(const json& v, const std::string& where) {
  if (!v.is_string()) throw DataError(where + ": expected a string");
  auto toks = tokenize(v.get<std::string>());
  if (toks.size() != 1) {
    throw DataError(where + ": expected a single non-empty token, got \"" +
                    v.get<std::string>() + "\"");
  }
  return toks[0];
}

// Gold entities must be locatable in memory: some KB object or some token
// of the dialogue itself.
void check_entity_membership(const std::string& entity, const Dialogue& d,
                             const std::string& where) {
  for (const auto& t : d.kb) {
    if (t.object == entity) return;
  }
  for (const auto& turn : d.turns) {
    for (const auto& w : turn.user)
      if (w == entity) return;
    for (const auto& w : turn.system)
      if (w == entity) return;
  }
  throw DataError(where + ": gold entity '" + entity +
                  "' absent from kb and dialogue history");
}

std::vector<std::string> derive_entities(
    const std::vector<std::string>& system,
    const std::vector<KBTriple>& kb) {
  std::set<std::string> objects;
  for (const auto& t : kb) objects.insert(t.object);
  std::set<std::string> found;
  for (const auto& w : system) {
    if (objects.count(w)) found.insert(w);
  }
  return {found.begin(), found.end()};
}

void finish_turn(Turn& turn, const Dialogue& d) {
  std::set<std::string> history_entities;  // reserved for future slots
  turn.sketch = delexicalize(turn.system, d.kb, history_entities);
  if (turn.gold_entities.empty()) {
    turn.gold_entities = derive_entities(turn.system, d.kb);
  } else {
    std::set<std::string> uniq(turn.gold_entities.begin(),
                               turn.gold_entities.end());
    turn.gold_entities.assign(uniq.begin(), uniq.end());
  }
}

}  // namespace

Corpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("corpus parse failure in " + path + ": " + e.what());
  }
  if (!j.is_object() || !j.contains("domains") || !j.contains("dialogues")) {
    throw DataError(path + ": top level must hold 'domains' and 'dialogues'");
  }
  Corpus corpus;
  if (!j["domains"].is_array()) throw DataError(path + ": 'domains' must be an array");
  std::set<std::string> declared;
  for (const auto& d : j["domains"]) {
    if (!d.is_string()) throw DataError(path + ": domain names must be strings");
    std::string name = d.get<std::string>();
    if (!declared.insert(name).second) {
      throw DataError(path + ": duplicate domain '" + name + "'");
    }
    corpus.domains.push_back(name);
  }
  if (!j["dialogues"].is_array()) {
    throw DataError(path + ": 'dialogues' must be an array");
  }
  std::size_t di = 0;
  for (const auto& jd : j["dialogues"]) {
    std::string at = "dialogue " + std::to_string(di);
    if (!jd.is_object()) throw DataError(at + ": expected an object");
    Dialogue d;
    if (!jd.contains("domain") || !jd["domain"].is_string()) {
      throw DataError(at + ": missing 'domain'");
    }
    d.domain = jd["domain"].get<std::string>();
    if (!declared.count(d.domain)) {
      throw DataError(at + ": unknown domain '" + d.domain + "'");
    }
    if (jd.contains("kb")) {
      if (!jd["kb"].is_array()) throw DataError(at + ": 'kb' must be an array");
      std::size_t ki = 0;
      for (const auto& jt : jd["kb"]) {
        std::string kat = at + " kb entry " + std::to_string(ki);
        if (!jt.is_array() || jt.size() != 3) {
          throw DataError(kat + ": must be [subject, relation, object]");
        }
        KBTriple t;
        t.subject = single_token_field(jt[0], kat + " subject");
        t.relation = single_token_field(jt[1], kat + " relation");
        t.object = single_token_field(jt[2], kat + " object");
        d.kb.push_back(std::move(t));
        ++ki;
      }
    }
    if (!jd.contains("turns") || !jd["turns"].is_array()) {
      throw DataError(at + ": missing 'turns' array");
    }
    std::size_t ti = 0;
    for (const auto& jt : jd["turns"]) {
      std::string tat = at + " turn " + std::to_string(ti);
      if (!jt.is_object() || !jt.contains("user") || !jt.contains("system") ||
          !jt["user"].is_string() || !jt["system"].is_string()) {
        throw DataError(tat + ": needs string fields 'user' and 'system'");
      }
      Turn turn;
      turn.user = tokenize(jt["user"].get<std::string>());
      turn.system = tokenize(jt["system"].get<std::string>());
      if (turn.system.empty()) {
        throw DataError(tat + ": empty system response");
      }
      if (jt.contains("gold_entities")) {
        if (!jt["gold_entities"].is_array()) {
          throw DataError(tat + ": 'gold_entities' must be an array");
        }
        for (const auto& je : jt["gold_entities"]) {
          turn.gold_entities.push_back(
              single_token_field(je, tat + " gold entity"));
        }
      }
      d.turns.push_back(std::move(turn));
      ++ti;
    }
    for (std::size_t t = 0; t < d.turns.size(); ++t) {
      bool annotated = !d.turns[t].gold_entities.empty();
      finish_turn(d.turns[t], d);
      if (annotated) {
        for (const auto& e : d.turns[t].gold_entities) {
          check_entity_membership(
              e, d, at + " turn " + std::to_string(t));
        }
      }
    }
    corpus.dialogues.push_back(std::move(d));
    ++di;
  }
  return corpus;
}

std::vector<std::string> delexicalize(
    const std::vector<std::string>& y, const std::vector<KBTriple>& kb,
    const std::set<std::string>& history_entities) {
  (void)history_entities;  // copyable words carry no slot type to tag with
  std::vector<std::string> sketch;
  sketch.reserve(y.size());
  for (const auto& w : y) {
    const KBTriple* hit = nullptr;
    for (const auto& t : kb) {
      if (t.object == w) {
        hit = &t;
        break;
      }
    }
    sketch.push_back(hit ? "@" + hit->relation : w);
  }
  return sketch;
}

std::vector<HistoryToken> history_for_turn(const Dialogue& d,
                                           std::size_t turn_index) {
  if (turn_index >= d.turns.size()) {
    throw UsageError("history_for_turn: turn index out of range");
  }
  std::vector<HistoryToken> h;
  for (std::size_t k = 0; k <= turn_index; ++k) {
    for (const auto& w : d.turns[k].user) {
      h.push_back({w, true, static_cast<int>(k)});
    }
    if (k < turn_index) {
      for (const auto& w : d.turns[k].system) {
        h.push_back({w, false, static_cast<int>(k)});
      }
    }
  }
  return h;
}

MemoryStore build_memory(const std::vector<HistoryToken>& history,
                         const std::vector<KBTriple>& kb) {
  MemoryStore m;
  m.kb_count = kb.size();
  m.history_count = history.size();
  m.cells.reserve(kb.size() + history.size() + 1);
  for (const auto& t : kb) {
    m.cells.push_back({{t.subject, t.relation, t.object}, t.object});
  }
  for (const auto& h : history) {
    m.cells.push_back({{h.from_user ? kUserTag : kSystemTag,
                        "turn" + std::to_string(h.turn), h.word},
                       h.word});
  }
  m.cells.push_back({{kNullToken}, std::nullopt});
  return m;
}

PointerLabels make_pointer_labels(const std::vector<std::string>& y,
                                  const MemoryStore& m) {
  PointerLabels labels;
  std::size_t real = m.null_index();
  std::set<std::string> response(y.begin(), y.end());
  labels.global.resize(real, 0);
  for (std::size_t i = 0; i < real; ++i) {
    if (m.cells[i].object && response.count(*m.cells[i].object)) {
      labels.global[i] = 1;
    }
  }
  labels.local.reserve(y.size());
  for (const auto& w : y) {
    std::size_t target = m.null_index();
    for (std::size_t i = 0; i < real; ++i) {
      if (m.cells[i].object && *m.cells[i].object == w) target = i;
    }
    labels.local.push_back(target);
  }
  return labels;
}

Vocabulary::Vocabulary() {
  add(kPadToken);
  add(kSosToken);
  add(kEosToken);
  add(kUnkToken);
}

int Vocabulary::add(const std::string& token) {
  auto it = ids_.find(token);
  if (it != ids_.end()) return it->second;
  int id = static_cast<int>(tokens_.size());
  tokens_.push_back(token);
  ids_.emplace(token, id);
  return id;
}

Vocabulary Vocabulary::build(const Corpus& corpus) {
  std::set<std::string> words;
  std::size_t max_turns = 0;
  for (const auto& d : corpus.dialogues) {
    max_turns = std::max(max_turns, d.turns.size());
    for (const auto& t : d.kb) {
      words.insert(t.subject);
      words.insert(t.relation);
      words.insert(t.object);
    }
    for (const auto& turn : d.turns) {
      words.insert(turn.user.begin(), turn.user.end());
      words.insert(turn.system.begin(), turn.system.end());
      words.insert(turn.sketch.begin(), turn.sketch.end());
      words.insert(turn.gold_entities.begin(), turn.gold_entities.end());
    }
  }
  if (!corpus.dialogues.empty()) {
    words.insert(kUserTag);
    words.insert(kSystemTag);
    words.insert(kNullToken);
    for (std::size_t k = 0; k < max_turns; ++k) {
      words.insert("turn" + std::to_string(k));
    }
  }
  Vocabulary v;
  for (const auto& w : words) v.add(w);
  return v;
}

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < 4 || tokens[0] != kPadToken || tokens[1] != kSosToken ||
      tokens[2] != kEosToken || tokens[3] != kUnkToken) {
    throw DataError("vocabulary list must start with the four specials");
  }
  Vocabulary v;
  for (std::size_t i = 4; i < tokens.size(); ++i) {
    int before = static_cast<int>(v.size());
    if (v.add(tokens[i]) != before) {
      throw DataError("vocabulary list contains duplicate token '" +
                      tokens[i] + "'");
    }
  }
  return v;
}

int Vocabulary::id(const std::string& token) const {
  auto it = ids_.find(token);
  return it == ids_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(const std::string& token) const {
  return ids_.count(token) != 0;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= static_cast<int>(tokens_.size())) {
    throw UsageError("vocabulary id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

namespace {

std::string join_tokens(const std::vector<std::string>& toks) {
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out.push_back(' ');
    out += toks[i];
  }
  return out;
}

}  // namespace

void save_corpus(const Corpus& corpus, const std::string& path) {
  json j;
  j["domains"] = corpus.domains;
  j["dialogues"] = json::array();
  for (const auto& d : corpus.dialogues) {
    json jd;
    jd["domain"] = d.domain;
    jd["kb"] = json::array();
    for (const auto& t : d.kb) {
      jd["kb"].push_back({t.subject, t.relation, t.object});
    }
    jd["turns"] = json::array();
    for (const auto& turn : d.turns) {
      json jt;
      jt["user"] = join_tokens(turn.user);
      jt["system"] = join_tokens(turn.system);
      jt["gold_entities"] = turn.gold_entities;
      jd["turns"].push_back(std::move(jt));
    }
    j["dialogues"].push_back(std::move(jd));
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write corpus file: " + path);
  out << j.dump(2) << "\n";
}

Corpus merge_corpora(const Corpus& a, const Corpus& b) {
  Corpus out = a;
  for (const auto& d : b.domains) {
    if (std::find(out.domains.begin(), out.domains.end(), d) ==
        out.domains.end()) {
      out.domains.push_back(d);
    }
  }
  out.dialogues.insert(out.dialogues.end(), b.dialogues.begin(),
                       b.dialogues.end());
  return out;
}

Corpus split_low_resource(const Corpus& corpus,
                          const std::string& target_domain, double ratio,
                          std::uint64_t seed) {
  corpus.domain_index(target_domain);
  if (!(ratio > 0.0) || ratio > 1.0) {
    throw UsageError("low-resource ratio must be in (0, 1]");
  }
  std::vector<std::size_t> target;
  for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) {
    if (corpus.dialogues[i].domain == target_domain) target.push_back(i);
  }
  Rng rng(seed);
  rng.shuffle(target);
  std::size_t keep = static_cast<std::size_t>(
      std::ceil(ratio * static_cast<double>(target.size())));
  std::set<std::size_t> kept(target.begin(),
                             target.begin() + static_cast<long>(std::min(
                                                  keep, target.size())));
  Corpus out;
  out.domains = corpus.domains;
  for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) {
    if (corpus.dialogues[i].domain != target_domain || kept.count(i)) {
      out.dialogues.push_back(corpus.dialogues[i]);
    }
  }
  return out;
}

Corpus split_zero_shot(const Corpus& corpus,
                       const std::string& removed_domain) {
  corpus.domain_index(removed_domain);
  Corpus out;
  out.domains = corpus.domains;
  for (const auto& d : corpus.dialogues) {
    if (d.domain != removed_domain) out.dialogues.push_back(d);
  }
  return out;
}

CorpusSplit split_train_val_test(const Corpus& corpus, double val_frac,
                                 double test_frac, std::uint64_t seed) {
  if (val_frac < 0.0 || test_frac < 0.0 || val_frac + test_frac >= 1.0) {
    throw UsageError("val/test fractions must be non-negative and sum < 1");
  }
  CorpusSplit split;
  split.train.domains = corpus.domains;
  split.val.domains = corpus.domains;
  split.test.domains = corpus.domains;
  Rng rng(seed);
  for (const auto& name : corpus.domains) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) {
      if (corpus.dialogues[i].domain == name) idx.push_back(i);
    }
    rng.shuffle(idx);
    std::size_t n = idx.size();
    std::size_t n_val = static_cast<std::size_t>(
        std::floor(val_frac * static_cast<double>(n)));
    std::size_t n_test = static_cast<std::size_t>(
        std::floor(test_frac * static_cast<double>(n)));
    std::set<std::size_t> val_set(idx.begin(), idx.begin() + static_cast<long>(n_val));
    std::set<std::size_t> test_set(
        idx.begin() + static_cast<long>(n_val),
        idx.begin() + static_cast<long>(n_val + n_test));
    for (std::size_t i = 0; i < corpus.dialogues.size(); ++i) {
      if (corpus.dialogues[i].domain != name) continue;
      if (val_set.count(i)) {
        split.val.dialogues.push_back(corpus.dialogues[i]);
      } else if (test_set.count(i)) {
        split.test.dialogues.push_back(corpus.dialogues[i]);
      } else {
        split.train.dialogues.push_back(corpus.dialogues[i]);
      }
    }
  }
  return split;
}

}  // namespace dfnet
