#include <fstream>
#include <json.hpp>
#include <set>

#include "dfnet/corpus.hpp"

// Importer for the public SMD / KVRET dialogue layout: a JSON array of
// records, each holding a scenario (kb items + task intent) and an
// alternating driver/assistant exchange list.

namespace dfnet {

using nlohmann::json;

namespace {

const char* subject_column(const std::string& domain) {
  if (domain == "navigate") return "poi";
  if (domain == "weather") return "location";
  if (domain == "schedule") return "event";
  return nullptr;
}

// Multi-word values become a single canonical token: lowercase, commas
// dropped, word gaps underscore-joined.
std::string underscore_join(const std::string& raw) {
  std::string cleaned;
  cleaned.reserve(raw.size());
  for (char c : raw) cleaned.push_back(c == ',' ? ' ' : c);
  auto toks = tokenize(cleaned);
  std::string out;
  for (std::size_t i = 0; i < toks.size(); ++i) {
    if (i) out.push_back('_');
    out += toks[i];
  }
  return out;
}

bool entity_in_dialogue(const std::string& entity, const Dialogue& d) {
  for (const auto& t : d.kb) {
    if (t.object == entity) return true;
  }
  for (const auto& turn : d.turns) {
    for (const auto& w : turn.user)
      if (w == entity) return true;
    for (const auto& w : turn.system)
      if (w == entity) return true;
  }
  return false;
}

std::vector<std::string> annotation_entities(const json& data) {
  std::vector<std::string> out;
  if (data.contains("entities") && data["entities"].is_array()) {
    for (const auto& e : data["entities"]) {
      if (e.is_string()) out.push_back(underscore_join(e.get<std::string>()));
    }
    return out;
  }
  if (data.contains("slots") && data["slots"].is_object()) {
    for (const auto& [key, value] : data["slots"].items()) {
      (void)key;
      if (value.is_string()) {
        out.push_back(underscore_join(value.get<std::string>()));
      }
    }
  }
  return out;
}

}  // namespace

Corpus import_smd(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open smd file: " + path);
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw DataError("smd parse failure in " + path + ": " + e.what());
  }
  if (!j.is_array()) {
    throw DataError(path + ": smd layout is a top-level array of records");
  }
  Corpus corpus;
  corpus.domains = {"navigate", "weather", "schedule"};
  std::size_t ri = 0;
  for (const auto& rec : j) {
    std::string at = "smd record " + std::to_string(ri);
    if (!rec.is_object() || !rec.contains("scenario") ||
        !rec.contains("dialogue")) {
      throw DataError(at + ": needs 'scenario' and 'dialogue'");
    }
    const json& scenario = rec["scenario"];
    if (!scenario.contains("task") || !scenario["task"].contains("intent")) {
      throw DataError(at + ": scenario missing task intent");
    }
    Dialogue d;
    d.domain = scenario["task"]["intent"].get<std::string>();
    const char* subj_col = subject_column(d.domain);
    if (!subj_col) {
      throw DataError(at + ": unknown domain '" + d.domain + "'");
    }

    if (scenario.contains("kb") && scenario["kb"].contains("items") &&
        scenario["kb"]["items"].is_array()) {
      std::size_t ii = 0;
      for (const auto& item : scenario["kb"]["items"]) {
        std::string iat = at + " kb item " + std::to_string(ii);
        if (!item.is_object()) throw DataError(iat + ": expected an object");
        if (!item.contains(subj_col) || !item[subj_col].is_string()) {
          throw DataError(iat + ": missing subject column '" +
                          std::string(subj_col) + "'");
        }
        std::string subject =
            underscore_join(item[subj_col].get<std::string>());
        if (subject.empty()) throw DataError(iat + ": empty subject");
        for (const auto& [col, value] : item.items()) {
          if (col == subj_col || !value.is_string()) continue;
          std::string object = underscore_join(value.get<std::string>());
          if (object.empty() || object == "-") continue;
          d.kb.push_back({subject, underscore_join(col), object});
        }
        ++ii;
      }
    }

    std::vector<std::string> pending_user;
    for (const auto& ex : rec["dialogue"]) {
      if (!ex.is_object() || !ex.contains("turn") || !ex.contains("data") ||
          !ex["data"].contains("utterance")) {
        throw DataError(at + ": malformed exchange entry");
      }
      std::string speaker = ex["turn"].get<std::string>();
      auto words = tokenize(ex["data"]["utterance"].get<std::string>());
      if (speaker == "driver") {
        pending_user.insert(pending_user.end(), words.begin(), words.end());
      } else if (speaker == "assistant") {
        if (words.empty()) continue;
        Turn turn;
        turn.user = pending_user;
        turn.system = words;
        turn.gold_entities = annotation_entities(ex["data"]);
        pending_user.clear();
        d.turns.push_back(std::move(turn));
      } else {
        throw DataError(at + ": unknown speaker '" + speaker + "'");
      }
    }
    if (d.turns.empty()) {
      throw DataError(at + ": no completed exchanges");
    }

    for (auto& turn : d.turns) {
      // Annotated entities that cannot be located anywhere in the dialogue
      // or KB can never be produced by a pointer; drop them.
      std::vector<std::string> kept;
      for (const auto& e : turn.gold_entities) {
        if (entity_in_dialogue(e, d)) kept.push_back(e);
      }
      turn.gold_entities = kept;
      std::set<std::string> history_entities;
      turn.sketch = delexicalize(turn.system, d.kb, history_entities);
      if (turn.gold_entities.empty()) {
        std::set<std::string> objects;
        for (const auto& t : d.kb) objects.insert(t.object);
        std::set<std::string> found;
        for (const auto& w : turn.system) {
          if (objects.count(w)) found.insert(w);
        }
        turn.gold_entities.assign(found.begin(), found.end());
      } else {
        std::set<std::string> uniq(turn.gold_entities.begin(),
                                   turn.gold_entities.end());
        turn.gold_entities.assign(uniq.begin(), uniq.end());
      }
    }
    corpus.dialogues.push_back(std::move(d));
    ++ri;
  }
  return corpus;
}

}  // namespace dfnet
