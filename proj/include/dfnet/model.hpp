#ifndef DFNET_MODEL_HPP
#define DFNET_MODEL_HPP

#include <bit>
#include <cstdint>
#include <fstream>
#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "dfnet/corpus.hpp"
#include "dfnet/fusion.hpp"
#include "dfnet/knowledge.hpp"
#include "dfnet/layers.hpp"

namespace dfnet {

struct ModelConfig {
  int hidden = 128;
  int embedding = 128;
  int hops = 3;
  double dropout = 0.2;
  double teacher_forcing = 0.9;
  double grl_lambda = 1.0;
  int max_decode_len = 24;
};

// Ablation switches. Disabling both paths on a side leaves nothing to run,
// which construction rejects; adversarial training needs the shared path
// and is normalized off without it.
struct ModelFlags {
  bool dynamic_fusion = true;
  bool multi_encoder = true;
  bool multi_decoder = true;
  bool adversarial = true;
  bool shared_path = true;
};

// Everything one training or evaluation step needs about a single turn,
// resolved against a fixed vocabulary.
struct TurnExample {
  std::size_t domain = 0;
  std::vector<int> history_ids;
  MemoryStore memory;
  std::vector<std::vector<Index>> memory_ids;
  std::vector<int> sketch_ids;
  std::vector<std::size_t> local_labels;  // aligned with sketch_ids
  std::vector<int> global_labels;         // size b+T
  std::vector<std::string> gold_system;
  std::vector<std::string> gold_entities;
  std::size_t dialogue_index = 0;
  std::size_t turn_index = 0;
};

inline TurnExample prepare_turn(const Corpus& corpus, std::size_t dialogue_index,
                                std::size_t turn_index,
                                const Vocabulary& vocab) {
  const Dialogue& d = corpus.dialogues[dialogue_index];
  const Turn& turn = d.turns[turn_index];
  TurnExample ex;
  ex.domain = corpus.domain_index(d.domain);
  ex.dialogue_index = dialogue_index;
  ex.turn_index = turn_index;
  auto history = history_for_turn(d, turn_index);
  ex.history_ids.reserve(history.size());
  for (const auto& h : history) ex.history_ids.push_back(vocab.id(h.word));
  ex.memory = build_memory(history, d.kb);
  ex.memory_ids = memory_token_ids(ex.memory, vocab);
  ex.sketch_ids.reserve(turn.sketch.size());
  for (const auto& w : turn.sketch) ex.sketch_ids.push_back(vocab.id(w));
  auto labels = make_pointer_labels(turn.system, ex.memory);
  ex.local_labels = std::move(labels.local);
  ex.global_labels = std::move(labels.global);
  ex.gold_system = turn.system;
  ex.gold_entities = turn.gold_entities;
  return ex;
}

inline std::vector<TurnExample> prepare_examples(const Corpus& corpus,
                                                 const Vocabulary& vocab) {
  std::vector<TurnExample> out;
  for (std::size_t di = 0; di < corpus.dialogues.size(); ++di) {
    for (std::size_t ti = 0; ti < corpus.dialogues[di].turns.size(); ++ti) {
      out.push_back(prepare_turn(corpus, di, ti, vocab));
    }
  }
  return out;
}

template <typename S>
struct EncodeResult {
  std::vector<Tensor<S>> shared_states;   // empty without the shared path
  std::vector<Tensor<S>> mixture_states;  // expert mixture, empty when single
  std::vector<Tensor<S>> fused_states;    // H^f
  Tensor<S> fused_mat;                    // h x T
  Tensor<S> context;                     // c^f_enc
  Tensor<S> h_last;
  std::vector<Tensor<S>> enc_gates;      // per history token, may be empty
  MemoryEmbeds<S> mem;
  Tensor<S> q_final;
  Tensor<S> global;                      // (b+T) x 1
};

template <typename S>
struct TurnTensors {
  EncodeResult<S> enc;
  std::vector<Tensor<S>> p_vocab;   // one per step, gold targets + eos
  std::vector<Tensor<S>> p_local;   // one per response step
  std::vector<Tensor<S>> dec_gates;  // per step, may be empty
  Tensor<S> beta_enc;  // undefined without adversarial
  Tensor<S> beta_dec;
};

template <typename S>
struct DecodeOutput {
  std::vector<std::string> surface;
  std::vector<std::string> sketch;
  std::vector<Mat<S>> gates;  // per emitted token; empty without a gate
};

template <typename S>
class DfNet {
 public:
  DfNet(Vocabulary vocab, std::vector<std::string> domains, ModelConfig cfg,
        ModelFlags flags, std::uint64_t init_seed)
      : vocab_(std::move(vocab)),
        domains_(std::move(domains)),
        cfg_(cfg),
        flags_(flags) {
    if (domains_.empty()) throw UsageError("model needs at least one domain");
    if (cfg_.hidden <= 0 || cfg_.embedding <= 0 || cfg_.hops < 1) {
      throw UsageError("model sizes must be positive and hops >= 1");
    }
    if (!flags_.shared_path && !flags_.multi_encoder) {
      throw UsageError("encoder needs the shared path or private experts");
    }
    if (!flags_.shared_path && !flags_.multi_decoder) {
      throw UsageError("decoder needs the shared path or private experts");
    }
    if (!flags_.shared_path) flags_.adversarial = false;

    Rng rng(init_seed);
    Index h = cfg_.hidden;
    Index e = cfg_.embedding;
    Index v = static_cast<Index>(vocab_.size());
    Index nd = static_cast<Index>(domains_.size());

    embedding_ = init_embedding<S>(rng, v, e);
    if (flags_.shared_path) enc_shared_ = BiLstmParams<S>::make(rng, h, e);
    if (flags_.multi_encoder) {
      for (Index i = 0; i < nd; ++i) {
        enc_private_.push_back(BiLstmParams<S>::make(rng, h, e));
      }
    }
    attn_ = SelfAttentionParams<S>::make(rng, h);
    if (enc_fuses()) enc_fuse_ = ShprivateParams<S>::make(rng, h);
    if (enc_gated()) enc_gate_ = MoeGateParams<S>::make(rng, nd, h);
    if (flags_.adversarial) {
      adv_enc_ = DomainClassifierParams<S>::make(rng, h, nd);
    }
    memory_ = MemoryParams<S>::make(rng, cfg_.hops, v, h);
    if (flags_.shared_path) dec_shared_ = LstmParams<S>::make(rng, h, e);
    if (flags_.multi_decoder) {
      for (Index i = 0; i < nd; ++i) {
        dec_private_.push_back(LstmParams<S>::make(rng, h, e));
      }
    }
    if (dec_fuses()) dec_fuse_ = ShprivateParams<S>::make(rng, h);
    if (dec_gated()) dec_gate_ = MoeGateParams<S>::make(rng, nd, h);
    if (flags_.adversarial) {
      adv_dec_ = DomainClassifierParams<S>::make(rng, h, nd);
    }
    out_adapter_ = Linear<S>::make(rng, e, 2 * h);
    query_proj_ = Linear<S>::make(rng, h, 2 * h);
  }

  const Vocabulary& vocab() const { return vocab_; }
  const std::vector<std::string>& domains() const { return domains_; }
  const ModelConfig& config() const { return cfg_; }
  const ModelFlags& flags() const { return flags_; }

  bool enc_fuses() const {
    return flags_.multi_encoder && flags_.shared_path;
  }
  bool dec_fuses() const {
    return flags_.multi_decoder && flags_.shared_path;
  }
  bool enc_gated() const {
    return flags_.multi_encoder && flags_.dynamic_fusion;
  }
  bool dec_gated() const {
    return flags_.multi_decoder && flags_.dynamic_fusion;
  }

  // Stable parameter order; the checkpoint payload follows it exactly.
  std::vector<NamedParam<S>> manifest() {
    std::vector<NamedParam<S>> out;
    out.push_back({"embedding", embedding_});
    if (flags_.shared_path) enc_shared_.manifest(out, "enc_shared");
    if (flags_.multi_encoder) {
      for (std::size_t i = 0; i < enc_private_.size(); ++i) {
        enc_private_[i].manifest(out, "enc_private." + domains_[i]);
      }
    }
    attn_.manifest(out, "enc_attn");
    if (enc_fuses()) enc_fuse_.manifest(out, "enc_fuse");
    if (enc_gated()) enc_gate_.manifest(out, "enc_gate");
    if (flags_.adversarial) adv_enc_.manifest(out, "adv_enc");
    memory_.manifest(out, "memory");
    if (flags_.shared_path) dec_shared_.manifest(out, "dec_shared");
    if (flags_.multi_decoder) {
      for (std::size_t i = 0; i < dec_private_.size(); ++i) {
        dec_private_[i].manifest(out, "dec_private." + domains_[i]);
      }
    }
    if (dec_fuses()) dec_fuse_.manifest(out, "dec_fuse");
    if (dec_gated()) dec_gate_.manifest(out, "dec_gate");
    if (flags_.adversarial) adv_dec_.manifest(out, "adv_dec");
    out_adapter_.manifest(out, "out_adapter");
    query_proj_.manifest(out, "query_proj");
    return out;
  }

  EncodeResult<S> encode(const TurnExample& ex, bool train, Rng& rng) {
    if (ex.history_ids.empty()) {
      throw UsageError("encode: empty dialogue history");
    }
    std::vector<Tensor<S>> xs;
    xs.reserve(ex.history_ids.size());
    for (int id : ex.history_ids) {
      xs.push_back(dropout(embed(embedding_, id), cfg_.dropout, rng, train));
    }
    EncodeResult<S> r;
    if (flags_.shared_path) {
      r.shared_states = bilstm_encode(enc_shared_, xs);
      for (auto& s : r.shared_states) {
        s = dropout(s, cfg_.dropout, rng, train);
      }
    }
    std::vector<std::vector<Tensor<S>>> expert_states;
    if (flags_.multi_encoder) {
      for (const auto& enc : enc_private_) {
        auto states = bilstm_encode(enc, xs);
        for (auto& s : states) s = dropout(s, cfg_.dropout, rng, train);
        expert_states.push_back(std::move(states));
      }
    }
    std::size_t T = xs.size();
    r.fused_states.reserve(T);
    for (std::size_t t = 0; t < T; ++t) {
      if (!flags_.multi_encoder) {
        r.fused_states.push_back(r.shared_states[t]);
        continue;
      }
      std::vector<Tensor<S>> experts;
      experts.reserve(expert_states.size());
      for (const auto& es : expert_states) experts.push_back(es[t]);
      Tensor<S> mixture;
      if (enc_gated()) {
        auto alpha = moe_gate(enc_gate_, experts);
        r.enc_gates.push_back(alpha);
        mixture = gate_mixture(experts, alpha);
      } else {
        mixture = mean_mixture(experts);
      }
      r.mixture_states.push_back(mixture);
      r.fused_states.push_back(flags_.shared_path
                                   ? shprivate(enc_fuse_, r.shared_states[t],
                                               mixture)
                                   : mixture);
    }
    r.fused_mat = concat_cols(r.fused_states);
    auto attended = self_attend(attn_, r.fused_states);
    r.context = attended.context;
    r.h_last = flags_.shared_path ? r.shared_states.back()
                                  : r.fused_states.back();
    r.mem = embed_memory(memory_, ex.memory_ids, ex.memory.null_index());
    auto eq = encoder_query(r.mem, r.context, cfg_.hops);
    r.q_final = eq.q_final;
    r.global = eq.global;
    return r;
  }

  // One teacher-forced pass producing every tensor the losses consume.
  // The decoder input at step t is the gold token with probability
  // tf_ratio (fresh Bernoulli draw per token), else the model's argmax.
  TurnTensors<S> teacher_forced_pass(const TurnExample& ex, bool train,
                                     Rng& rng, double tf_ratio) {
    TurnTensors<S> out;
    out.enc = encode(ex, train, rng);
    std::size_t steps = ex.sketch_ids.size() + 1;  // + eos

    LstmState<S> shared_state;
    std::vector<LstmState<S>> expert_state;
    init_decoder_states(out.enc.q_final, shared_state, expert_state);

    std::vector<Tensor<S>> dec_shared_states;
    int prev = Vocabulary::kSos;
    for (std::size_t s = 0; s < steps; ++s) {
      StepOut step = decode_core(prev, shared_state, expert_state,
                                 out.enc, train, rng);
      out.p_vocab.push_back(step.p_vocab);
      if (step.alpha.defined()) out.dec_gates.push_back(step.alpha);
      if (flags_.shared_path) dec_shared_states.push_back(step.shared_h);
      if (s < ex.sketch_ids.size()) {
        auto q1 = query_proj_(step.o_in);
        out.p_local.push_back(
            decoder_query(out.enc.mem, q1, out.enc.global, cfg_.hops));
      }
      int gold = s < ex.sketch_ids.size() ? ex.sketch_ids[s]
                                          : Vocabulary::kEos;
      bool use_gold = !train || rng.bernoulli(tf_ratio);
      prev = use_gold ? gold
                      : static_cast<int>(argmax<S>(step.p_vocab.value()));
    }

    if (flags_.adversarial) {
      S lambda = static_cast<S>(cfg_.grl_lambda);
      out.beta_enc =
          adversarial_classify(adv_enc_, out.enc.shared_states, lambda);
      std::vector<Tensor<S>> response_states(
          dec_shared_states.begin(),
          dec_shared_states.begin() +
              static_cast<long>(ex.sketch_ids.size()));
      out.beta_dec = adversarial_classify(adv_dec_, response_states, lambda);
    }
    return out;
  }

  DecodeOutput<S> greedy_decode(const TurnExample& ex, int max_len) {
    if (max_len < 1) throw UsageError("greedy_decode: max_len must be >= 1");
    Rng rng(0);  // eval mode draws nothing
    DecodeOutput<S> out;
    auto enc = encode(ex, false, rng);
    LstmState<S> shared_state;
    std::vector<LstmState<S>> expert_state;
    init_decoder_states(enc.q_final, shared_state, expert_state);

    int prev = Vocabulary::kSos;
    for (int s = 0; s < max_len; ++s) {
      StepOut step =
          decode_core(prev, shared_state, expert_state, enc, false, rng);
      int tok = static_cast<int>(argmax<S>(step.p_vocab.value()));
      if (tok == Vocabulary::kEos) break;
      const std::string& word = vocab_.token(tok);
      out.sketch.push_back(word);
      if (step.alpha.defined()) out.gates.push_back(step.alpha.value());
      if (!word.empty() && word[0] == '@') {
        auto q1 = query_proj_(step.o_in);
        auto p = decoder_query(enc.mem, q1, enc.global, cfg_.hops);
        auto cell = static_cast<std::size_t>(argmax<S>(p.value()));
        if (cell != ex.memory.null_index() && ex.memory.cells[cell].object) {
          out.surface.push_back(*ex.memory.cells[cell].object);
        } else {
          out.surface.push_back(word);
        }
      } else {
        out.surface.push_back(word);
      }
      prev = tok;
    }
    return out;
  }

  void save_checkpoint(const std::string& path) {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint payload is little-endian");
    nlohmann::json header;
    header["config"] = {{"hidden", cfg_.hidden},
                        {"embedding", cfg_.embedding},
                        {"hops", cfg_.hops},
                        {"dropout", cfg_.dropout},
                        {"teacher_forcing", cfg_.teacher_forcing},
                        {"grl_lambda", cfg_.grl_lambda},
                        {"max_decode_len", cfg_.max_decode_len}};
    header["flags"] = {{"dynamic_fusion", flags_.dynamic_fusion},
                       {"multi_encoder", flags_.multi_encoder},
                       {"multi_decoder", flags_.multi_decoder},
                       {"adversarial", flags_.adversarial},
                       {"shared_path", flags_.shared_path}};
    header["domains"] = domains_;
    header["vocab"] = vocab_.tokens();
    header["params"] = nlohmann::json::array();
    auto params = manifest();
    for (auto& p : params) {
      header["params"].push_back({{"name", p.name},
                                  {"rows", p.tensor.rows()},
                                  {"cols", p.tensor.cols()}});
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out << "DFNET1\n" << header.dump() << "\n";
    for (auto& p : params) {
      const Mat<S>& m = p.tensor.value();
      for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
          float f = static_cast<float>(m(i, j));
          out.write(reinterpret_cast<const char*>(&f), sizeof(float));
        }
      }
    }
    if (!out) throw DataError("checkpoint write failed: " + path);
  }

  static DfNet load_checkpoint(const std::string& path) {
    static_assert(std::endian::native == std::endian::little,
                  "checkpoint payload is little-endian");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    std::string magic;
    if (!std::getline(in, magic) || magic != "DFNET1") {
      throw DataError(path + ": not a DFNET1 checkpoint");
    }
    std::string header_line;
    if (!std::getline(in, header_line)) {
      throw DataError(path + ": missing checkpoint header");
    }
    nlohmann::json header;
    try {
      header = nlohmann::json::parse(header_line);
    } catch (const std::exception& e) {
      throw DataError(path + ": bad checkpoint header: " + e.what());
    }
    ModelConfig cfg;
    const auto& jc = header.at("config");
    cfg.hidden = jc.at("hidden").get<int>();
    cfg.embedding = jc.at("embedding").get<int>();
    cfg.hops = jc.at("hops").get<int>();
    cfg.dropout = jc.at("dropout").get<double>();
    cfg.teacher_forcing = jc.at("teacher_forcing").get<double>();
    cfg.grl_lambda = jc.at("grl_lambda").get<double>();
    cfg.max_decode_len = jc.at("max_decode_len").get<int>();
    ModelFlags flags;
    const auto& jf = header.at("flags");
    flags.dynamic_fusion = jf.at("dynamic_fusion").get<bool>();
    flags.multi_encoder = jf.at("multi_encoder").get<bool>();
    flags.multi_decoder = jf.at("multi_decoder").get<bool>();
    flags.adversarial = jf.at("adversarial").get<bool>();
    flags.shared_path = jf.at("shared_path").get<bool>();
    auto domains = header.at("domains").get<std::vector<std::string>>();
    auto tokens = header.at("vocab").get<std::vector<std::string>>();
    DfNet model(Vocabulary::from_tokens(tokens), domains, cfg, flags, 0);
    auto params = model.manifest();
    const auto& jp = header.at("params");
    if (jp.size() != params.size()) {
      throw DataError(path + ": parameter manifest size mismatch");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (jp[i].at("name").get<std::string>() != params[i].name ||
          jp[i].at("rows").get<Index>() != params[i].tensor.rows() ||
          jp[i].at("cols").get<Index>() != params[i].tensor.cols()) {
        throw DataError(path + ": manifest mismatch at '" + params[i].name +
                        "'");
      }
    }
    for (auto& p : params) {
      Mat<S>& m = p.tensor.value();
      for (Index i = 0; i < m.rows(); ++i) {
        for (Index j = 0; j < m.cols(); ++j) {
          float f;
          in.read(reinterpret_cast<char*>(&f), sizeof(float));
          if (!in) {
            throw DataError(path + ": truncated checkpoint payload");
          }
          m(i, j) = static_cast<S>(f);
        }
      }
    }
    char extra;
    if (in.read(&extra, 1)) {
      throw DataError(path + ": trailing bytes after checkpoint payload");
    }
    return model;
  }

 private:
  struct StepOut {
    Tensor<S> p_vocab;
    Tensor<S> o_in;      // [h^f ; h^{f'}], input to output and query heads
    Tensor<S> alpha;     // undefined when no gate on the decoder side
    Tensor<S> shared_h;  // undefined without the shared path
  };

  void init_decoder_states(const Tensor<S>& q_final,
                           LstmState<S>& shared_state,
                           std::vector<LstmState<S>>& expert_state) {
    Index h = cfg_.hidden;
    if (flags_.shared_path) {
      shared_state = {q_final, Tensor<S>::zeros(h, 1)};
    }
    if (flags_.multi_decoder) {
      expert_state.clear();
      for (std::size_t i = 0; i < dec_private_.size(); ++i) {
        expert_state.push_back({q_final, Tensor<S>::zeros(h, 1)});
      }
    }
  }

  StepOut decode_core(int prev, LstmState<S>& shared_state,
                      std::vector<LstmState<S>>& expert_state,
                      const EncodeResult<S>& enc, bool train, Rng& rng) {
    auto x = dropout(embed(embedding_, prev), cfg_.dropout, rng, train);
    StepOut out;
    if (flags_.shared_path) {
      shared_state = lstm_cell(dec_shared_, x, shared_state);
      out.shared_h = shared_state.h;
    }
    Tensor<S> fused;
    if (flags_.multi_decoder) {
      std::vector<Tensor<S>> experts;
      experts.reserve(expert_state.size());
      for (std::size_t i = 0; i < expert_state.size(); ++i) {
        expert_state[i] = lstm_cell(dec_private_[i], x, expert_state[i]);
        experts.push_back(expert_state[i].h);
      }
      Tensor<S> mixture;
      if (dec_gated()) {
        out.alpha = moe_gate(dec_gate_, experts);
        mixture = gate_mixture(experts, out.alpha);
      } else {
        mixture = mean_mixture(experts);
      }
      fused = flags_.shared_path ? shprivate(dec_fuse_, shared_state.h,
                                             mixture)
                                 : mixture;
    } else {
      fused = shared_state.h;
    }
    auto scores = matmul(transpose(enc.fused_mat), fused);
    auto weights = softmax(scores);
    auto attended = matmul(enc.fused_mat, weights);
    out.o_in = concat_rows(fused, attended);
    auto logits = matmul(embedding_, out_adapter_(out.o_in));
    out.p_vocab = softmax(logits);
    return out;
  }

  Vocabulary vocab_;
  std::vector<std::string> domains_;
  ModelConfig cfg_;
  ModelFlags flags_;

  Tensor<S> embedding_;
  BiLstmParams<S> enc_shared_;
  std::vector<BiLstmParams<S>> enc_private_;
  SelfAttentionParams<S> attn_;
  ShprivateParams<S> enc_fuse_;
  MoeGateParams<S> enc_gate_;
  DomainClassifierParams<S> adv_enc_;
  MemoryParams<S> memory_;
  LstmParams<S> dec_shared_;
  std::vector<LstmParams<S>> dec_private_;
  ShprivateParams<S> dec_fuse_;
  MoeGateParams<S> dec_gate_;
  DomainClassifierParams<S> adv_dec_;
  Linear<S> out_adapter_;
  Linear<S> query_proj_;
};

}  // namespace dfnet

#endif  // DFNET_MODEL_HPP
