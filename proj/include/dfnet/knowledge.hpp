#ifndef DFNET_KNOWLEDGE_HPP
#define DFNET_KNOWLEDGE_HPP

#include <string>
#include <vector>

#include "dfnet/corpus.hpp"
#include "dfnet/layers.hpp"
#include "dfnet/ops.hpp"

namespace dfnet {

// k-hop key-value style memory over triple cells. Adjacent hops share a
// matrix: hop j attends with C^j and reads out with C^{j+1}, so k hops own
// exactly k+1 trainable matrices.
template <typename S>
struct MemoryParams {
  std::vector<Tensor<S>> hop;  // k+1 matrices, |V| x h
  int hops = 0;

  static MemoryParams make(Rng& rng, int k, Index vocab, Index hidden) {
    if (k < 1) throw UsageError("memory hops must be >= 1");
    MemoryParams p;
    p.hops = k;
    for (int j = 0; j <= k; ++j) {
      p.hop.push_back(init_embedding<S>(rng, vocab, hidden));
    }
    return p;
  }

  void manifest(std::vector<NamedParam<S>>& out, const std::string& name) {
    for (std::size_t j = 0; j < hop.size(); ++j) {
      out.push_back({name + ".c" + std::to_string(j), hop[j]});
    }
  }
};

// Cell token ids resolved once per turn. Lookup faults on tokens outside
// the vocabulary: memories are closed-vocabulary in this artifact.
inline std::vector<std::vector<Index>> memory_token_ids(
    const MemoryStore& m, const Vocabulary& vocab) {
  std::vector<std::vector<Index>> ids;
  ids.reserve(m.cells.size());
  for (const auto& cell : m.cells) {
    std::vector<Index> cell_ids;
    cell_ids.reserve(cell.tokens.size());
    for (const auto& tok : cell.tokens) {
      if (!vocab.contains(tok)) {
        throw DataError("memory token '" + tok + "' not in vocabulary");
      }
      cell_ids.push_back(vocab.id(tok));
    }
    ids.push_back(std::move(cell_ids));
  }
  return ids;
}

// Per-hop cell embeddings for one turn's memory, stored h x cells so both
// query directions reduce to one matmul per hop. Built once per example;
// every decoder step reuses the same graph nodes.
template <typename S>
struct MemoryEmbeds {
  std::vector<Tensor<S>> hop_mats;  // k+1 entries, h x cells
  std::size_t cell_count = 0;
  std::size_t null_index = 0;
};

template <typename S>
MemoryEmbeds<S> embed_memory(const MemoryParams<S>& p,
                             const std::vector<std::vector<Index>>& cell_ids,
                             std::size_t null_index) {
  MemoryEmbeds<S> out;
  out.cell_count = cell_ids.size();
  out.null_index = null_index;
  for (const auto& mat : p.hop) {
    std::vector<Tensor<S>> cols;
    cols.reserve(cell_ids.size());
    for (const auto& ids : cell_ids) {
      cols.push_back(bag_embed(mat, ids));
    }
    out.hop_mats.push_back(concat_cols(cols));
  }
  return out;
}

template <typename S>
struct EncoderQueryResult {
  Tensor<S> q_final;  // h x 1, the encoded knowledge that seeds the decoder
  Tensor<S> global;   // (b+T) x 1 sigmoid scores; null cell excluded
};

// k hops of additive memory reading; the global pointer comes from the
// final hop's pre-softmax logits.
template <typename S>
EncoderQueryResult<S> encoder_query(const MemoryEmbeds<S>& m,
                                    const Tensor<S>& q1, int hops) {
  Tensor<S> q = q1;
  Tensor<S> final_logits;
  for (int j = 0; j < hops; ++j) {
    auto logits = matmul(transpose(m.hop_mats[static_cast<std::size_t>(j)]), q);
    auto p = softmax(logits);
    auto o = matmul(m.hop_mats[static_cast<std::size_t>(j) + 1], p);
    q = add(q, o);
    if (j == hops - 1) final_logits = logits;
  }
  auto real = static_cast<Index>(m.null_index);
  return {q, sigmoid(slice_rows(final_logits, 0, real))};
}

// Decoder-side gated reading: each hop's logits are scaled elementwise by
// the global pointer before the softmax; the null cell is exempt (gate 1),
// so "no entity" stays reachable.
template <typename S>
Tensor<S> decoder_query(const MemoryEmbeds<S>& m, const Tensor<S>& q1,
                        const Tensor<S>& global, int hops) {
  if (static_cast<std::size_t>(global.rows()) != m.null_index) {
    throw DimensionError("decoder_query: global pointer length mismatch");
  }
  auto gate = concat_rows(global, constant<S>(Mat<S>::Ones(1, 1)));
  Tensor<S> q = q1;
  Tensor<S> p;
  for (int j = 0; j < hops; ++j) {
    auto logits = matmul(transpose(m.hop_mats[static_cast<std::size_t>(j)]), q);
    p = softmax(cwise_mul(logits, gate));
    auto o = matmul(m.hop_mats[static_cast<std::size_t>(j) + 1], p);
    q = add(q, o);
  }
  return p;
}

}  // namespace dfnet

#endif  // DFNET_KNOWLEDGE_HPP
