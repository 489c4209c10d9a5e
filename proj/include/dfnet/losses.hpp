#ifndef DFNET_LOSSES_HPP
#define DFNET_LOSSES_HPP

#include <vector>

#include "dfnet/model.hpp"

namespace dfnet {

struct LossWeights {
  double gamma_global = 1.0;
  double gamma_vocab = 1.0;
  double gamma_local = 1.0;
  double gamma_basic = 1.0;
  double gamma_moe = 1.0;
  double gamma_adv = 1.0;
};

// Unweighted component values plus the weighted total, all per example.
// moe = moe_enc + moe_dec and adv = adv_enc + adv_dec by construction.
struct LossReport {
  double vocab = 0.0;
  double global = 0.0;
  double local = 0.0;
  double moe = 0.0;
  double moe_enc = 0.0;
  double moe_dec = 0.0;
  double adv = 0.0;
  double adv_enc = 0.0;
  double adv_dec = 0.0;
  double basic = 0.0;
  double total = 0.0;

  LossReport& operator+=(const LossReport& o) {
    vocab += o.vocab;
    global += o.global;
    local += o.local;
    moe += o.moe;
    moe_enc += o.moe_enc;
    moe_dec += o.moe_dec;
    adv += o.adv;
    adv_enc += o.adv_enc;
    adv_dec += o.adv_dec;
    basic += o.basic;
    total += o.total;
    return *this;
  }

  LossReport scaled(double f) const {
    LossReport r = *this;
    r.vocab *= f;
    r.global *= f;
    r.local *= f;
    r.moe *= f;
    r.moe_enc *= f;
    r.moe_dec *= f;
    r.adv *= f;
    r.adv_enc *= f;
    r.adv_dec *= f;
    r.basic *= f;
    r.total *= f;
    return r;
  }
};

template <typename S>
struct TurnLoss {
  Tensor<S> total;
  LossReport report;
};

template <typename S>
Mat<S> one_hot_column(Index size, Index index) {
  Mat<S> m = Mat<S>::Zero(size, 1);
  m(index, 0) = S(1);
  return m;
}

// Assembles the full training objective for one turn. Component terms are
// sums over their natural units (steps or cells); absent branches
// contribute exactly zero and no graph nodes.
template <typename S>
TurnLoss<S> turn_loss(const TurnTensors<S>& t, const TurnExample& ex,
                      Index n_domains, const LossWeights& w) {
  std::vector<Tensor<S>> vocab_terms;
  for (std::size_t s = 0; s < t.p_vocab.size(); ++s) {
    Index target = s < ex.sketch_ids.size()
                       ? static_cast<Index>(ex.sketch_ids[s])
                       : static_cast<Index>(Vocabulary::kEos);
    vocab_terms.push_back(pick_neg_log(t.p_vocab[s], target));
  }
  Tensor<S> l_vocab = add_n(vocab_terms);

  Mat<S> g_target(ex.global_labels.size(), 1);
  for (std::size_t i = 0; i < ex.global_labels.size(); ++i) {
    g_target(static_cast<Index>(i), 0) = static_cast<S>(ex.global_labels[i]);
  }
  Tensor<S> l_global = bce_loss(t.enc.global, g_target);

  std::vector<Tensor<S>> local_terms;
  for (std::size_t s = 0; s < t.p_local.size(); ++s) {
    local_terms.push_back(pick_neg_log(
        t.p_local[s], static_cast<Index>(ex.local_labels[s])));
  }
  Tensor<S> l_local = add_n(local_terms);

  auto domain = static_cast<Index>(ex.domain);
  std::vector<Tensor<S>> moe_enc_terms;
  for (const auto& alpha : t.enc.enc_gates) {
    moe_enc_terms.push_back(pick_neg_log(alpha, domain));
  }
  std::size_t dec_moe_steps =
      t.dec_gates.empty() ? 0 : ex.sketch_ids.size();  // eos step excluded
  std::vector<Tensor<S>> moe_dec_terms;
  for (std::size_t s = 0; s < dec_moe_steps; ++s) {
    moe_dec_terms.push_back(pick_neg_log(t.dec_gates[s], domain));
  }
  Tensor<S> l_moe_enc, l_moe_dec, l_moe;
  if (!moe_enc_terms.empty()) l_moe_enc = add_n(moe_enc_terms);
  if (!moe_dec_terms.empty()) l_moe_dec = add_n(moe_dec_terms);
  if (l_moe_enc.defined() && l_moe_dec.defined()) {
    l_moe = add(l_moe_enc, l_moe_dec);
  } else if (l_moe_enc.defined()) {
    l_moe = l_moe_enc;
  } else if (l_moe_dec.defined()) {
    l_moe = l_moe_dec;
  }

  Tensor<S> l_adv_enc, l_adv_dec, l_adv;
  if (t.beta_enc.defined()) {
    Mat<S> target = one_hot_column<S>(n_domains, domain);
    l_adv_enc = bce_loss(t.beta_enc, target);
    l_adv_dec = bce_loss(t.beta_dec, target);
    l_adv = add(l_adv_enc, l_adv_dec);
  }

  auto item_or_zero = [](const Tensor<S>& t_) {
    return t_.defined() ? static_cast<double>(t_.item()) : 0.0;
  };
  TurnLoss<S> out;
  out.report.vocab = static_cast<double>(l_vocab.item());
  out.report.global = static_cast<double>(l_global.item());
  out.report.local = static_cast<double>(l_local.item());
  out.report.moe_enc = item_or_zero(l_moe_enc);
  out.report.moe_dec = item_or_zero(l_moe_dec);
  out.report.moe = item_or_zero(l_moe);
  out.report.adv_enc = item_or_zero(l_adv_enc);
  out.report.adv_dec = item_or_zero(l_adv_dec);
  out.report.adv = item_or_zero(l_adv);
  out.report.basic = w.gamma_global * out.report.global +
                     w.gamma_vocab * out.report.vocab +
                     w.gamma_local * out.report.local;
  out.report.total = w.gamma_basic * out.report.basic +
                     w.gamma_moe * out.report.moe +
                     w.gamma_adv * out.report.adv;

  Tensor<S> basic = add_n(std::vector<Tensor<S>>{
      scale(l_global, static_cast<S>(w.gamma_global)),
      scale(l_vocab, static_cast<S>(w.gamma_vocab)),
      scale(l_local, static_cast<S>(w.gamma_local))});
  std::vector<Tensor<S>> total_terms{
      scale(basic, static_cast<S>(w.gamma_basic))};
  if (l_moe.defined()) {
    total_terms.push_back(scale(l_moe, static_cast<S>(w.gamma_moe)));
  }
  if (l_adv.defined()) {
    total_terms.push_back(scale(l_adv, static_cast<S>(w.gamma_adv)));
  }
  out.total = add_n(total_terms);
  return out;
}

}  // namespace dfnet

#endif  // DFNET_LOSSES_HPP
