#ifndef DFNET_FUSION_HPP
#define DFNET_FUSION_HPP

#include <string>
#include <vector>

#include "dfnet/layers.hpp"
#include "dfnet/ops.hpp"

namespace dfnet {

// Shared-specific fusion: W2(LeakyReLU(W1 [shared; specific])), applied to
// single column vectors; sequence fusion maps this over the steps.
template <typename S>
struct ShprivateParams {
  Linear<S> w1;  // h x 2h
  Linear<S> w2;  // h x h

  static ShprivateParams make(Rng& rng, Index hidden) {
    return {Linear<S>::make(rng, hidden, 2 * hidden),
            Linear<S>::make(rng, hidden, hidden)};
  }

  void manifest(std::vector<NamedParam<S>>& out, const std::string& name) {
    w1.manifest(out, name + ".w1");
    w2.manifest(out, name + ".w2");
  }
};

template <typename S>
Tensor<S> shprivate(const ShprivateParams<S>& p, const Tensor<S>& shared,
                    const Tensor<S>& specific) {
  if (shared.rows() != specific.rows() || shared.cols() != 1 ||
      specific.cols() != 1) {
    throw DimensionError("shprivate: expects two h x 1 columns");
  }
  return p.w2(leaky_relu(p.w1(concat_rows(shared, specific))));
}

// Expert gate over the |D| private features of one token.
template <typename S>
struct MoeGateParams {
  Linear<S> lin;  // |D| x (|D| * h)
  Index experts = 0;
  Index hidden = 0;

  static MoeGateParams make(Rng& rng, Index experts, Index hidden) {
    MoeGateParams p;
    p.lin = Linear<S>::make(rng, experts, experts * hidden);
    p.experts = experts;
    p.hidden = hidden;
    return p;
  }

  void manifest(std::vector<NamedParam<S>>& out, const std::string& name) {
    lin.manifest(out, name);
  }
};

template <typename S>
Tensor<S> moe_gate(const MoeGateParams<S>& p,
                   const std::vector<Tensor<S>>& expert_features) {
  if (static_cast<Index>(expert_features.size()) != p.experts) {
    throw UsageError("moe_gate: expected " + std::to_string(p.experts) +
                     " expert features, got " +
                     std::to_string(expert_features.size()));
  }
  return softmax(p.lin(concat_rows(expert_features)));
}

// alpha-weighted expert mixture; a one-hot gate reduces to exact selection.
template <typename S>
Tensor<S> gate_mixture(const std::vector<Tensor<S>>& experts,
                       const Tensor<S>& alpha) {
  return matmul(concat_cols(experts), alpha);
}

template <typename S>
Tensor<S> mean_mixture(const std::vector<Tensor<S>>& experts) {
  return scale(add_n(experts),
               S(1) / static_cast<S>(experts.size()));
}

// Domain classifier fed through gradient reversal: width-3 convolution
// over the state sequence, max-pool over time, LeakyReLU, linear head,
// sigmoid. Touches the forward output of nothing else; it exists only to
// route reversed gradients into the shared path.
template <typename S>
struct DomainClassifierParams {
  Tensor<S> kernel;  // 3h x h
  Tensor<S> kbias;   // h x 1
  Linear<S> head;    // |D| x h

  static DomainClassifierParams make(Rng& rng, Index hidden, Index domains) {
    return {init_weight<S>(rng, 3 * hidden, hidden), init_bias<S>(hidden),
            Linear<S>::make(rng, domains, hidden)};
  }

  void manifest(std::vector<NamedParam<S>>& out, const std::string& name) {
    out.push_back({name + ".kernel", kernel});
    out.push_back({name + ".kbias", kbias});
    head.manifest(out, name + ".head");
  }
};

template <typename S>
Tensor<S> adversarial_classify(const DomainClassifierParams<S>& p,
                               const std::vector<Tensor<S>>& states,
                               S lambda) {
  if (states.empty()) {
    throw UsageError("adversarial_classify: empty state sequence");
  }
  auto seq = transpose(concat_cols(states));  // T x h
  auto reversed = gradient_reversal(seq, lambda);
  auto conv = conv1d_w3(reversed, p.kernel, p.kbias);
  auto pooled = leaky_relu(max_pool_rows(conv));
  return sigmoid(p.head(pooled));
}

}  // namespace dfnet

#endif  // DFNET_FUSION_HPP
