#ifndef DFNET_LAYERS_HPP
#define DFNET_LAYERS_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dfnet/adam.hpp"
#include "dfnet/ops.hpp"
#include "dfnet/rng.hpp"

namespace dfnet {

// Parameter initialization: weights U(-1/sqrt(fan_in), +1/sqrt(fan_in))
// with fan_in = column count, biases zero, embeddings U(-0.1, 0.1).

template <typename S>
Mat<S> init_uniform(Rng& rng, Index rows, Index cols, double bound) {
  Mat<S> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j)
      m(i, j) = static_cast<S>(rng.uniform(-bound, bound));
  return m;
}

template <typename S>
Tensor<S> init_weight(Rng& rng, Index rows, Index cols) {
  double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  return Tensor<S>::from(init_uniform<S>(rng, rows, cols, bound), true);
}

template <typename S>
Tensor<S> init_bias(Index rows) {
  return Tensor<S>::from(Mat<S>::Zero(rows, 1), true);
}

template <typename S>
Tensor<S> init_embedding(Rng& rng, Index rows, Index cols) {
  return Tensor<S>::from(init_uniform<S>(rng, rows, cols, 0.1), true);
}

template <typename S>
struct Linear {
  Tensor<S> w;
  Tensor<S> b;

  static Linear make(Rng& rng, Index out, Index in) {
    return {init_weight<S>(rng, out, in), init_bias<S>(out)};
  }

  Tensor<S> operator()(const Tensor<S>& x) const {
    return add(matmul(w, x), b);
  }

  void manifest(std::vector<NamedParam<S>>& out, const std::string& name) {
    out.push_back({name + ".w", w});
    out.push_back({name + ".b", b});
  }
};

// Single weight block for all four gates, input [x; h], gate order i,f,g,o.
template <typename S>
struct LstmParams {
  Tensor<S> w;  // 4h x (in + h)
  Tensor<S> b;  // 4h x 1
  Index hidden = 0;

  static LstmParams make(Rng& rng, Index hidden, Index input) {
    return {init_weight<S>(rng, 4 * hidden, input + hidden),
            init_bias<S>(4 * hidden), hidden};
  }

  void manifest(std::vector<NamedParam<S>>& out, const std::string& name) {
    out.push_back({name + ".w", w});
    out.push_back({name + ".b", b});
  }
};

template <typename S>
struct LstmState {
  Tensor<S> h;
  Tensor<S> c;
};

template <typename S>
LstmState<S> lstm_cell(const LstmParams<S>& p, const Tensor<S>& x,
                       const LstmState<S>& prev) {
  Index h = p.hidden;
  auto gates = add(matmul(p.w, concat_rows(x, prev.h)), p.b);
  auto i = sigmoid(slice_rows(gates, 0, h));
  auto f = sigmoid(slice_rows(gates, h, h));
  auto g = tanh(slice_rows(gates, 2 * h, h));
  auto o = sigmoid(slice_rows(gates, 3 * h, h));
  auto c = add(cwise_mul(f, prev.c), cwise_mul(i, g));
  return {cwise_mul(o, tanh(c)), c};
}

template <typename S>
LstmState<S> lstm_zero_state(Index hidden) {
  return {Tensor<S>::zeros(hidden, 1), Tensor<S>::zeros(hidden, 1)};
}

// Bidirectional encoder: forward and backward passes concatenate to 2h per
// step, then a learned projection brings each state back to width h.
template <typename S>
struct BiLstmParams {
  LstmParams<S> fwd;
  LstmParams<S> bwd;
  Linear<S> proj;  // h x 2h

  static BiLstmParams make(Rng& rng, Index hidden, Index input) {
    return {LstmParams<S>::make(rng, hidden, input),
            LstmParams<S>::make(rng, hidden, input),
            Linear<S>::make(rng, hidden, 2 * hidden)};
  }

  void manifest(std::vector<NamedParam<S>>& out, const std::string& name) {
    fwd.manifest(out, name + ".fwd");
    bwd.manifest(out, name + ".bwd");
    proj.manifest(out, name + ".proj");
  }
};

template <typename S>
std::vector<Tensor<S>> bilstm_encode(const BiLstmParams<S>& p,
                                     const std::vector<Tensor<S>>& xs) {
  if (xs.empty()) throw UsageError("bilstm_encode: empty input sequence");
  Index hidden = p.fwd.hidden;
  std::vector<Tensor<S>> forward;
  forward.reserve(xs.size());
  LstmState<S> state = lstm_zero_state<S>(hidden);
  for (const auto& x : xs) {
    state = lstm_cell(p.fwd, x, state);
    forward.push_back(state.h);
  }
  std::vector<Tensor<S>> backward(xs.size());
  state = lstm_zero_state<S>(hidden);
  for (std::size_t i = xs.size(); i-- > 0;) {
    state = lstm_cell(p.bwd, xs[i], state);
    backward[i] = state.h;
  }
  std::vector<Tensor<S>> states;
  states.reserve(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) {
    states.push_back(p.proj(concat_rows(forward[i], backward[i])));
  }
  return states;
}

// score_i = v . tanh(W h_i); weights softmax over steps; output is the
// weighted sum of the states.
template <typename S>
struct SelfAttentionParams {
  Tensor<S> w;  // h x h
  Tensor<S> v;  // 1 x h

  static SelfAttentionParams make(Rng& rng, Index hidden) {
    return {init_weight<S>(rng, hidden, hidden),
            init_weight<S>(rng, 1, hidden)};
  }

  void manifest(std::vector<NamedParam<S>>& out, const std::string& name) {
    out.push_back({name + ".w", w});
    out.push_back({name + ".v", v});
  }
};

template <typename S>
struct AttendedContext {
  Tensor<S> context;  // h x 1
  Tensor<S> weights;  // T x 1, on the simplex
};

template <typename S>
AttendedContext<S> self_attend(const SelfAttentionParams<S>& p,
                               const std::vector<Tensor<S>>& states) {
  if (states.empty()) throw UsageError("self_attend: empty state sequence");
  std::vector<Tensor<S>> scores;
  scores.reserve(states.size());
  for (const auto& h : states) {
    scores.push_back(matmul(p.v, tanh(matmul(p.w, h))));
  }
  auto weights = softmax(concat_rows(scores));
  auto stacked = concat_cols(states);  // h x T
  return {matmul(stacked, weights), weights};
}

}  // namespace dfnet

#endif  // DFNET_LAYERS_HPP
