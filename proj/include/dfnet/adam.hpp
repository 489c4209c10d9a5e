#ifndef DFNET_ADAM_HPP
#define DFNET_ADAM_HPP

#include <cmath>
#include <string>
#include <vector>

#include "dfnet/tensor.hpp"

namespace dfnet {

template <typename S>
struct NamedParam {
  std::string name;
  Tensor<S> tensor;
};

template <typename S>
struct AdamConfig {
  S lr = S(0.001);
  S beta1 = S(0.9);
  S beta2 = S(0.999);
  S eps = S(1e-8);
};

// First/second moment estimates, one slot per parameter, laid out in the
// same order as the parameter list handed to adam_step.
template <typename S>
struct AdamState {
  std::vector<Mat<S>> m;
  std::vector<Mat<S>> v;
  long step = 0;

  void reset(const std::vector<NamedParam<S>>& params) {
    m.clear();
    v.clear();
    step = 0;
    m.reserve(params.size());
    v.reserve(params.size());
    for (const auto& p : params) {
      m.push_back(Mat<S>::Zero(p.tensor.rows(), p.tensor.cols()));
      v.push_back(Mat<S>::Zero(p.tensor.rows(), p.tensor.cols()));
    }
  }
};

template <typename S>
void zero_grads(std::vector<NamedParam<S>>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

// Global-norm gradient clipping. Returns the pre-clip norm.
template <typename S>
S clip_grad_norm(std::vector<NamedParam<S>>& params, S max_norm) {
  S sq = S(0);
  for (auto& p : params) sq += p.tensor.grad().squaredNorm();
  S norm = std::sqrt(sq);
  if (norm > max_norm && norm > S(0)) {
    S f = max_norm / norm;
    for (auto& p : params) p.tensor.grad() *= f;
  }
  return norm;
}

// One Adam update with bias correction. The state must have been reset
// against this exact parameter list.
template <typename S>
void adam_step(std::vector<NamedParam<S>>& params, AdamState<S>& state,
               const AdamConfig<S>& cfg) {
  if (state.m.size() != params.size()) {
    throw UsageError("adam_step: state not initialized for this param list");
  }
  state.step += 1;
  S bc1 = S(1) - std::pow(cfg.beta1, S(state.step));
  S bc2 = S(1) - std::pow(cfg.beta2, S(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<S>& t = params[i].tensor;
    const Mat<S>& grad = t.grad();
    if (grad.rows() != t.rows() || grad.cols() != t.cols()) {
      throw UsageError("adam_step: gradient shape mismatch for " +
                       params[i].name);
    }
    Mat<S>& m = state.m[i];
    Mat<S>& v = state.v[i];
    m = cfg.beta1 * m + (S(1) - cfg.beta1) * grad;
    v = cfg.beta2 * v + (S(1) - cfg.beta2) * grad.cwiseProduct(grad);
    Mat<S> m_hat = m / bc1;
    Mat<S> v_hat = v / bc2;
    t.value() -= cfg.lr * m_hat.cwiseQuotient(
                              (v_hat.cwiseSqrt().array() + cfg.eps).matrix());
  }
}

}  // namespace dfnet

#endif  // DFNET_ADAM_HPP
