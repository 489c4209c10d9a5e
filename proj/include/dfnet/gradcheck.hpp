#ifndef DFNET_GRADCHECK_HPP
#define DFNET_GRADCHECK_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "dfnet/adam.hpp"
#include "dfnet/tensor.hpp"

namespace dfnet {

template <typename S>
struct GradCheckReport {
  S max_rel_error = S(0);
  std::string worst_param;
  Index worst_row = 0;
  Index worst_col = 0;
  long entries_checked = 0;

  bool ok(S tol) const { return max_rel_error < tol; }
};

// Central finite differences against the analytic backward pass.
// `f` must rebuild the graph and return the scalar loss each call; it is
// invoked under a fresh tape for the analytic pass and with no tape for
// the perturbed evaluations. Requires a 64-bit scalar: the default step
// drowns in float rounding error. The difference quotient carries rounding
// noise of about machine epsilon times |loss| / step, so entries below
// `denom_floor` are judged on absolute rather than relative error; raise
// the floor when the loss is large.
template <typename S>
GradCheckReport<S> check_gradients(
    const std::function<Tensor<S>()>& f, std::vector<NamedParam<S>>& params,
    S step = S(1e-5), S denom_floor = S(1e-8)) {
  static_assert(sizeof(S) >= 8, "check_gradients needs a 64-bit scalar");
  zero_grads(params);
  {
    Tape<S> tape;
    TapeScope<S> scope(tape);
    Tensor<S> loss = f();
    if (!std::isfinite(static_cast<double>(loss.item()))) {
      throw NumericError("check_gradients: loss is not finite");
    }
    tape.backward(loss);
  }
  std::vector<Mat<S>> analytic;
  analytic.reserve(params.size());
  for (auto& p : params) analytic.push_back(p.tensor.grad());

  GradCheckReport<S> report;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Tensor<S>& t = params[pi].tensor;
    for (Index i = 0; i < t.rows(); ++i) {
      for (Index j = 0; j < t.cols(); ++j) {
        S saved = t.value()(i, j);
        t.value()(i, j) = saved + step;
        S up = f().item();
        t.value()(i, j) = saved - step;
        S down = f().item();
        t.value()(i, j) = saved;
        if (!std::isfinite(static_cast<double>(up)) ||
            !std::isfinite(static_cast<double>(down))) {
          throw NumericError("check_gradients: perturbed loss is not finite");
        }
        S numeric = (up - down) / (S(2) * step);
        S a = analytic[pi](i, j);
        S denom = std::max({std::abs(a), std::abs(numeric), denom_floor});
        S rel = std::abs(a - numeric) / denom;
        report.entries_checked += 1;
        if (rel > report.max_rel_error) {
          report.max_rel_error = rel;
          report.worst_param = params[pi].name;
          report.worst_row = i;
          report.worst_col = j;
        }
      }
    }
  }
  return report;
}

}  // namespace dfnet

#endif  // DFNET_GRADCHECK_HPP
