#ifndef DFNET_OPS_HPP
#define DFNET_OPS_HPP

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dfnet/rng.hpp"
#include "dfnet/tensor.hpp"

// Differentiable primitives. Every op computes eagerly and, when a tape is
// active on this thread, records a closure that routes the output delta to
// the inputs. Outputs are intermediates: requires_grad stays false, and the
// final flush in Tape::backward touches only leaf tensors that asked for it.

namespace dfnet {

// Count of probability clamps applied inside pick_neg_log / bce_loss.
// Nonzero counts after a training run indicate saturated outputs.
inline std::atomic<std::uint64_t>& clamp_events() {
  static std::atomic<std::uint64_t> n{0};
  return n;
}

namespace detail {

template <typename S>
void require_same_shape(const Tensor<S>& a, const Tensor<S>& b,
                        const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " +
                         std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " +
                         std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

template <typename S, typename BackFn>
void record(Tensor<S> out, std::vector<Tensor<S>> inputs, BackFn&& back) {
  if (Tape<S>* t = Tape<S>::active()) {
    t->record(std::move(out), std::move(inputs),
              typename Tape<S>::BackwardFn(std::forward<BackFn>(back)));
  }
}

}  // namespace detail

template <typename S>
Tensor<S> constant(Mat<S> m) {
  return Tensor<S>::from(std::move(m), false);
}

template <typename S>
Tensor<S> add(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "add");
  auto out = Tensor<S>::from(a.value() + b.value(), false, "add");
  detail::record(out, {a, b}, [a, b](const Mat<S>& dy, GradStore<S>& g) {
    g.of(a) += dy;
    g.of(b) += dy;
  });
  return out;
}

template <typename S>
Tensor<S> sub(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "sub");
  auto out = Tensor<S>::from(a.value() - b.value(), false, "sub");
  detail::record(out, {a, b}, [a, b](const Mat<S>& dy, GradStore<S>& g) {
    g.of(a) += dy;
    g.of(b) -= dy;
  });
  return out;
}

template <typename S>
Tensor<S> cwise_mul(const Tensor<S>& a, const Tensor<S>& b) {
  detail::require_same_shape(a, b, "cwise_mul");
  auto out = Tensor<S>::from(a.value().cwiseProduct(b.value()), false,
                             "cwise_mul");
  detail::record(out, {a, b}, [a, b](const Mat<S>& dy, GradStore<S>& g) {
    g.of(a) += dy.cwiseProduct(b.value());
    g.of(b) += dy.cwiseProduct(a.value());
  });
  return out;
}

template <typename S>
Tensor<S> scale(const Tensor<S>& a, S c) {
  auto out = Tensor<S>::from(a.value() * c, false, "scale");
  detail::record(out, {a}, [a, c](const Mat<S>& dy, GradStore<S>& g) {
    g.of(a) += dy * c;
  });
  return out;
}

// Multiply every entry of a by a 1x1 tensor; the scalar receives gradient.
template <typename S>
Tensor<S> scale_by(const Tensor<S>& a, const Tensor<S>& s) {
  if (s.size() != 1) throw DimensionError("scale_by: scalar must be 1x1");
  auto out = Tensor<S>::from(a.value() * s.value()(0, 0), false, "scale_by");
  detail::record(out, {a, s}, [a, s](const Mat<S>& dy, GradStore<S>& g) {
    g.of(a) += dy * s.value()(0, 0);
    g.of(s)(0, 0) += dy.cwiseProduct(a.value()).sum();
  });
  return out;
}

template <typename S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions " + std::to_string(a.cols()) +
                         " vs " + std::to_string(b.rows()));
  }
  auto out = Tensor<S>::from(a.value() * b.value(), false, "matmul");
  detail::record(out, {a, b}, [a, b](const Mat<S>& dy, GradStore<S>& g) {
    g.of(a) += dy * b.value().transpose();
    g.of(b) += a.value().transpose() * dy;
  });
  return out;
}

template <typename S>
Tensor<S> operator*(const Tensor<S>& a, const Tensor<S>& b) {
  return matmul(a, b);
}

template <typename S>
Tensor<S> transpose(const Tensor<S>& a) {
  auto out = Tensor<S>::from(a.value().transpose(), false, "transpose");
  detail::record(out, {a}, [a](const Mat<S>& dy, GradStore<S>& g) {
    g.of(a) += dy.transpose();
  });
  return out;
}

template <typename S>
Tensor<S> concat_rows(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw DomainError("concat_rows: empty input");
  Index cols = parts.front().cols();
  Index rows = 0;
  for (const auto& p : parts) {
    if (p.cols() != cols) throw DimensionError("concat_rows: column mismatch");
    rows += p.rows();
  }
  Mat<S> v(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    v.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  auto out = Tensor<S>::from(std::move(v), false, "concat_rows");
  detail::record(out, parts, [parts](const Mat<S>& dy, GradStore<S>& g) {
    Index at = 0;
    for (const auto& p : parts) {
      g.of(p) += dy.middleRows(at, p.rows());
      at += p.rows();
    }
  });
  return out;
}

template <typename S>
Tensor<S> concat_rows(const Tensor<S>& a, const Tensor<S>& b) {
  return concat_rows<S>({a, b});
}

template <typename S>
Tensor<S> concat_cols(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw DomainError("concat_cols: empty input");
  Index rows = parts.front().rows();
  Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows) throw DimensionError("concat_cols: row mismatch");
    cols += p.cols();
  }
  Mat<S> v(rows, cols);
  Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  auto out = Tensor<S>::from(std::move(v), false, "concat_cols");
  detail::record(out, parts, [parts](const Mat<S>& dy, GradStore<S>& g) {
    Index at = 0;
    for (const auto& p : parts) {
      g.of(p) += dy.middleCols(at, p.cols());
      at += p.cols();
    }
  });
  return out;
}

template <typename S>
Tensor<S> slice_rows(const Tensor<S>& a, Index start, Index len) {
  if (start < 0 || len < 0 || start + len > a.rows()) {
    throw DimensionError("slice_rows: range [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of " +
                         std::to_string(a.rows()) + " rows");
  }
  auto out =
      Tensor<S>::from(a.value().middleRows(start, len), false, "slice_rows");
  detail::record(out, {a}, [a, start, len](const Mat<S>& dy, GradStore<S>& g) {
    g.of(a).middleRows(start, len) += dy;
  });
  return out;
}

template <typename S>
Tensor<S> tanh(const Tensor<S>& a) {
  Mat<S> v = a.value().array().tanh().matrix();
  auto out = Tensor<S>::from(std::move(v), false, "tanh");
  detail::record(out, {a}, [a, out](const Mat<S>& dy, GradStore<S>& g) {
    g.of(a) +=
        dy.cwiseProduct((Mat<S>::Ones(out.rows(), out.cols()) -
                         out.value().cwiseProduct(out.value())));
  });
  return out;
}

template <typename S>
Tensor<S> sigmoid(const Tensor<S>& a) {
  Mat<S> v = a.value().unaryExpr([](S x) {
    if (x >= S(0)) {
      S e = std::exp(-x);
      return S(1) / (S(1) + e);
    }
    S e = std::exp(x);
    return e / (S(1) + e);
  });
  auto out = Tensor<S>::from(std::move(v), false, "sigmoid");
  detail::record(out, {a}, [a, out](const Mat<S>& dy, GradStore<S>& g) {
    const Mat<S>& s = out.value();
    g.of(a) += dy.cwiseProduct(
        s.cwiseProduct(Mat<S>::Ones(s.rows(), s.cols()) - s));
  });
  return out;
}

template <typename S>
Tensor<S> leaky_relu(const Tensor<S>& a, S slope = S(0.01)) {
  Mat<S> v = a.value().unaryExpr(
      [slope](S x) { return x > S(0) ? x : slope * x; });
  auto out = Tensor<S>::from(std::move(v), false, "leaky_relu");
  detail::record(out, {a}, [a, slope](const Mat<S>& dy, GradStore<S>& g) {
    Mat<S> mask = a.value().unaryExpr(
        [slope](S x) { return x > S(0) ? S(1) : slope; });
    g.of(a) += dy.cwiseProduct(mask);
  });
  return out;
}

// Softmax over the rows of a column vector. Shifted by the max entry.
template <typename S>
Tensor<S> softmax(const Tensor<S>& a) {
  if (a.cols() != 1) throw DimensionError("softmax: expects a column vector");
  if (a.rows() == 0) throw DomainError("softmax: empty input");
  S m = a.value().maxCoeff();
  Mat<S> e = (a.value().array() - m).exp().matrix();
  S z = e.sum();
  Mat<S> v = e / z;
  auto out = Tensor<S>::from(std::move(v), false, "softmax");
  detail::record(out, {a}, [a, out](const Mat<S>& dy, GradStore<S>& g) {
    const Mat<S>& s = out.value();
    S dot = dy.cwiseProduct(s).sum();
    g.of(a) += s.cwiseProduct(dy - Mat<S>::Constant(s.rows(), 1, dot));
  });
  return out;
}

template <typename S>
Tensor<S> log(const Tensor<S>& a) {
  Mat<S> v = a.value().array().log().matrix();
  auto out = Tensor<S>::from(std::move(v), false, "log");
  detail::record(out, {a}, [a](const Mat<S>& dy, GradStore<S>& g) {
    g.of(a) += dy.cwiseQuotient(a.value());
  });
  return out;
}

// Row lookup into an embedding table (rows = vocabulary). Returns a column.
template <typename S>
Tensor<S> embed(const Tensor<S>& table, Index row) {
  if (row < 0 || row >= table.rows()) {
    throw DimensionError("embed: row " + std::to_string(row) + " out of " +
                         std::to_string(table.rows()));
  }
  auto out =
      Tensor<S>::from(table.value().row(row).transpose(), false, "embed");
  detail::record(out, {table}, [table, row](const Mat<S>& dy, GradStore<S>& g) {
    g.of(table).row(row) += dy.transpose();
  });
  return out;
}

// Sum of several table rows (bag of words). Returns a column.
template <typename S>
Tensor<S> bag_embed(const Tensor<S>& table, const std::vector<Index>& rows) {
  if (rows.empty()) throw DomainError("bag_embed: empty bag");
  Mat<S> v = Mat<S>::Zero(table.cols(), 1);
  for (Index r : rows) {
    if (r < 0 || r >= table.rows()) {
      throw DimensionError("bag_embed: row " + std::to_string(r) + " out of " +
                           std::to_string(table.rows()));
    }
    v += table.value().row(r).transpose();
  }
  auto out = Tensor<S>::from(std::move(v), false, "bag_embed");
  detail::record(out, {table},
                 [table, rows](const Mat<S>& dy, GradStore<S>& g) {
                   Mat<S>& dt = g.of(table);
                   for (Index r : rows) dt.row(r) += dy.transpose();
                 });
  return out;
}

// Inverted dropout: kept entries are scaled by 1/(1-p) so the expected
// value matches the inference path. Identity when not training or p == 0.
template <typename S>
Tensor<S> dropout(const Tensor<S>& a, double p, Rng& rng, bool training) {
  if (p < 0.0 || p >= 1.0) throw UsageError("dropout: p must be in [0,1)");
  if (!training || p == 0.0) return a;
  S keep_scale = S(1.0 / (1.0 - p));
  Mat<S> mask(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    for (Index j = 0; j < a.cols(); ++j) {
      mask(i, j) = rng.bernoulli(1.0 - p) ? keep_scale : S(0);
    }
  }
  auto out =
      Tensor<S>::from(a.value().cwiseProduct(mask), false, "dropout");
  detail::record(out, {a},
                 [a, mask = std::move(mask)](const Mat<S>& dy,
                                             GradStore<S>& g) {
                   g.of(a) += dy.cwiseProduct(mask);
                 });
  return out;
}

// -log(p[index]) for a probability column vector; p is clamped below at
// 1e-12 before the log, and a clamped pick contributes zero gradient.
template <typename S>
Tensor<S> pick_neg_log(const Tensor<S>& p, Index index) {
  if (p.cols() != 1) throw DimensionError("pick_neg_log: expects a column");
  if (index < 0 || index >= p.rows()) {
    throw DimensionError("pick_neg_log: index " + std::to_string(index) +
                         " out of " + std::to_string(p.rows()));
  }
  constexpr S kEps = S(1e-12);
  S pv = p.value()(index, 0);
  bool clamped = pv < kEps;
  if (clamped) clamp_events().fetch_add(1, std::memory_order_relaxed);
  S safe = clamped ? kEps : pv;
  auto out = Tensor<S>::scalar(-std::log(safe));
  detail::record(out, {p},
                 [p, index, safe, clamped](const Mat<S>& dy, GradStore<S>& g) {
                   if (!clamped) g.of(p)(index, 0) += -dy(0, 0) / safe;
                 });
  return out;
}

// Summed binary cross entropy against fixed targets in [0,1]. Predictions
// are clamped into [1e-12, 1-1e-12]; clamped entries get zero gradient.
template <typename S>
Tensor<S> bce_loss(const Tensor<S>& p, const Mat<S>& target) {
  if (p.rows() != target.rows() || p.cols() != target.cols()) {
    throw DimensionError("bce_loss: prediction/target shape mismatch");
  }
  constexpr S kEps = S(1e-12);
  S total = S(0);
  Mat<S> safe = p.value();
  std::uint64_t clamps = 0;
  for (Index i = 0; i < safe.rows(); ++i) {
    for (Index j = 0; j < safe.cols(); ++j) {
      S v = safe(i, j);
      if (v < kEps || v > S(1) - kEps) {
        ++clamps;
        v = std::min(std::max(v, kEps), S(1) - kEps);
        safe(i, j) = v;
      }
      S t = target(i, j);
      total -= t * std::log(v) + (S(1) - t) * std::log(S(1) - v);
    }
  }
  if (clamps) clamp_events().fetch_add(clamps, std::memory_order_relaxed);
  auto out = Tensor<S>::scalar(total);
  detail::record(
      out, {p},
      [p, target, safe = std::move(safe)](const Mat<S>& dy, GradStore<S>& g) {
        constexpr S kEps2 = S(1e-12);
        Mat<S>& dp = g.of(p);
        for (Index i = 0; i < safe.rows(); ++i) {
          for (Index j = 0; j < safe.cols(); ++j) {
            S v = p.value()(i, j);
            if (v < kEps2 || v > S(1) - kEps2) continue;
            S t = target(i, j);
            dp(i, j) += dy(0, 0) * (-t / v + (S(1) - t) / (S(1) - v));
          }
        }
      });
  return out;
}

// Column-wise max over the rows of a T x c matrix; returns c x 1.
template <typename S>
Tensor<S> max_pool_rows(const Tensor<S>& a) {
  if (a.rows() == 0) throw DomainError("max_pool_rows: empty input");
  Mat<S> v(a.cols(), 1);
  std::vector<Index> arg(static_cast<std::size_t>(a.cols()));
  for (Index j = 0; j < a.cols(); ++j) {
    Index best = 0;
    for (Index i = 1; i < a.rows(); ++i) {
      if (a.value()(i, j) > a.value()(best, j)) best = i;
    }
    arg[static_cast<std::size_t>(j)] = best;
    v(j, 0) = a.value()(best, j);
  }
  auto out = Tensor<S>::from(std::move(v), false, "max_pool_rows");
  detail::record(out, {a},
                 [a, arg = std::move(arg)](const Mat<S>& dy, GradStore<S>& g) {
                   Mat<S>& da = g.of(a);
                   for (Index j = 0; j < a.cols(); ++j) {
                     da(arg[static_cast<std::size_t>(j)], j) += dy(j, 0);
                   }
                 });
  return out;
}

// Width-3 convolution over the rows of a T x c_in matrix with zero padding,
// fused bias. Kernel layout: rows [left; center; right], each c_in tall.
template <typename S>
Tensor<S> conv1d_w3(const Tensor<S>& x, const Tensor<S>& kernel,
                    const Tensor<S>& bias) {
  Index t_len = x.rows();
  Index c_in = x.cols();
  if (kernel.rows() != 3 * c_in) {
    throw DimensionError("conv1d_w3: kernel rows must be 3*c_in");
  }
  Index c_out = kernel.cols();
  if (bias.rows() != c_out || bias.cols() != 1) {
    throw DimensionError("conv1d_w3: bias must be c_out x 1");
  }
  Mat<S> v(t_len, c_out);
  auto window = [&](Index t) {
    Mat<S> w = Mat<S>::Zero(1, 3 * c_in);
    if (t - 1 >= 0) w.middleCols(0, c_in) = x.value().row(t - 1);
    w.middleCols(c_in, c_in) = x.value().row(t);
    if (t + 1 < t_len) w.middleCols(2 * c_in, c_in) = x.value().row(t + 1);
    return w;
  };
  for (Index t = 0; t < t_len; ++t) {
    v.row(t) = window(t) * kernel.value() + bias.value().transpose();
  }
  auto out = Tensor<S>::from(std::move(v), false, "conv1d_w3");
  detail::record(
      out, {x, kernel, bias},
      [x, kernel, bias, t_len, c_in](const Mat<S>& dy, GradStore<S>& g) {
        Mat<S>& dx = g.of(x);
        Mat<S>& dk = g.of(kernel);
        Mat<S>& db = g.of(bias);
        const Mat<S>& k = kernel.value();
        for (Index t = 0; t < t_len; ++t) {
          Mat<S> w = Mat<S>::Zero(1, 3 * c_in);
          if (t - 1 >= 0) w.middleCols(0, c_in) = x.value().row(t - 1);
          w.middleCols(c_in, c_in) = x.value().row(t);
          if (t + 1 < t_len) w.middleCols(2 * c_in, c_in) = x.value().row(t + 1);
          dk += w.transpose() * dy.row(t);
          db += dy.row(t).transpose();
          Mat<S> dw = dy.row(t) * k.transpose();
          if (t - 1 >= 0) dx.row(t - 1) += dw.middleCols(0, c_in);
          dx.row(t) += dw.middleCols(c_in, c_in);
          if (t + 1 < t_len) dx.row(t + 1) += dw.middleCols(2 * c_in, c_in);
        }
      });
  return out;
}

template <typename S>
Tensor<S> sum(const Tensor<S>& a) {
  auto out = Tensor<S>::scalar(a.value().sum());
  detail::record(out, {a}, [a](const Mat<S>& dy, GradStore<S>& g) {
    g.of(a) += Mat<S>::Constant(a.rows(), a.cols(), dy(0, 0));
  });
  return out;
}

template <typename S>
Tensor<S> add_n(const std::vector<Tensor<S>>& parts) {
  if (parts.empty()) throw DomainError("add_n: empty input");
  Mat<S> v = parts.front().value();
  for (std::size_t i = 1; i < parts.size(); ++i) {
    detail::require_same_shape(parts.front(), parts[i], "add_n");
    v += parts[i].value();
  }
  auto out = Tensor<S>::from(std::move(v), false, "add_n");
  detail::record(out, parts, [parts](const Mat<S>& dy, GradStore<S>& g) {
    for (const auto& p : parts) g.of(p) += dy;
  });
  return out;
}

// Identity forward; backward multiplies the delta by -lambda.
template <typename S>
Tensor<S> gradient_reversal(const Tensor<S>& a, S lambda) {
  auto out = Tensor<S>::from(a.value(), false, "gradient_reversal");
  detail::record(out, {a}, [a, lambda](const Mat<S>& dy, GradStore<S>& g) {
    g.of(a) += dy * (-lambda);
  });
  return out;
}

// Index of the largest entry in a column vector. Plain utility, no grad.
template <typename S>
Index argmax(const Mat<S>& v) {
  if (v.cols() != 1 || v.rows() == 0) {
    throw DimensionError("argmax: expects a nonempty column vector");
  }
  Index best = 0;
  for (Index i = 1; i < v.rows(); ++i) {
    if (v(i, 0) > v(best, 0)) best = i;
  }
  return best;
}

}  // namespace dfnet

#endif  // DFNET_OPS_HPP
