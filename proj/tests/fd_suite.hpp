#ifndef DFNET_TESTS_FD_SUITE_HPP
#define DFNET_TESTS_FD_SUITE_HPP

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "dfnet/gradcheck.hpp"
#include "dfnet/ops.hpp"
#include "dfnet/rng.hpp"

// Finite-difference sweep over every differentiable primitive. Shared by
// the unit tests (a couple of seeds) and the acceptance gate (ten seeds).
// gradient_reversal is absent on purpose: its forward pass is the identity,
// so finite differences cannot see the flipped backward; its contract is
// asserted directly in the unit tests.

namespace dfnet_tests {

using dfnet::Index;
using dfnet::Mat;
using dfnet::NamedParam;
using dfnet::Rng;
using dfnet::Tensor;

inline Mat<double> rand_mat(Rng& rng, Index r, Index c, double lo, double hi) {
  Mat<double> m(r, c);
  for (Index i = 0; i < r; ++i)
    for (Index j = 0; j < c; ++j) m(i, j) = rng.uniform(lo, hi);
  return m;
}

// Entries kept away from zero so kinked activations stay locally smooth.
inline Mat<double> rand_mat_away_from_zero(Rng& rng, Index r, Index c) {
  Mat<double> m(r, c);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < c; ++j) {
      double mag = rng.uniform(0.05, 0.5);
      m(i, j) = rng.bernoulli(0.5) ? mag : -mag;
    }
  }
  return m;
}

// Per-column entries separated enough that the FD step cannot flip an
// argmax inside max_pool_rows.
inline Mat<double> rand_mat_column_gapped(Rng& rng, Index r, Index c) {
  for (;;) {
    Mat<double> m = rand_mat(rng, r, c, -0.5, 0.5);
    bool ok = true;
    for (Index j = 0; j < c && ok; ++j) {
      for (Index i = 0; i < r && ok; ++i) {
        for (Index k = i + 1; k < r && ok; ++k) {
          if (std::abs(m(i, j) - m(k, j)) < 1e-3) ok = false;
        }
      }
    }
    if (ok) return m;
  }
}

struct FdEntry {
  std::string op;
  double max_rel_error;
};

inline std::vector<FdEntry> run_primitive_fd_checks(std::uint64_t seed) {
  namespace d = dfnet;
  std::vector<FdEntry> out;
  Rng rng(seed);

  auto check = [&](const std::string& name,
                   std::vector<NamedParam<double>> params,
                   const std::function<Tensor<double>()>& f) {
    auto report = d::check_gradients<double>(f, params);
    out.push_back({name, report.max_rel_error});
  };

  auto param = [&](const char* n, Mat<double> v) {
    return NamedParam<double>{n, Tensor<double>::from(std::move(v), true)};
  };

  {
    auto a = param("a", rand_mat(rng, 3, 2, -0.5, 0.5));
    auto b = param("b", rand_mat(rng, 3, 2, -0.5, 0.5));
    Mat<double> c = rand_mat(rng, 3, 2, -1.0, 1.0);
    check("add", {a, b}, [=] {
      return d::sum(d::cwise_mul(d::add(a.tensor, b.tensor),
                                 d::constant<double>(c)));
    });
    check("sub", {a, b}, [=] {
      return d::sum(d::cwise_mul(d::sub(a.tensor, b.tensor),
                                 d::constant<double>(c)));
    });
    check("cwise_mul", {a, b}, [=] {
      return d::sum(d::cwise_mul(d::cwise_mul(a.tensor, b.tensor),
                                 d::constant<double>(c)));
    });
    check("scale", {a}, [=] {
      return d::sum(d::cwise_mul(d::scale(a.tensor, 1.7),
                                 d::constant<double>(c)));
    });
  }
  {
    auto a = param("a", rand_mat(rng, 3, 2, -0.5, 0.5));
    auto s = param("s", rand_mat(rng, 1, 1, 0.2, 0.9));
    Mat<double> c = rand_mat(rng, 3, 2, -1.0, 1.0);
    check("scale_by", {a, s}, [=] {
      return d::sum(d::cwise_mul(d::scale_by(a.tensor, s.tensor),
                                 d::constant<double>(c)));
    });
  }
  {
    auto a = param("a", rand_mat(rng, 3, 4, -0.5, 0.5));
    auto b = param("b", rand_mat(rng, 4, 2, -0.5, 0.5));
    Mat<double> c = rand_mat(rng, 3, 2, -1.0, 1.0);
    check("matmul", {a, b}, [=] {
      return d::sum(d::cwise_mul(d::matmul(a.tensor, b.tensor),
                                 d::constant<double>(c)));
    });
    Mat<double> ct = rand_mat(rng, 4, 3, -1.0, 1.0);
    check("transpose", {a}, [=] {
      return d::sum(d::cwise_mul(d::transpose(a.tensor),
                                 d::constant<double>(ct)));
    });
  }
  {
    auto a = param("a", rand_mat(rng, 2, 3, -0.5, 0.5));
    auto b = param("b", rand_mat(rng, 4, 3, -0.5, 0.5));
    Mat<double> c = rand_mat(rng, 6, 3, -1.0, 1.0);
    check("concat_rows", {a, b}, [=] {
      return d::sum(d::cwise_mul(d::concat_rows(a.tensor, b.tensor),
                                 d::constant<double>(c)));
    });
  }
  {
    auto a = param("a", rand_mat(rng, 3, 2, -0.5, 0.5));
    auto b = param("b", rand_mat(rng, 3, 4, -0.5, 0.5));
    Mat<double> c = rand_mat(rng, 3, 6, -1.0, 1.0);
    check("concat_cols", {a, b}, [=] {
      return d::sum(d::cwise_mul(
          d::concat_cols<double>({a.tensor, b.tensor}),
          d::constant<double>(c)));
    });
  }
  {
    auto a = param("a", rand_mat(rng, 6, 2, -0.5, 0.5));
    Mat<double> c = rand_mat(rng, 3, 2, -1.0, 1.0);
    check("slice_rows", {a}, [=] {
      return d::sum(d::cwise_mul(d::slice_rows(a.tensor, 2, 3),
                                 d::constant<double>(c)));
    });
  }
  {
    auto a = param("a", rand_mat(rng, 4, 3, -1.0, 1.0));
    Mat<double> c = rand_mat(rng, 4, 3, -1.0, 1.0);
    check("tanh", {a}, [=] {
      return d::sum(d::cwise_mul(d::tanh(a.tensor), d::constant<double>(c)));
    });
    check("sigmoid", {a}, [=] {
      return d::sum(d::cwise_mul(d::sigmoid(a.tensor),
                                 d::constant<double>(c)));
    });
  }
  {
    auto a = param("a", rand_mat_away_from_zero(rng, 4, 3));
    Mat<double> c = rand_mat(rng, 4, 3, -1.0, 1.0);
    check("leaky_relu", {a}, [=] {
      return d::sum(d::cwise_mul(d::leaky_relu(a.tensor, 0.01),
                                 d::constant<double>(c)));
    });
  }
  {
    auto a = param("a", rand_mat(rng, 5, 1, -1.0, 1.0));
    Mat<double> c = rand_mat(rng, 5, 1, -1.0, 1.0);
    check("softmax", {a}, [=] {
      return d::sum(d::cwise_mul(d::softmax(a.tensor),
                                 d::constant<double>(c)));
    });
    check("pick_neg_log", {a}, [=] {
      return d::pick_neg_log(d::softmax(a.tensor), 2);
    });
  }
  {
    auto a = param("a", rand_mat(rng, 3, 2, 0.2, 2.0));
    Mat<double> c = rand_mat(rng, 3, 2, -1.0, 1.0);
    check("log", {a}, [=] {
      return d::sum(d::cwise_mul(d::log(a.tensor), d::constant<double>(c)));
    });
  }
  {
    auto table = param("table", rand_mat(rng, 6, 4, -0.5, 0.5));
    Mat<double> c = rand_mat(rng, 4, 1, -1.0, 1.0);
    check("embed", {table}, [=] {
      return d::sum(d::cwise_mul(d::embed(table.tensor, 3),
                                 d::constant<double>(c)));
    });
    std::vector<Index> bag{0, 2, 2, 5};
    check("bag_embed", {table}, [=] {
      return d::sum(d::cwise_mul(d::bag_embed(table.tensor, bag),
                                 d::constant<double>(c)));
    });
  }
  {
    auto a = param("a", rand_mat(rng, 4, 3, -0.5, 0.5));
    Mat<double> c = rand_mat(rng, 4, 3, -1.0, 1.0);
    std::uint64_t mask_seed = seed ^ 0xD00Full;
    check("dropout", {a}, [=] {
      Rng mask_rng(mask_seed);
      return d::sum(d::cwise_mul(d::dropout(a.tensor, 0.4, mask_rng, true),
                                 d::constant<double>(c)));
    });
  }
  {
    auto x = param("x", rand_mat(rng, 4, 1, -2.0, 2.0));
    Mat<double> t(4, 1);
    for (Index i = 0; i < 4; ++i) t(i, 0) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    check("bce_loss", {x}, [=] {
      return d::bce_loss(d::sigmoid(x.tensor), t);
    });
  }
  {
    auto a = param("a", rand_mat_column_gapped(rng, 5, 3));
    Mat<double> c = rand_mat(rng, 3, 1, -1.0, 1.0);
    check("max_pool_rows", {a}, [=] {
      return d::sum(d::cwise_mul(d::max_pool_rows(a.tensor),
                                 d::constant<double>(c)));
    });
  }
  {
    auto x = param("x", rand_mat(rng, 5, 3, -0.5, 0.5));
    auto k = param("k", rand_mat(rng, 9, 2, -0.5, 0.5));
    auto b = param("b", rand_mat(rng, 2, 1, -0.5, 0.5));
    Mat<double> c = rand_mat(rng, 5, 2, -1.0, 1.0);
    check("conv1d_w3", {x, k, b}, [=] {
      return d::sum(d::cwise_mul(d::conv1d_w3(x.tensor, k.tensor, b.tensor),
                                 d::constant<double>(c)));
    });
  }
  {
    auto a = param("a", rand_mat(rng, 3, 3, -0.5, 0.5));
    auto b = param("b", rand_mat(rng, 3, 3, -0.5, 0.5));
    auto e = param("e", rand_mat(rng, 3, 3, -0.5, 0.5));
    Mat<double> c = rand_mat(rng, 3, 3, -1.0, 1.0);
    check("sum", {a}, [=] { return d::sum(a.tensor); });
    check("add_n", {a, b, e}, [=] {
      return d::sum(d::cwise_mul(
          d::add_n<double>({a.tensor, b.tensor, e.tensor}),
          d::constant<double>(c)));
    });
  }
  {
    // Composite chain touching most ops at once, including reuse of one
    // tensor along two paths.
    auto w1 = param("w1", rand_mat(rng, 4, 3, -0.4, 0.4));
    auto b1 = param("b1", rand_mat(rng, 4, 1, -0.4, 0.4));
    auto w2 = param("w2", rand_mat(rng, 5, 8, -0.4, 0.4));
    auto x = param("x", rand_mat(rng, 3, 1, -0.4, 0.4));
    Mat<double> tgt(4, 1);
    for (Index i = 0; i < 4; ++i) tgt(i, 0) = rng.bernoulli(0.5) ? 1.0 : 0.0;
    check("composite_chain", {w1, b1, w2, x}, [=] {
      auto h = d::add(d::matmul(w1.tensor, x.tensor), b1.tensor);
      auto act = d::leaky_relu(h, 0.01);
      auto both = d::concat_rows(act, d::tanh(h));
      auto p = d::softmax(d::matmul(w2.tensor, both));
      auto nll = d::pick_neg_log(p, 1);
      auto gate = d::bce_loss(d::sigmoid(h), tgt);
      return d::add(nll, gate);
    });
  }
  return out;
}

}  // namespace dfnet_tests

#endif  // DFNET_TESTS_FD_SUITE_HPP
