#ifndef DFNET_TENSOR_HPP
#define DFNET_TENSOR_HPP

#include <Eigen/Dense>
#include <atomic>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "dfnet/error.hpp"

namespace dfnet {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

using Index = Eigen::Index;

// Runtime toggle for NaN/Inf detection on every produced value.
// Default: on in debug builds, off in release; tests flip it explicitly.
inline std::atomic<bool>& finite_checks() {
#ifdef NDEBUG
  static std::atomic<bool> enabled{false};
#else
  static std::atomic<bool> enabled{true};
#endif
  return enabled;
}

// Tensors are dense 2-D values (scalars are 1x1, vectors are n x 1).
// A Tensor is a cheap shared handle: copies alias the same storage, which
// is what lets the tape hold the graph alive across the backward pass.
template <typename S>
class Tensor {
 public:
  struct Data {
    Mat<S> value;
    Mat<S> grad;  // allocated lazily; same shape as value once touched
    bool requires_grad = false;
  };

  Tensor() = default;

  static Tensor from(Mat<S> value, bool requires_grad = false,
                     const char* where = nullptr) {
    if (finite_checks().load(std::memory_order_relaxed) &&
        !value.allFinite()) {
      throw NumericError(std::string("non-finite value produced") +
                         (where ? std::string(" in ") + where : ""));
    }
    Tensor t;
    t.data_ = std::make_shared<Data>();
    t.data_->value = std::move(value);
    t.data_->requires_grad = requires_grad;
    return t;
  }

  static Tensor zeros(Index rows, Index cols, bool requires_grad = false) {
    return from(Mat<S>::Zero(rows, cols), requires_grad);
  }

  static Tensor scalar(S v, bool requires_grad = false) {
    Mat<S> m(1, 1);
    m(0, 0) = v;
    return from(std::move(m), requires_grad);
  }

  bool defined() const { return data_ != nullptr; }

  const Mat<S>& value() const { return data_->value; }
  Mat<S>& value() { return data_->value; }

  bool requires_grad() const { return data_ && data_->requires_grad; }
  void set_requires_grad(bool rg) { data_->requires_grad = rg; }

  // Accumulated gradient; zero-shaped storage is materialized on demand.
  const Mat<S>& grad() const {
    ensure_grad();
    return data_->grad;
  }
  Mat<S>& grad() {
    ensure_grad();
    return data_->grad;
  }
  void zero_grad() {
    if (data_) data_->grad = Mat<S>::Zero(rows(), cols());
  }

  Index rows() const { return data_->value.rows(); }
  Index cols() const { return data_->value.cols(); }
  Index size() const { return data_->value.size(); }

  S item() const {
    if (size() != 1) throw UsageError("item() on a non-scalar tensor");
    return data_->value(0, 0);
  }

  Data* raw() const { return data_.get(); }

  bool same_storage(const Tensor& other) const { return data_ == other.data_; }

 private:
  void ensure_grad() const {
    if (data_->grad.size() != data_->value.size() ||
        data_->grad.rows() != data_->value.rows()) {
      data_->grad = Mat<S>::Zero(data_->value.rows(), data_->value.cols());
    }
  }
  mutable std::shared_ptr<Data> data_;
};

// Per-backward-pass gradient accumulator. Deltas live here during the
// traversal and are flushed into persistent Tensor::grad at the end, so
// repeated backward calls add up exactly.
template <typename S>
class GradStore {
 public:
  Mat<S>& of(const Tensor<S>& t) {
    auto [it, inserted] = deltas_.try_emplace(t.raw());
    if (inserted) it->second = Mat<S>::Zero(t.rows(), t.cols());
    return it->second;
  }

  const Mat<S>* find(const Tensor<S>& t) const {
    auto it = deltas_.find(t.raw());
    return it == deltas_.end() ? nullptr : &it->second;
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (const auto& [data, delta] : deltas_) fn(data, delta);
  }

 private:
  std::unordered_map<typename Tensor<S>::Data*, Mat<S>> deltas_;
};

// Ordered record of executed differentiable operations. Construction order
// is topological by definition; backward() walks it once in reverse.
template <typename S>
class Tape {
 public:
  using BackwardFn = std::function<void(const Mat<S>& dy, GradStore<S>&)>;

  void record(Tensor<S> out, std::vector<Tensor<S>> keep_alive,
              BackwardFn back) {
    nodes_.push_back(Node{std::move(out), std::move(keep_alive),
                          std::move(back)});
  }

  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  // Reverse-mode sweep from a scalar loss. Gradients of every
  // requires_grad tensor reachable from the loss are accumulated into
  // their persistent .grad storage.
  void backward(const Tensor<S>& loss) {
    if (!loss.defined() || loss.size() != 1) {
      throw UsageError("backward: loss must be a scalar tensor");
    }
    GradStore<S> g;
    g.of(loss)(0, 0) = S(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      if (const Mat<S>* dy = g.find(it->out)) {
        it->back(*dy, g);
      }
    }
    std::unordered_map<typename Tensor<S>::Data*, Tensor<S>> handles;
    handles.reserve(nodes_.size() * 2);
    auto note = [&](const Tensor<S>& t) { handles.emplace(t.raw(), t); };
    note(loss);
    for (const auto& n : nodes_) {
      note(n.out);
      for (const auto& t : n.inputs) note(t);
    }
    g.for_each([&](typename Tensor<S>::Data* d, const Mat<S>& delta) {
      auto it = handles.find(d);
      if (it != handles.end() && d->requires_grad) {
        it->second.grad() += delta;
      }
    });
  }

  // The innermost active tape on this thread, or null. Tapes are strictly
  // thread-confined.
  static Tape*& active() {
    thread_local Tape* current = nullptr;
    return current;
  }

 private:
  struct Node {
    Tensor<S> out;
    std::vector<Tensor<S>> inputs;  // keeps producer storage alive
    BackwardFn back;
  };
  std::vector<Node> nodes_;
};

// RAII activation of a tape for the current thread.
template <typename S>
class TapeScope {
 public:
  explicit TapeScope(Tape<S>& tape) : prev_(Tape<S>::active()) {
    Tape<S>::active() = &tape;
  }
  ~TapeScope() { Tape<S>::active() = prev_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape<S>* prev_;
};

template <typename S>
void backward(Tape<S>& tape, const Tensor<S>& loss) {
  tape.backward(loss);
}

}  // namespace dfnet

#endif  // DFNET_TENSOR_HPP
