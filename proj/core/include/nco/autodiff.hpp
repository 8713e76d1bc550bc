#pragma once

// Dense reverse-mode automatic differentiation over row-major float64 tensors.
//
// A Tape owns every node created during one forward pass. Tensors are
// lightweight handles into the tape and stay valid for the tape's lifetime.
// Rank is 1 or 2; a rank-1 tensor of extent n behaves as a 1 x n row where
// matrix semantics are needed, and a scalar is shape {1}.
//
// Broadcasting is limited to scalar-vs-tensor and equal shapes. Bias
// addition goes through the dedicated `linear` op instead.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace nco::ad {

using Shape = std::vector<std::size_t>;

/// Per-entry admissibility for masked ops: nonzero means the entry is kept.
using Mask = std::vector<std::uint8_t>;

class Tape;
class Tensor;

namespace detail {
struct Node;
Node& node(const Tensor& t);
}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t size() const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> values() const;
  double value(std::size_t i) const { return values()[i]; }
  double at(std::size_t r, std::size_t c) const { return values()[r * cols() + c]; }
  /// Convenience for shape-{1} tensors.
  double item() const;

  bool requires_grad() const;
  /// Gradient buffer; empty until backward() has run on the owning tape.
  std::span<const double> grad() const;

  Tape& tape() const { return *tape_; }

 private:
  friend class Tape;
  friend detail::Node& detail::node(const Tensor& t);
  Tensor(Tape* tape, detail::Node* node) : tape_(tape), node_(node) {}

  Tape* tape_ = nullptr;
  detail::Node* node_ = nullptr;
};

class Tape {
 public:
  Tape();
  ~Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Leaf that never receives a gradient.
  Tensor constant(Shape shape, std::vector<double> values);
  /// Leaf whose gradient is populated by backward().
  Tensor variable(Shape shape, std::vector<double> values);

  /// Propagates d(loss)/d(node) to every node in reverse creation order.
  /// The loss must be a single-element tensor; a tape supports one backward.
  void backward(const Tensor& loss);

  std::size_t size() const;

  /// Drops every node created after the first `count`. Handles to dropped
  /// nodes dangle. Lets inference keep bound parameters while discarding the
  /// per-step graph.
  void truncate(std::size_t count);

  // Used by op implementations.
  using BackwardFn = std::function<void(const detail::Node&)>;
  Tensor record(Shape shape, std::vector<double> values,
                std::initializer_list<Tensor> parents, BackwardFn backward);
  Tensor record(Shape shape, std::vector<double> values,
                std::span<const Tensor> parents, BackwardFn backward);

 private:
  std::vector<std::unique_ptr<detail::Node>> nodes_;
  bool backward_done_ = false;
};

namespace detail {
struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized on creation iff requires_grad
  bool requires_grad = false;
  Tape::BackwardFn backward;
};
}  // namespace detail

// --- linear algebra -------------------------------------------------------

/// a[m x k] * b[k x n]. dA = dC b^T, dB = a^T dC.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
/// x[s x in] * w[in x out] + b[out] (bias added to every row).
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// --- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
/// a multiplied by the single value held in `factor` (shape {1}).
Tensor scale(const Tensor& a, const Tensor& factor);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor log(const Tensor& a);

// --- reductions and reshaping ---------------------------------------------

Tensor sum(const Tensor& a);
Tensor element(const Tensor& a, std::size_t index);
Tensor reshape(const Tensor& a, Shape shape);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);

// --- softmax family -------------------------------------------------------

/// Row-wise softmax over entries where mask != 0; masked entries are exactly
/// zero. Throws ValidationError if any row is fully masked.
Tensor masked_softmax(const Tensor& logits, const Mask& mask);
/// Plain row-wise softmax.
Tensor softmax(const Tensor& logits);
/// Sum over rows r of -log softmax(logits[r], mask[r])[targets[r]].
/// Throws ValidationError if a target is masked.
Tensor masked_cross_entropy(const Tensor& logits, const Mask& mask,
                            std::span<const std::size_t> targets);

// --- gradient checking ----------------------------------------------------

using ScalarFn = std::function<Tensor(Tape&, const Tensor&)>;

/// Max over coordinates of |analytic - central| / (|analytic| + |central| + 1e-12),
/// where analytic comes from backward() and central from (f(x+eps) - f(x-eps)) / 2eps.
/// `coords` restricts the check to a subset of coordinates; empty means all.
double finite_difference_check(const ScalarFn& f, const Shape& shape,
                               std::span<const double> x, double eps,
                               std::span<const std::size_t> coords = {});

}  // namespace nco::ad
