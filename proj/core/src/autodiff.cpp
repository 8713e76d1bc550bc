#include "nco/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include <fmt/format.h>

#include "nco/error.hpp"

namespace nco::ad {

namespace detail {
Node& node(const Tensor& t) {
  if (!t.valid()) throw ValidationError("use of an empty tensor");
  return *t.node_;
}
}  // namespace detail

namespace {

using detail::Node;

std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

std::size_t extent_product(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

void check_shape(const Shape& shape, std::size_t count) {
  if (shape.empty() || shape.size() > 2)
    throw ShapeError("tensor rank must be 1 or 2, got " + shape_str(shape));
  for (auto e : shape)
    if (e == 0) throw ShapeError("tensor extents must be positive: " + shape_str(shape));
  if (extent_product(shape) != count)
    throw ShapeError(fmt::format("shape {} does not match {} values", shape_str(shape), count));
}

std::size_t rows_of(const Shape& s) { return s.size() == 2 ? s[0] : 1; }
std::size_t cols_of(const Shape& s) { return s.size() == 2 ? s[1] : s[0]; }

double* grad_of(const Tensor& t) {
  Node& n = detail::node(t);
  return n.requires_grad ? n.grad.data() : nullptr;
}

bool is_scalar(const Tensor& t) { return t.size() == 1; }

}  // namespace

// --- Tensor ---------------------------------------------------------------

const Shape& Tensor::shape() const { return detail::node(*this).shape; }
std::size_t Tensor::size() const { return detail::node(*this).value.size(); }
std::size_t Tensor::rows() const { return rows_of(shape()); }
std::size_t Tensor::cols() const { return cols_of(shape()); }
std::span<const double> Tensor::values() const { return detail::node(*this).value; }
bool Tensor::requires_grad() const { return detail::node(*this).requires_grad; }
std::span<const double> Tensor::grad() const { return detail::node(*this).grad; }

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() on a tensor of shape " + shape_str(shape()));
  return values()[0];
}

// --- Tape -----------------------------------------------------------------

Tape::Tape() = default;
Tape::~Tape() = default;

Tensor Tape::constant(Shape shape, std::vector<double> values) {
  check_shape(shape, values.size());
  auto n = std::make_unique<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  nodes_.push_back(std::move(n));
  return Tensor(this, nodes_.back().get());
}

Tensor Tape::variable(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  Node& n = detail::node(t);
  n.requires_grad = true;
  n.grad.assign(n.value.size(), 0.0);
  return t;
}

Tensor Tape::record(Shape shape, std::vector<double> values,
                    std::initializer_list<Tensor> parents, BackwardFn backward) {
  return record(std::move(shape), std::move(values),
                std::span<const Tensor>(parents.begin(), parents.size()),
                std::move(backward));
}

Tensor Tape::record(Shape shape, std::vector<double> values,
                    std::span<const Tensor> parents, BackwardFn backward) {
  for (const auto& p : parents)
    if (&p.tape() != this) throw ValidationError("operands live on different tapes");
  Tensor t = constant(std::move(shape), std::move(values));
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& p) { return p.requires_grad(); });
  if (needs) {
    Node& n = detail::node(t);
    n.requires_grad = true;
    n.grad.assign(n.value.size(), 0.0);
    n.backward = std::move(backward);
  }
  return t;
}

void Tape::backward(const Tensor& loss) {
  if (&loss.tape() != this) throw ValidationError("loss belongs to a different tape");
  if (loss.size() != 1)
    throw ShapeError("backward() needs a scalar loss, got " + shape_str(loss.shape()));
  if (backward_done_) throw ValidationError("backward() already ran on this tape");
  backward_done_ = true;
  Node& root = detail::node(loss);
  if (!root.requires_grad) return;
  root.grad[0] = 1.0;
  // Nodes are created after their parents, so reverse creation order is a
  // valid reverse topological order.
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    Node& n = **it;
    if (n.requires_grad && n.backward) n.backward(n);
  }
}

std::size_t Tape::size() const { return nodes_.size(); }

void Tape::truncate(std::size_t count) {
  if (count < nodes_.size()) nodes_.resize(count);
  backward_done_ = false;
}

// --- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), k2 = b.rows(), n = b.cols();
  if (k != k2)
    throw ShapeError(fmt::format("matmul inner extents differ: {} vs {}",
                                 shape_str(a.shape()), shape_str(b.shape())));
  const double* A = a.values().data();
  const double* B = b.values().data();
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = A[i * k + p];
      const double* brow = B + p * n;
      double* crow = c.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  return a.tape().record({m, n}, std::move(c), {a, b}, [a, b, m, k, n](const Node& self) {
    const double* dC = self.grad.data();
    if (double* dA = grad_of(a)) {
      const double* B = b.values().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double* brow = B + p * n;
          const double* dcrow = dC + i * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += dcrow[j] * brow[j];
          dA[i * k + p] += acc;
        }
    }
    if (double* dB = grad_of(b)) {
      const double* A = a.values().data();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = A[i * k + p];
          const double* dcrow = dC + i * n;
          double* dbrow = dB + p * n;
          for (std::size_t j = 0; j < n; ++j) dbrow[j] += aip * dcrow[j];
        }
    }
  });
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  const double* A = a.values().data();
  std::vector<double> t(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = A[i * n + j];
  return a.tape().record({n, m}, std::move(t), {a}, [a, m, n](const Node& self) {
    double* dA = grad_of(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) dA[i * n + j] += self.grad[j * m + i];
  });
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const std::size_t s = x.rows(), in = x.cols(), out = w.cols();
  if (w.rows() != in)
    throw ShapeError(fmt::format("linear: input {} vs weight {}", shape_str(x.shape()),
                                 shape_str(w.shape())));
  if (b.size() != out)
    throw ShapeError(fmt::format("linear: bias {} vs {} outputs", shape_str(b.shape()), out));
  const double* X = x.values().data();
  const double* Wt = w.values().data();
  const double* Bv = b.values().data();
  std::vector<double> y(s * out);
  for (std::size_t i = 0; i < s; ++i) {
    double* yrow = y.data() + i * out;
    std::copy(Bv, Bv + out, yrow);
    for (std::size_t p = 0; p < in; ++p) {
      const double xip = X[i * in + p];
      const double* wrow = Wt + p * out;
      for (std::size_t j = 0; j < out; ++j) yrow[j] += xip * wrow[j];
    }
  }
  return x.tape().record({s, out}, std::move(y), {x, w, b}, [x, w, b, s, in, out](const Node& self) {
    const double* dY = self.grad.data();
    if (double* dX = grad_of(x)) {
      const double* Wt = w.values().data();
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t p = 0; p < in; ++p) {
          const double* wrow = Wt + p * out;
          const double* dyrow = dY + i * out;
          double acc = 0.0;
          for (std::size_t j = 0; j < out; ++j) acc += dyrow[j] * wrow[j];
          dX[i * in + p] += acc;
        }
    }
    if (double* dW = grad_of(w)) {
      const double* X = x.values().data();
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t p = 0; p < in; ++p) {
          const double xip = X[i * in + p];
          const double* dyrow = dY + i * out;
          double* dwrow = dW + p * out;
          for (std::size_t j = 0; j < out; ++j) dwrow[j] += xip * dyrow[j];
        }
    }
    if (double* dB = grad_of(b)) {
      for (std::size_t i = 0; i < s; ++i)
        for (std::size_t j = 0; j < out; ++j) dB[j] += dY[i * out + j];
    }
  });
}

// --- elementwise ----------------------------------------------------------

namespace {

// Resolves the scalar-vs-tensor / equal-shape rule; returns the result shape.
Shape binary_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return a.shape();
  if (is_scalar(b)) return a.shape();
  if (is_scalar(a)) return b.shape();
  throw ShapeError(fmt::format("{}: incompatible shapes {} and {}", op, shape_str(a.shape()),
                               shape_str(b.shape())));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  Shape shape = binary_shape("add", a, b);
  const std::size_t n = extent_product(shape);
  const bool a_bcast = a.size() != n, b_bcast = b.size() != n;
  const auto A = a.values(), B = b.values();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = A[a_bcast ? 0 : i] + B[b_bcast ? 0 : i];
  return a.tape().record(std::move(shape), std::move(y), {a, b},
                         [a, b, n, a_bcast, b_bcast](const Node& self) {
                           if (double* dA = grad_of(a))
                             for (std::size_t i = 0; i < n; ++i) dA[a_bcast ? 0 : i] += self.grad[i];
                           if (double* dB = grad_of(b))
                             for (std::size_t i = 0; i < n; ++i) dB[b_bcast ? 0 : i] += self.grad[i];
                         });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  Shape shape = binary_shape("hadamard", a, b);
  const std::size_t n = extent_product(shape);
  const bool a_bcast = a.size() != n, b_bcast = b.size() != n;
  const auto A = a.values(), B = b.values();
  std::vector<double> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = A[a_bcast ? 0 : i] * B[b_bcast ? 0 : i];
  return a.tape().record(std::move(shape), std::move(y), {a, b},
                         [a, b, n, a_bcast, b_bcast](const Node& self) {
                           const auto A = a.values(), B = b.values();
                           if (double* dA = grad_of(a))
                             for (std::size_t i = 0; i < n; ++i)
                               dA[a_bcast ? 0 : i] += self.grad[i] * B[b_bcast ? 0 : i];
                           if (double* dB = grad_of(b))
                             for (std::size_t i = 0; i < n; ++i)
                               dB[b_bcast ? 0 : i] += self.grad[i] * A[a_bcast ? 0 : i];
                         });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> y(a.values().begin(), a.values().end());
  for (auto& v : y) v *= factor;
  return a.tape().record(a.shape(), std::move(y), {a}, [a, factor](const Node& self) {
    double* dA = grad_of(a);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dA[i] += self.grad[i] * factor;
  });
}

Tensor scale(const Tensor& a, const Tensor& factor) {
  if (!is_scalar(factor))
    throw ShapeError("scale: factor must hold one value, got " + shape_str(factor.shape()));
  return hadamard(a, factor);
}

Tensor sigmoid(const Tensor& a) {
  std::vector<double> y(a.size());
  const auto A = a.values();
  for (std::size_t i = 0; i < y.size(); ++i) {
    // Split by sign so exp never overflows.
    const double x = A[i];
    if (x >= 0) {
      y[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const double e = std::exp(x);
      y[i] = e / (1.0 + e);
    }
  }
  return a.tape().record(a.shape(), std::move(y), {a}, [a](const Node& self) {
    double* dA = grad_of(a);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = self.value[i];
      dA[i] += self.grad[i] * s * (1.0 - s);
    }
  });
}

Tensor relu(const Tensor& a) {
  std::vector<double> y(a.values().begin(), a.values().end());
  for (auto& v : y) v = v > 0.0 ? v : 0.0;
  return a.tape().record(a.shape(), std::move(y), {a}, [a](const Node& self) {
    double* dA = grad_of(a);
    const auto A = a.values();
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      if (A[i] > 0.0) dA[i] += self.grad[i];
  });
}

Tensor log(const Tensor& a) {
  std::vector<double> y(a.size());
  const auto A = a.values();
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!(A[i] > 0.0)) throw ValidationError(fmt::format("log of non-positive value {}", A[i]));
    y[i] = std::log(A[i]);
  }
  return a.tape().record(a.shape(), std::move(y), {a}, [a](const Node& self) {
    double* dA = grad_of(a);
    const auto A = a.values();
    for (std::size_t i = 0; i < self.grad.size(); ++i) dA[i] += self.grad[i] / A[i];
  });
}

// --- reductions and reshaping ---------------------------------------------

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return a.tape().record({1}, {s}, {a}, [a](const Node& self) {
    double* dA = grad_of(a);
    for (std::size_t i = 0; i < a.size(); ++i) dA[i] += self.grad[0];
  });
}

Tensor element(const Tensor& a, std::size_t index) {
  if (index >= a.size())
    throw ShapeError(fmt::format("element {} out of range for {}", index, shape_str(a.shape())));
  return a.tape().record({1}, {a.value(index)}, {a}, [a, index](const Node& self) {
    grad_of(a)[index] += self.grad[0];
  });
}

Tensor reshape(const Tensor& a, Shape shape) {
  check_shape(shape, a.size());
  std::vector<double> y(a.values().begin(), a.values().end());
  return a.tape().record(std::move(shape), std::move(y), {a}, [a](const Node& self) {
    double* dA = grad_of(a);
    for (std::size_t i = 0; i < self.grad.size(); ++i) dA[i] += self.grad[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  const std::size_t m = a.rows(), n = a.cols();
  if (count == 0 || begin + count > n)
    throw ShapeError(fmt::format("slice_cols [{}, {}) out of range for {}", begin, begin + count,
                                 shape_str(a.shape())));
  const double* A = a.values().data();
  std::vector<double> y(m * count);
  for (std::size_t i = 0; i < m; ++i)
    std::copy(A + i * n + begin, A + i * n + begin + count, y.begin() + i * count);
  return a.tape().record({m, count}, std::move(y), {a}, [a, m, n, begin, count](const Node& self) {
    double* dA = grad_of(a);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) dA[i * n + begin + j] += self.grad[i * count + j];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols of nothing");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) throw ShapeError("concat_cols: row counts differ");
    total += p.cols();
  }
  std::vector<double> y(m * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    const double* P = p.values().data();
    for (std::size_t i = 0; i < m; ++i)
      std::copy(P + i * c, P + (i + 1) * c, y.begin() + i * total + offset);
    offset += c;
  }
  std::vector<Tensor> kept(parts.begin(), parts.end());
  return parts[0].tape().record({m, total}, std::move(y), parts, [kept, m, total](const Node& self) {
    std::size_t offset = 0;
    for (const auto& p : kept) {
      const std::size_t c = p.cols();
      if (double* dP = grad_of(p))
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < c; ++j) dP[i * c + j] += self.grad[i * total + offset + j];
      offset += c;
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows of nothing");
  const std::size_t n = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) throw ShapeError("concat_rows: column counts differ");
    total += p.rows();
  }
  std::vector<double> y;
  y.reserve(total * n);
  for (const auto& p : parts) y.insert(y.end(), p.values().begin(), p.values().end());
  std::vector<Tensor> kept(parts.begin(), parts.end());
  return parts[0].tape().record({total, n}, std::move(y), parts, [kept](const Node& self) {
    std::size_t offset = 0;
    for (const auto& p : kept) {
      if (double* dP = grad_of(p))
        for (std::size_t i = 0; i < p.size(); ++i) dP[i] += self.grad[offset + i];
      offset += p.size();
    }
  });
}

// --- softmax family -------------------------------------------------------

namespace {

// Row-wise stabilized softmax written into `out`; masked entries are 0.
void softmax_rows(std::span<const double> x, const Mask* mask, std::size_t rows,
                  std::size_t cols, std::vector<double>& out) {
  out.assign(x.size(), 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t base = r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t j = 0; j < cols; ++j)
      if (!mask || (*mask)[base + j]) {
        mx = std::max(mx, x[base + j]);
        any = true;
      }
    if (!any) throw ValidationError(fmt::format("softmax row {} is fully masked", r));
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j)
      if (!mask || (*mask)[base + j]) {
        out[base + j] = std::exp(x[base + j] - mx);
        z += out[base + j];
      }
    for (std::size_t j = 0; j < cols; ++j) out[base + j] /= z;
  }
}

Tensor softmax_impl(const Tensor& logits, const Mask* mask_ptr) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  std::vector<double> p;
  softmax_rows(logits.values(), mask_ptr, rows, cols, p);
  return logits.tape().record(logits.shape(), std::move(p), {logits},
                              [logits, rows, cols](const Node& self) {
                                double* dX = grad_of(logits);
                                for (std::size_t r = 0; r < rows; ++r) {
                                  const std::size_t base = r * cols;
                                  double dot = 0.0;
                                  for (std::size_t j = 0; j < cols; ++j)
                                    dot += self.grad[base + j] * self.value[base + j];
                                  // Masked entries have p == 0 and receive no gradient.
                                  for (std::size_t j = 0; j < cols; ++j)
                                    dX[base + j] += self.value[base + j] * (self.grad[base + j] - dot);
                                }
                              });
}

}  // namespace

Tensor masked_softmax(const Tensor& logits, const Mask& mask) {
  if (mask.size() != logits.size())
    throw ShapeError(fmt::format("mask has {} entries for logits {}", mask.size(),
                                 shape_str(logits.shape())));
  return softmax_impl(logits, &mask);
}

Tensor softmax(const Tensor& logits) { return softmax_impl(logits, nullptr); }

Tensor masked_cross_entropy(const Tensor& logits, const Mask& mask,
                            std::span<const std::size_t> targets) {
  const std::size_t rows = logits.rows(), cols = logits.cols();
  if (mask.size() != logits.size())
    throw ShapeError(fmt::format("mask has {} entries for logits {}", mask.size(),
                                 shape_str(logits.shape())));
  if (targets.size() != rows)
    throw ShapeError(fmt::format("{} targets for {} rows", targets.size(), rows));
  const auto X = logits.values();
  std::vector<double> p;
  softmax_rows(X, &mask, rows, cols, p);
  double loss = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t t = targets[r];
    if (t >= cols || !mask[r * cols + t])
      throw ValidationError(fmt::format("cross-entropy target {} in row {} is masked", t, r));
    // log-sum-exp form keeps the loss finite even when p[t] underflows.
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j)
      if (mask[r * cols + j]) mx = std::max(mx, X[r * cols + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j)
      if (mask[r * cols + j]) z += std::exp(X[r * cols + j] - mx);
    loss += mx + std::log(z) - X[r * cols + t];
  }
  std::vector<std::size_t> kept(targets.begin(), targets.end());
  return logits.tape().record({1}, {loss}, {logits},
                              [logits, p = std::move(p), kept, cols](const Node& self) {
                                double* dX = grad_of(logits);
                                const double g = self.grad[0];
                                for (std::size_t r = 0; r < kept.size(); ++r) {
                                  const std::size_t base = r * cols;
                                  for (std::size_t j = 0; j < cols; ++j) dX[base + j] += g * p[base + j];
                                  dX[base + kept[r]] -= g;
                                }
                              });
}

// --- gradient checking ----------------------------------------------------

double finite_difference_check(const ScalarFn& f, const Shape& shape,
                               std::span<const double> x, double eps,
                               std::span<const std::size_t> coords) {
  std::vector<double> analytic;
  {
    Tape tape;
    Tensor v = tape.variable(shape, std::vector<double>(x.begin(), x.end()));
    Tensor loss = f(tape, v);
    tape.backward(loss);
    analytic.assign(v.grad().begin(), v.grad().end());
  }

  auto eval = [&](const std::vector<double>& point) {
    Tape tape;
    Tensor v = tape.constant(shape, point);
    return f(tape, v).item();
  };

  std::vector<std::size_t> all;
  if (coords.empty()) {
    all.resize(x.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    coords = all;
  }

  double worst = 0.0;
  std::vector<double> point(x.begin(), x.end());
  for (std::size_t i : coords) {
    if (i >= x.size()) throw ShapeError("finite_difference_check: coordinate out of range");
    const double orig = point[i];
    point[i] = orig + eps;
    const double up = eval(point);
    point[i] = orig - eps;
    const double down = eval(point);
    point[i] = orig;
    const double central = (up - down) / (2.0 * eps);
    const double err =
        std::abs(analytic[i] - central) / (std::abs(analytic[i]) + std::abs(central) + 1e-12);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace nco::ad
