#pragma once

// Reverse-mode automatic differentiation over dense 2-D matrices in double
// precision, with the Adam optimizer and global gradient-norm clipping.
//
// A Tensor is a handle to a graph node. Operations on tensors that require
// gradients record their parents and a backward closure; Tensor::backward()
// walks the recorded graph in reverse topological order. Graphs are owned by
// the thread that built them and must not be shared while being extended.

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace chartab::engine {

struct Shape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t numel() const { return rows * cols; }
  std::string str() const;
  bool operator==(const Shape&) const = default;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;  // empty until first accumulated into
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::span<double> grad_buffer();
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rows() const { return node_->shape.rows; }
  std::size_t cols() const { return node_->shape.cols; }
  std::size_t numel() const { return node_->shape.numel(); }
  const char* op() const { return node_->op; }

  std::span<const double> values() const { return node_->value; }
  std::span<double> mutable_values() { return node_->value; }
  double item() const;
  double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  // Empty span when no gradient has been accumulated yet.
  std::span<const double> grad() const { return node_->grad; }
  std::span<double> mutable_grad() { return node_->grad_buffer(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  void zero_grad();

  // Accumulates d(this)/d(t) into every reachable tensor t requiring gradients.
  // Requires a 1x1 tensor.
  void backward() const;

  // Same values, no lineage.
  Tensor detach(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

bool grad_enabled();

// Sets graph recording on the current thread for its lifetime.
class GradModeGuard {
 public:
  explicit GradModeGuard(bool enabled);
  ~GradModeGuard();
  GradModeGuard(const GradModeGuard&) = delete;
  GradModeGuard& operator=(const GradModeGuard&) = delete;

 private:
  bool previous_;
};

class NoGradGuard : public GradModeGuard {
 public:
  NoGradGuard() : GradModeGuard(false) {}
};

// Forward operations. Shape errors throw chartab::ShapeError naming the op.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
// x[m x n] + bias[1 x n] broadcast over rows.
Tensor add_row(const Tensor& x, const Tensor& bias);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor relu(const Tensor& x);
// Row-wise softmax.
Tensor softmax(const Tensor& x);
// Row-wise normalization to zero mean and unit variance, then gamma * y + beta
// with gamma and beta of shape [1 x n].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-10);
Tensor layer_norm(const Tensor& x, double eps = 1e-10);
Tensor transpose(const Tensor& x);
Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
// Row-major reinterpretation; flatten is reshape to [1 x numel].
Tensor reshape(const Tensor& x, Shape shape);
Tensor flatten(const Tensor& x);
// Appends zero columns up to `cols`.
Tensor pad_cols(const Tensor& x, std::size_t cols);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

// Mean absolute difference; the subgradient at zero is zero.
Tensor l1_loss(const Tensor& pred, const Tensor& target);
// Mean over rows of -log softmax(logits)[row, labels[row]].
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);
Tensor cross_entropy(const Tensor& logits, std::size_t label);

// Scales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(std::span<Tensor> params, double max_norm);

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::size_t step_count = 0;
};

AdamState adam_init(std::span<const Tensor> params, AdamConfig config = {});
// Bias-corrected Adam update in place. Parameters without a gradient are
// treated as having a zero gradient.
void adam_step(std::span<Tensor> params, AdamState& state);

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Binary container: magic, count, then per tensor the name, shape and
// little-endian row-major doubles.
void write_tensors(std::ostream& out, const NamedTensors& tensors);
NamedTensors read_tensors(std::istream& in);

}  // namespace chartab::engine
