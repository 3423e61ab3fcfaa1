#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace kmoco {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of doubles. A plain value: copies are deep.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor(Shape{rows, cols}, std::move(data));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  // Row `r` of a rank-2 tensor.
  std::span<const double> row(std::size_t r) const;
  std::span<double> row(std::size_t r);

  double item() const;
  bool all_finite() const;

  Tensor reshaped(Shape shape) const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Throws NumericError naming `what` if any entry is NaN/Inf.
void check_finite(const Tensor& t, const char* what);

namespace ad {

// A node of the define-by-run graph. Leaves are parameters or constants;
// interior nodes carry a closure that pushes `grad` into the parents.
struct Node {
  Tensor value;
  std::optional<Tensor> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  Tensor& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> n) : node_(std::move(n)) {}

  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const std::optional<Tensor>& grad() const { return node_->grad; }
  void zero_grad() { node_->grad.reset(); }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& ptr() const { return node_; }
  explicit operator bool() const { return static_cast<bool>(node_); }

 private:
  std::shared_ptr<Node> node_;
};

// Leaf that receives gradients.
Var parameter(Tensor value);
// Leaf that never receives gradients.
Var constant(Tensor value);
// Constant copy of x's value; cuts the graph.
Var detach(const Var& x);

// Reverse-mode sweep from a scalar. Gradients accumulate into every node that
// requires them; leaves keep theirs until zero_grad().
void backward(const Var& scalar_output);

// ---- op set ---------------------------------------------------------------
// All ops validate shapes (DimensionError) and reject non-finite results
// (NumericError).

Var matmul(const Var& a, const Var& b);     // [m,k]·[k,n]
Var matmul_nt(const Var& a, const Var& b);  // [m,k]·[n,k]ᵀ
Var bmm(const Var& a, const Var& b);        // [b,m,k]·[b,k,n]
Var add(const Var& a, const Var& b);
Var add_bias(const Var& x, const Var& bias);  // [m,n] + [n] per row
Var scale(const Var& x, double s);
Var relu(const Var& x);
Var l2_normalize(const Var& x);  // along the last axis; zero rows are a NumericError
Var concat(const std::vector<Var>& xs, std::size_t axis);  // axis 0 or the last axis of rank-2
Var reshape(const Var& x, Shape shape);
Var mean(const Var& x);
Var gather_rows(const Var& x, std::span<const std::size_t> rows);

// Mean over rows of −log softmax(logits[r])[targets[r]].
Var softmax_cross_entropy(const Var& logits, std::span<const std::size_t> targets);

enum class NnDenominator { kIncludeTargets, kExcludeTargets };

// Row r has targets[r] (k entries). Per row the loss is
// −(1/k) Σ_j log(e^{l_j} / Z_j), with Z_j = Σ_i e^{l_i} (include) or
// e^{l_j} + Σ_{i∉targets} e^{l_i} (exclude). Returns the mean over rows.
Var multi_label_cross_entropy(const Var& logits,
                              const std::vector<std::vector<std::size_t>>& targets,
                              NnDenominator mode = NnDenominator::kIncludeTargets);

// 3x3 convolution, stride 1, zero padding 1. x:[B,Ci,H,W] w:[Co,Ci,3,3] b:[Co].
Var conv3x3(const Var& x, const Var& w, const Var& b);
// 2x2 average pooling, stride 2 (H and W must be even).
Var avg_pool2(const Var& x);
// [B,C,H,W] -> [B,C]
Var global_avg_pool(const Var& x);

}  // namespace ad
}  // namespace kmoco
