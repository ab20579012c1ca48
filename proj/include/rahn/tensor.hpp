#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace rahn::tensor {

class Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

// Dense row-major 2-D tensor node in a define-by-run graph. Leaves carry
// parameters (requires_grad) or constants; interior nodes remember their
// parents and a pull-style backward rule. Scalars are 1x1.
class Tensor {
 public:
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> values,
         bool requires_grad = false);

  static TensorPtr leaf(std::size_t rows, std::size_t cols,
                        std::vector<double> values, bool requires_grad = false);
  static TensorPtr zeros(std::size_t rows, std::size_t cols,
                         bool requires_grad = false);
  static TensorPtr scalar(double v, bool requires_grad = false);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return values_.size(); }
  bool is_scalar() const { return rows_ == 1 && cols_ == 1; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  bool needs_grad() const { return needs_grad_; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const { return grad_; }
  bool has_grad() const { return !grad_.empty(); }
  void zero_grad() { grad_.clear(); }

  std::string shape_str() const;

 private:
  friend TensorPtr make_node(std::size_t rows, std::size_t cols,
                             std::vector<double> values,
                             std::vector<TensorPtr> parents,
                             std::function<void(Tensor&)> backward);
  friend void backward(const TensorPtr& loss);

  std::size_t rows_, cols_;
  std::vector<double> values_;
  std::vector<double> grad_;  // allocated lazily, same layout as values_
  bool requires_grad_ = false;
  bool needs_grad_ = false;
  std::vector<TensorPtr> parents_;
  std::function<void(Tensor&)> backward_fn_;
};

// --- operations ------------------------------------------------------------

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b);
TensorPtr add(const TensorPtr& a, const TensorPtr& b);    // same shape
TensorPtr sub(const TensorPtr& a, const TensorPtr& b);    // same shape
TensorPtr scale(const TensorPtr& x, double c);
TensorPtr relu(const TensorPtr& x);
TensorPtr abs(const TensorPtr& x);                        // subgradient 0 at 0
TensorPtr softmax_rows(const TensorPtr& x);
TensorPtr transpose(const TensorPtr& x);
TensorPtr reshape(const TensorPtr& x, std::size_t rows, std::size_t cols);
TensorPtr concat(const std::vector<TensorPtr>& xs);       // single-row inputs
TensorPtr embedding_row(const TensorPtr& table, std::size_t row);
TensorPtr sum(const TensorPtr& x);                        // -> scalar
TensorPtr sum_squares(const TensorPtr& x);                // -> scalar

// x [1 x a] * W [a x b] + bias [1 x b]
TensorPtr linear(const TensorPtr& x, const TensorPtr& W, const TensorPtr& bias);

// Populates grad for every reachable needs_grad tensor. Interior grads are
// reset per call; leaf grads accumulate across calls.
void backward(const TensorPtr& loss);

// --- Adam ------------------------------------------------------------------

struct AdamConfig {
  double learning_rate = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<TensorPtr> params, AdamConfig config = {});

  // Standard bias-corrected update; clears parameter grads afterwards.
  void step();

  std::uint64_t step_count() const { return step_; }

 private:
  std::vector<TensorPtr> params_;
  std::vector<std::vector<double>> m_, v_;
  AdamConfig config_;
  std::uint64_t step_ = 0;
};

}  // namespace rahn::tensor
