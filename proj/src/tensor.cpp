#include "rahn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "rahn/errors.hpp"

namespace rahn::tensor {

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> values,
               bool requires_grad)
    : rows_(rows),
      cols_(cols),
      values_(std::move(values)),
      requires_grad_(requires_grad),
      needs_grad_(requires_grad) {
  if (values_.size() != rows_ * cols_)
    throw ShapeError("tensor value count does not match shape " + shape_str());
}

TensorPtr Tensor::leaf(std::size_t rows, std::size_t cols,
                       std::vector<double> values, bool requires_grad) {
  return std::make_shared<Tensor>(rows, cols, std::move(values), requires_grad);
}

TensorPtr Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  return leaf(rows, cols, std::vector<double>(rows * cols, 0.0), requires_grad);
}

TensorPtr Tensor::scalar(double v, bool requires_grad) {
  return leaf(1, 1, {v}, requires_grad);
}

double Tensor::item() const {
  if (!is_scalar()) throw ShapeError("item() on non-scalar " + shape_str());
  return values_[0];
}

std::vector<double>& Tensor::grad() {
  if (grad_.empty()) grad_.assign(values_.size(), 0.0);
  return grad_;
}

std::string Tensor::shape_str() const {
  return "[" + std::to_string(rows_) + "x" + std::to_string(cols_) + "]";
}

TensorPtr make_node(std::size_t rows, std::size_t cols,
                    std::vector<double> values, std::vector<TensorPtr> parents,
                    std::function<void(Tensor&)> backward) {
  auto node = std::make_shared<Tensor>(rows, cols, std::move(values));
  node->needs_grad_ = std::any_of(parents.begin(), parents.end(),
                                  [](const TensorPtr& p) { return p->needs_grad(); });
  if (node->needs_grad_) {
    node->parents_ = std::move(parents);
    node->backward_fn_ = std::move(backward);
  }
  return node;
}

TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
  if (a->cols() != b->rows())
    throw ShapeError("matmul shape mismatch " + a->shape_str() + " * " +
                     b->shape_str());
  const std::size_t m = a->rows(), k = a->cols(), n = b->cols();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a->at(i, p);
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += av * b->at(p, j);
    }
  return make_node(m, n, std::move(out), {a, b}, [a, b, m, k, n](Tensor& self) {
    const auto& g = self.grad();
    if (a->needs_grad()) {
      auto& ga = a->grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * b->at(p, j);
          ga[i * k + p] += acc;
        }
    }
    if (b->needs_grad()) {
      auto& gb = b->grad();
      for (std::size_t p = 0; p < k; ++p)
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t i = 0; i < m; ++i) acc += a->at(i, p) * g[i * n + j];
          gb[p * n + j] += acc;
        }
    }
  });
}

namespace {

void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
  if (a->rows() != b->rows() || a->cols() != b->cols())
    throw ShapeError(std::string(op) + " shape mismatch " + a->shape_str() +
                     " vs " + b->shape_str());
}

}  // namespace

TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b, "add");
  std::vector<double> out(a->size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a->values()[i] + b->values()[i];
  return make_node(a->rows(), a->cols(), std::move(out), {a, b},
                   [a, b](Tensor& self) {
                     const auto& g = self.grad();
                     if (a->needs_grad()) {
                       auto& ga = a->grad();
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     }
                     if (b->needs_grad()) {
                       auto& gb = b->grad();
                       for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                     }
                   });
}

TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
  check_same_shape(a, b, "sub");
  std::vector<double> out(a->size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = a->values()[i] - b->values()[i];
  return make_node(a->rows(), a->cols(), std::move(out), {a, b},
                   [a, b](Tensor& self) {
                     const auto& g = self.grad();
                     if (a->needs_grad()) {
                       auto& ga = a->grad();
                       for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                     }
                     if (b->needs_grad()) {
                       auto& gb = b->grad();
                       for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                     }
                   });
}

TensorPtr scale(const TensorPtr& x, double c) {
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x->values()[i];
  return make_node(x->rows(), x->cols(), std::move(out), {x},
                   [x, c](Tensor& self) {
                     const auto& g = self.grad();
                     auto& gx = x->grad();
                     for (std::size_t i = 0; i < g.size(); ++i) gx[i] += c * g[i];
                   });
}

TensorPtr relu(const TensorPtr& x) {
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = std::max(0.0, x->values()[i]);
  return make_node(x->rows(), x->cols(), std::move(out), {x},
                   [x](Tensor& self) {
                     const auto& g = self.grad();
                     auto& gx = x->grad();
                     for (std::size_t i = 0; i < g.size(); ++i)
                       if (x->values()[i] > 0.0) gx[i] += g[i];
                   });
}

TensorPtr abs(const TensorPtr& x) {
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::abs(x->values()[i]);
  return make_node(x->rows(), x->cols(), std::move(out), {x},
                   [x](Tensor& self) {
                     const auto& g = self.grad();
                     auto& gx = x->grad();
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       const double v = x->values()[i];
                       if (v > 0.0)
                         gx[i] += g[i];
                       else if (v < 0.0)
                         gx[i] -= g[i];
                     }
                   });
}

TensorPtr softmax_rows(const TensorPtr& x) {
  const std::size_t r = x->rows(), c = x->cols();
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < r; ++i) {
    double mx = x->at(i, 0);
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, x->at(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[i * c + j] = std::exp(x->at(i, j) - mx);
      denom += out[i * c + j];
    }
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= denom;
  }
  return make_node(r, c, std::move(out), {x}, [x, r, c](Tensor& self) {
    const auto& y = self.values();
    const auto& g = self.grad();
    auto& gx = x->grad();
    for (std::size_t i = 0; i < r; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        gx[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
    }
  });
}

TensorPtr transpose(const TensorPtr& x) {
  const std::size_t r = x->rows(), c = x->cols();
  std::vector<double> out(x->size());
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = x->at(i, j);
  return make_node(c, r, std::move(out), {x}, [x, r, c](Tensor& self) {
    const auto& g = self.grad();
    auto& gx = x->grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[j * r + i];
  });
}

TensorPtr reshape(const TensorPtr& x, std::size_t rows, std::size_t cols) {
  if (rows * cols != x->size())
    throw ShapeError("reshape " + x->shape_str() + " to [" +
                     std::to_string(rows) + "x" + std::to_string(cols) + "]");
  return make_node(rows, cols, x->values(), {x}, [x](Tensor& self) {
    const auto& g = self.grad();
    auto& gx = x->grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
}

TensorPtr concat(const std::vector<TensorPtr>& xs) {
  if (xs.empty()) throw ShapeError("concat of zero tensors");
  std::size_t total = 0;
  for (const auto& x : xs) {
    if (x->rows() != 1)
      throw ShapeError("concat expects single-row inputs, got " + x->shape_str());
    total += x->cols();
  }
  std::vector<double> out;
  out.reserve(total);
  for (const auto& x : xs)
    out.insert(out.end(), x->values().begin(), x->values().end());
  return make_node(1, total, std::move(out), xs, [xs](Tensor& self) {
    const auto& g = self.grad();
    std::size_t off = 0;
    for (const auto& x : xs) {
      if (x->needs_grad()) {
        auto& gx = x->grad();
        for (std::size_t i = 0; i < x->cols(); ++i) gx[i] += g[off + i];
      }
      off += x->cols();
    }
  });
}

TensorPtr embedding_row(const TensorPtr& table, std::size_t row) {
  if (row >= table->rows())
    throw ValidationError("embedding row " + std::to_string(row) +
                          " out of range for table " + table->shape_str());
  const std::size_t c = table->cols();
  std::vector<double> out(table->values().begin() + row * c,
                          table->values().begin() + (row + 1) * c);
  return make_node(1, c, std::move(out), {table}, [table, row, c](Tensor& self) {
    const auto& g = self.grad();
    auto& gt = table->grad();
    for (std::size_t i = 0; i < c; ++i) gt[row * c + i] += g[i];
  });
}

TensorPtr sum(const TensorPtr& x) {
  double acc = 0.0;
  for (double v : x->values()) acc += v;
  return make_node(1, 1, {acc}, {x}, [x](Tensor& self) {
    const double g = self.grad()[0];
    auto& gx = x->grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g;
  });
}

TensorPtr sum_squares(const TensorPtr& x) {
  double acc = 0.0;
  for (double v : x->values()) acc += v * v;
  return make_node(1, 1, {acc}, {x}, [x](Tensor& self) {
    const double g = self.grad()[0];
    auto& gx = x->grad();
    for (std::size_t i = 0; i < gx.size(); ++i)
      gx[i] += 2.0 * g * x->values()[i];
  });
}

TensorPtr linear(const TensorPtr& x, const TensorPtr& W, const TensorPtr& bias) {
  return add(matmul(x, W), bias);
}

void backward(const TensorPtr& loss) {
  if (!loss->is_scalar())
    throw ShapeError("backward requires a scalar loss, got " + loss->shape_str());
  if (!loss->needs_grad()) return;

  // iterative post-order topological sort
  std::vector<Tensor*> topo;
  std::unordered_set<Tensor*> visited;
  std::vector<std::pair<Tensor*, std::size_t>> stack{{loss.get(), 0}};
  visited.insert(loss.get());
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child < node->parents_.size()) {
      Tensor* parent = node->parents_[child++].get();
      if (parent->needs_grad() && visited.insert(parent).second)
        stack.push_back({parent, 0});
    } else {
      topo.push_back(node);
      stack.pop_back();
    }
  }

  // interior grads are per-call; leaf grads accumulate across calls
  for (Tensor* node : topo)
    if (!node->requires_grad()) node->grad_.assign(node->size(), 0.0);
  for (Tensor* node : topo)
    if (node->grad_.empty()) node->grad_.assign(node->size(), 0.0);

  loss->grad_[0] += 1.0;
  for (auto it = topo.rbegin(); it != topo.rend(); ++it)
    if ((*it)->backward_fn_) (*it)->backward_fn_(**it);
}

Adam::Adam(std::vector<TensorPtr> params, AdamConfig config)
    : params_(std::move(params)), config_(config) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

void Adam::step() {
  ++step_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Tensor& p = *params_[pi];
    if (!p.has_grad())
      throw StateError("adam_step: parameter " + std::to_string(pi) +
                       " has no gradient");
    auto& g = p.grad();
    auto& m = m_[pi];
    auto& v = v_[pi];
    for (std::size_t i = 0; i < g.size(); ++i) {
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g[i];
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p.values()[i] -=
          config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
    p.zero_grad();
  }
}

}  // namespace rahn::tensor
