#include <algorithm>
#include <cmath>

#include "chartab/engine.hpp"
#include "chartab/error.hpp"
#include "chartab/kernels.hpp"

namespace chartab::engine {

using detail::Node;

namespace {

using Backward = std::function<void(Node&)>;

Tensor make(Shape shape, std::vector<double> value, const char* op,
            std::vector<std::shared_ptr<Node>> parents, Backward backward) {
  auto node = std::make_shared<Node>();
  node->shape = shape;
  node->value = std::move(value);
  node->op = op;
  const bool track = grad_enabled() && std::any_of(parents.begin(), parents.end(),
                                                   [](const auto& p) { return p->requires_grad; });
  if (track) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape().str() + " and " +
                   b.shape().str());
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error(op, a, b);
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n, 0.0);
  kernels::matmul(a.values(), b.values(), out, m, k, n);
  return make({m, n}, std::move(out), "matmul", {a.node(), b.node()}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) kernels::matmul_a_bt(self.grad, pb.value, pa.grad_buffer(), m, n, k);
    if (pb.requires_grad) kernels::matmul_at_b(pa.value, self.grad, pb.grad_buffer(), m, k, n);
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same("add", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
  return make(a.shape(), std::move(out), "add", {a.node(), b.node()}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same("sub", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
  return make(a.shape(), std::move(out), "sub", {a.node(), b.node()}, [](Node& self) {
    if (self.parents[0]->requires_grad) {
      auto g = self.parents[0]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      auto g = self.parents[1]->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same("mul", a, b);
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
  return make(a.shape(), std::move(out), "mul", {a.node(), b.node()}, [](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    if (pa.requires_grad) {
      auto g = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto g = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.value[i];
    }
  });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) shape_error("add_row", x, bias);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.values().begin(), x.values().end());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.values()[j];
  }
  return make(x.shape(), std::move(out), "add_row", {x.node(), bias.node()},
              [m, n](Node& self) {
                if (self.parents[0]->requires_grad) {
                  auto g = self.parents[0]->grad_buffer();
                  for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                }
                if (self.parents[1]->requires_grad) {
                  auto g = self.parents[1]->grad_buffer();
                  for (std::size_t i = 0; i < m; ++i) {
                    for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
                  }
                }
              });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] * factor;
  return make(x.shape(), std::move(out), "scale", {x.node()}, [factor](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_scalar(const Tensor& x, double value) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] + value;
  return make(x.shape(), std::move(out), "add_scalar", {x.node()}, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor relu(const Tensor& x) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, x.values()[i]);
  return make(x.shape(), std::move(out), "relu", {x.node()}, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (self.value[i] > 0.0) g[i] += self.grad[i];
    }
  });
}

Tensor softmax(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.values().data() + i * n;
    const double peak = *std::max_element(row, row + n);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) total += out[i * n + j] = std::exp(row[j] - peak);
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= total;
  }
  return make(x.shape(), std::move(out), "softmax", {x.node()}, [m, n](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      const double* y = self.value.data() + i * n;
      const double* dy = self.grad.data() + i * n;
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[j] * (dy[j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  if (gamma.rows() != 1 || gamma.cols() != x.cols()) shape_error("layer_norm", x, gamma);
  if (beta.shape() != gamma.shape()) shape_error("layer_norm", x, beta);
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> normalized(m * n);
  std::vector<double> inv_std(m);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = x.values().data() + i * n;
    double mu = 0.0;
    for (std::size_t j = 0; j < n; ++j) mu += row[j];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<double>(n);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < n; ++j) {
      normalized[i * n + j] = (row[j] - mu) * inv_std[i];
      out[i * n + j] = gamma.values()[j] * normalized[i * n + j] + beta.values()[j];
    }
  }
  return make(x.shape(), std::move(out), "layer_norm", {x.node(), gamma.node(), beta.node()},
              [m, n, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& self) {
                Node& px = *self.parents[0];
                Node& pg = *self.parents[1];
                Node& pb = *self.parents[2];
                if (pg.requires_grad) {
                  auto gg = pg.grad_buffer();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                      gg[j] += self.grad[i * n + j] * normalized[i * n + j];
                }
                if (pb.requires_grad) {
                  auto gb = pb.grad_buffer();
                  for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
                }
                if (!px.requires_grad) return;
                auto gx = px.grad_buffer();
                std::vector<double> dxhat(n);
                for (std::size_t i = 0; i < m; ++i) {
                  double mean_d = 0.0, mean_dx = 0.0;
                  for (std::size_t j = 0; j < n; ++j) {
                    dxhat[j] = self.grad[i * n + j] * pg.value[j];
                    mean_d += dxhat[j];
                    mean_dx += dxhat[j] * normalized[i * n + j];
                  }
                  mean_d /= static_cast<double>(n);
                  mean_dx /= static_cast<double>(n);
                  for (std::size_t j = 0; j < n; ++j) {
                    gx[i * n + j] +=
                        inv_std[i] * (dxhat[j] - mean_d - normalized[i * n + j] * mean_dx);
                  }
                }
              });
}

Tensor layer_norm(const Tensor& x, double eps) {
  Tensor gamma = Tensor::from({1, x.cols()}, std::vector<double>(x.cols(), 1.0));
  Tensor beta = Tensor::zeros({1, x.cols()});
  return layer_norm(x, gamma, beta, eps);
}

Tensor transpose(const Tensor& x) {
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = x.values()[i * n + j];
  }
  return make({n, m}, std::move(out), "transpose", {x.node()}, [m, n](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
    }
  });
}

Tensor slice_cols(const Tensor& x, std::size_t start, std::size_t count) {
  if (start + count > x.cols()) {
    throw ShapeError("slice_cols: columns [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " + x.shape().str());
  }
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(x.values().data() + i * n + start, count, out.data() + i * count);
  }
  return make({m, count}, std::move(out), "slice_cols", {x.node()},
              [m, n, start, count](Node& self) {
                auto g = self.parents[0]->grad_buffer();
                for (std::size_t i = 0; i < m; ++i) {
                  for (std::size_t j = 0; j < count; ++j) {
                    g[i * n + start + j] += self.grad[i * count + j];
                  }
                }
              });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) shape_error("concat_cols", parts[0], p);
    n += p.cols();
  }
  std::vector<double> out(m * n);
  std::vector<std::shared_ptr<Node>> parents;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < m; ++i) {
      std::copy_n(p.values().data() + i * p.cols(), p.cols(), out.data() + i * n + offset);
    }
    offset += p.cols();
    parents.push_back(p.node());
  }
  return make({m, n}, std::move(out), "concat_cols", std::move(parents), [m, n](Node& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      const std::size_t w = p->shape.cols;
      if (p->requires_grad) {
        auto g = p->grad_buffer();
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < w; ++j) g[i * w + j] += self.grad[i * n + offset + j];
        }
      }
      offset += w;
    }
  });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) shape_error("concat_rows", parts[0], p);
    m += p.rows();
  }
  std::vector<double> out;
  out.reserve(m * n);
  std::vector<std::shared_ptr<Node>> parents;
  for (const auto& p : parts) {
    out.insert(out.end(), p.values().begin(), p.values().end());
    parents.push_back(p.node());
  }
  return make({m, n}, std::move(out), "concat_rows", std::move(parents), [](Node& self) {
    std::size_t offset = 0;
    for (auto& p : self.parents) {
      const std::size_t count = p->shape.numel();
      if (p->requires_grad) {
        auto g = p->grad_buffer();
        for (std::size_t i = 0; i < count; ++i) g[i] += self.grad[offset + i];
      }
      offset += count;
    }
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape.numel() != x.numel()) {
    throw ShapeError("reshape: cannot view " + x.shape().str() + " as " + shape.str());
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make(shape, std::move(out), "reshape", {x.node()}, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor flatten(const Tensor& x) { return reshape(x, {1, x.numel()}); }

Tensor pad_cols(const Tensor& x, std::size_t cols) {
  if (cols < x.cols()) {
    throw ShapeError("pad_cols: cannot pad " + x.shape().str() + " to " + std::to_string(cols) +
                     " columns");
  }
  if (cols == x.cols()) return x;
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * cols, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    std::copy_n(x.values().data() + i * n, n, out.data() + i * cols);
  }
  return make({m, cols}, std::move(out), "pad_cols", {x.node()}, [m, n, cols](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[i * cols + j];
    }
  });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make({1, 1}, {total}, "sum", {x.node()}, [](Node& self) {
    auto g = self.parents[0]->grad_buffer();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor l1_loss(const Tensor& pred, const Tensor& target) {
  require_same("l1_loss", pred, target);
  const std::size_t count = pred.numel();
  if (count == 0) throw ShapeError("l1_loss of empty tensors");
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) total += std::abs(pred.values()[i] - target.values()[i]);
  return make({1, 1}, {total / static_cast<double>(count)}, "l1_loss",
              {pred.node(), target.node()}, [count](Node& self) {
                Node& pp = *self.parents[0];
                Node& pt = *self.parents[1];
                const double g = self.grad[0] / static_cast<double>(count);
                for (std::size_t i = 0; i < count; ++i) {
                  const double d = pp.value[i] - pt.value[i];
                  const double s = d > 0.0 ? g : (d < 0.0 ? -g : 0.0);
                  if (pp.requires_grad) pp.grad_buffer()[i] += s;
                  if (pt.requires_grad) pt.grad_buffer()[i] -= s;
                }
              });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (labels.size() != m) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     logits.shape().str());
  }
  std::vector<double> probs(m * n);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (labels[i] >= n) {
      throw ShapeError("cross_entropy: class index " + std::to_string(labels[i]) +
                       " out of range for " + std::to_string(n) + " classes");
    }
    const double* row = logits.values().data() + i * n;
    const double peak = *std::max_element(row, row + n);
    double z = 0.0;
    for (std::size_t j = 0; j < n; ++j) z += std::exp(row[j] - peak);
    const double lse = peak + std::log(z);
    for (std::size_t j = 0; j < n; ++j) probs[i * n + j] = std::exp(row[j] - lse);
    total += lse - row[labels[i]];
  }
  std::vector<std::size_t> owned(labels.begin(), labels.end());
  return make({1, 1}, {total / static_cast<double>(m)}, "cross_entropy", {logits.node()},
              [m, n, probs = std::move(probs), owned = std::move(owned)](Node& self) {
                auto g = self.parents[0]->grad_buffer();
                const double s = self.grad[0] / static_cast<double>(m);
                for (std::size_t i = 0; i < m; ++i) {
                  for (std::size_t j = 0; j < n; ++j) {
                    const double hot = j == owned[i] ? 1.0 : 0.0;
                    g[i * n + j] += s * (probs[i * n + j] - hot);
                  }
                }
              });
}

Tensor cross_entropy(const Tensor& logits, std::size_t label) {
  if (logits.rows() != 1) throw ShapeError("cross_entropy: expected a single row of logits");
  const std::size_t labels[] = {label};
  return cross_entropy(logits, labels);
}

}  // namespace chartab::engine
