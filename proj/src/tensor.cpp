#include "kmoco/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_set>

#include "kmoco/errors.hpp"
#include "kmoco/kernels.hpp"

namespace kmoco {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (numel(shape_) != data_.size())
    throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                         " does not match shape " + shape_str(shape_));
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = shape_.at(1);
  return std::span<const double>(data_).subspan(r * c, c);
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = shape_.at(1);
  return std::span<double>(data_).subspan(r * c, c);
}

double Tensor::item() const {
  if (data_.size() != 1) throw DimensionError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::reshaped(Shape shape) const {
  if (numel(shape) != data_.size())
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

void check_finite(const Tensor& t, const char* what) {
  if (!t.all_finite()) throw NumericError(std::string("non-finite value in ") + what);
}

namespace ad {

Tensor& Node::grad_buffer() {
  if (!grad) grad.emplace(value.shape(), 0.0);
  return *grad;
}

namespace {

using kernels::parallel::gemm_nn;
using kernels::parallel::gemm_nt;
using kernels::parallel::gemm_tn;

Var make_op(Tensor value, const char* name, std::vector<Var> inputs,
            std::function<void(Node&)> backward) {
  check_finite(value, name);
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  for (const auto& in : inputs)
    if (in.requires_grad()) node->requires_grad = true;
  if (node->requires_grad) {
    for (const auto& in : inputs) node->parents.push_back(in.ptr());
    node->backward = std::move(backward);
  }
  return Var(std::move(node));
}

void accumulate(Node* parent, const Tensor& g) {
  if (!parent->requires_grad) return;
  auto& buf = parent->grad_buffer().vec();
  const auto& src = g.vec();
  for (std::size_t i = 0; i < buf.size(); ++i) buf[i] += src[i];
}

void require_rank(const Var& x, std::size_t rank, const char* op) {
  if (x.shape().size() != rank)
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
}

}  // namespace

Var parameter(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = true;
  return Var(std::move(node));
}

Var constant(Tensor value) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  return Var(std::move(node));
}

Var detach(const Var& x) { return constant(x.value()); }

void backward(const Var& out) {
  if (out.value().size() != 1)
    throw DimensionError("backward() needs a scalar, got " + shape_str(out.shape()));
  if (!out.requires_grad()) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{out.node(), 0}};
  seen.insert(out.node());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.push_back({p, 0});
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  out.node()->grad_buffer().vec()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward && n->grad) n->backward(*n);
  }
}

Var matmul(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul");
  require_rank(b, 2, "matmul");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  if (b.shape()[0] != k)
    throw DimensionError("matmul: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out({m, n});
  gemm_nn(m, n, k, a.value().data().data(), b.value().data().data(), out.data().data(), false);
  return make_op(std::move(out), "matmul", {a, b}, [m, n, k](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    const double* g = self.grad->data().data();
    if (pa->requires_grad)
      gemm_nt(m, k, n, g, pb->value.data().data(), pa->grad_buffer().data().data(), true);
    if (pb->requires_grad)
      gemm_tn(k, n, m, pa->value.data().data(), g, pb->grad_buffer().data().data(), true);
  });
}

Var matmul_nt(const Var& a, const Var& b) {
  require_rank(a, 2, "matmul_nt");
  require_rank(b, 2, "matmul_nt");
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[0];
  if (b.shape()[1] != k)
    throw DimensionError("matmul_nt: " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                         "ᵀ");
  Tensor out({m, n});
  gemm_nt(m, n, k, a.value().data().data(), b.value().data().data(), out.data().data(), false);
  return make_op(std::move(out), "matmul_nt", {a, b}, [m, n, k](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    const double* g = self.grad->data().data();
    if (pa->requires_grad)
      gemm_nn(m, k, n, g, pb->value.data().data(), pa->grad_buffer().data().data(), true);
    if (pb->requires_grad)
      gemm_tn(n, k, m, g, pa->value.data().data(), pb->grad_buffer().data().data(), true);
  });
}

Var bmm(const Var& a, const Var& b) {
  require_rank(a, 3, "bmm");
  require_rank(b, 3, "bmm");
  const std::size_t bs = a.shape()[0], m = a.shape()[1], k = a.shape()[2], n = b.shape()[2];
  if (b.shape()[0] != bs || b.shape()[1] != k)
    throw DimensionError("bmm: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  Tensor out({bs, m, n});
  for (std::size_t i = 0; i < bs; ++i)
    gemm_nn(m, n, k, a.value().data().data() + i * m * k, b.value().data().data() + i * k * n,
            out.data().data() + i * m * n, false);
  return make_op(std::move(out), "bmm", {a, b}, [bs, m, n, k](Node& self) {
    Node* pa = self.parents[0].get();
    Node* pb = self.parents[1].get();
    const double* g = self.grad->data().data();
    for (std::size_t i = 0; i < bs; ++i) {
      if (pa->requires_grad)
        gemm_nt(m, k, n, g + i * m * n, pb->value.data().data() + i * k * n,
                pa->grad_buffer().data().data() + i * m * k, true);
      if (pb->requires_grad)
        gemm_tn(k, n, m, pa->value.data().data() + i * m * k, g + i * m * n,
                pb->grad_buffer().data().data() + i * k * n, true);
    }
  });
}

Var add(const Var& a, const Var& b) {
  if (a.shape() != b.shape())
    throw DimensionError("add: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  return make_op(std::move(out), "add", {a, b}, [](Node& self) {
    accumulate(self.parents[0].get(), *self.grad);
    accumulate(self.parents[1].get(), *self.grad);
  });
}

Var add_bias(const Var& x, const Var& bias) {
  require_rank(x, 2, "add_bias");
  require_rank(bias, 1, "add_bias");
  const std::size_t m = x.shape()[0], n = x.shape()[1];
  if (bias.shape()[0] != n)
    throw DimensionError("add_bias: " + shape_str(x.shape()) + " + " + shape_str(bias.shape()));
  Tensor out = x.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += bias.value()[j];
  return make_op(std::move(out), "add_bias", {x, bias}, [m, n](Node& self) {
    accumulate(self.parents[0].get(), *self.grad);
    Node* pb = self.parents[1].get();
    if (!pb->requires_grad) return;
    auto& gb = pb->grad_buffer();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gb[j] += (*self.grad)[i * n + j];
  });
}

Var scale(const Var& x, double s) {
  Tensor out = x.value();
  for (auto& v : out.vec()) v *= s;
  return make_op(std::move(out), "scale", {x}, [s](Node& self) {
    Node* p = self.parents[0].get();
    auto& g = p->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * (*self.grad)[i];
  });
}

Var relu(const Var& x) {
  Tensor out = x.value();
  for (auto& v : out.vec()) v = v > 0.0 ? v : 0.0;
  return make_op(std::move(out), "relu", {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    auto& g = p->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (p->value[i] > 0.0) g[i] += (*self.grad)[i];
  });
}

Var l2_normalize(const Var& x) {
  if (x.shape().empty()) throw DimensionError("l2_normalize: scalar input");
  const std::size_t d = x.shape().back();
  const std::size_t rows = d == 0 ? 0 : x.value().size() / d;
  Tensor out = x.value();
  std::vector<double> norms(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += out[r * d + j] * out[r * d + j];
    const double nrm = std::sqrt(s);
    if (!(nrm > 0.0))
      throw NumericError("l2_normalize: zero vector in row " + std::to_string(r));
    norms[r] = nrm;
    for (std::size_t j = 0; j < d; ++j) out[r * d + j] /= nrm;
  }
  return make_op(std::move(out), "l2_normalize", {x}, [rows, d, norms](Node& self) {
    // dv = (I − u uᵀ) g / ‖v‖
    Node* p = self.parents[0].get();
    auto& gx = p->grad_buffer();
    const auto& u = self.value;
    const auto& g = *self.grad;
    for (std::size_t r = 0; r < rows; ++r) {
      double ug = 0.0;
      for (std::size_t j = 0; j < d; ++j) ug += u[r * d + j] * g[r * d + j];
      for (std::size_t j = 0; j < d; ++j)
        gx[r * d + j] += (g[r * d + j] - u[r * d + j] * ug) / norms[r];
    }
  });
}

Var concat(const std::vector<Var>& xs, std::size_t axis) {
  if (xs.empty()) throw DimensionError("concat: no inputs");
  const Shape& s0 = xs[0].shape();
  if (axis >= s0.size()) throw DimensionError("concat: axis out of range");
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  std::size_t trailing = 1;
  for (std::size_t i = axis + 1; i < s0.size(); ++i) trailing *= s0[i];

  Shape out_shape = s0;
  out_shape[axis] = 0;
  std::vector<std::size_t> block;  // per-input inner block length
  for (const auto& x : xs) {
    const Shape& s = x.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != s0[i]) ok = false;
    if (!ok)
      throw DimensionError("concat: " + shape_str(s) + " incompatible with " + shape_str(s0));
    out_shape[axis] += s[axis];
    block.push_back(s[axis] * trailing);
  }
  const std::size_t out_block = out_shape[axis] * trailing;
  Tensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double* src = xs[i].value().data().data() + o * block[i];
      std::copy(src, src + block[i], out.data().data() + o * out_block + off);
      off += block[i];
    }
  }
  return make_op(std::move(out), "concat", xs, [outer, block, out_block](Node& self) {
    for (std::size_t o = 0; o < outer; ++o) {
      std::size_t off = 0;
      for (std::size_t i = 0; i < self.parents.size(); ++i) {
        Node* p = self.parents[i].get();
        if (p->requires_grad) {
          auto& g = p->grad_buffer();
          for (std::size_t j = 0; j < block[i]; ++j)
            g[o * block[i] + j] += (*self.grad)[o * out_block + off + j];
        }
        off += block[i];
      }
    }
  });
}

Var reshape(const Var& x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return make_op(std::move(out), "reshape", {x}, [](Node& self) {
    Node* p = self.parents[0].get();
    auto& g = p->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += (*self.grad)[i];
  });
}

Var mean(const Var& x) {
  const std::size_t n = x.value().size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return make_op(Tensor::scalar(s / static_cast<double>(n)), "mean", {x}, [n](Node& self) {
    Node* p = self.parents[0].get();
    const double g = (*self.grad)[0] / static_cast<double>(n);
    for (auto& v : p->grad_buffer().vec()) v += g;
  });
}

Var gather_rows(const Var& x, std::span<const std::size_t> rows) {
  if (x.shape().empty()) throw DimensionError("gather_rows: scalar input");
  const std::size_t m = x.shape()[0];
  const std::size_t width = m == 0 ? 0 : x.value().size() / m;
  Shape out_shape = x.shape();
  out_shape[0] = rows.size();
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= m) throw DimensionError("gather_rows: index out of range");
    std::copy_n(x.value().data().data() + rows[r] * width, width, out.data().data() + r * width);
  }
  std::vector<std::size_t> idx(rows.begin(), rows.end());
  return make_op(std::move(out), "gather_rows", {x}, [idx, width](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (std::size_t j = 0; j < width; ++j) g[idx[r] * width + j] += (*self.grad)[r * width + j];
  });
}

Var softmax_cross_entropy(const Var& logits, std::span<const std::size_t> targets) {
  require_rank(logits, 2, "softmax_cross_entropy");
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  if (targets.size() != rows) throw DimensionError("softmax_cross_entropy: target count");
  if (rows == 0) throw DimensionError("softmax_cross_entropy: no rows");
  Tensor probs({rows, cols});
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] >= cols) throw DimensionError("softmax_cross_entropy: target out of range");
    auto l = logits.value().row(r);
    const double mx = *std::max_element(l.begin(), l.end());
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) z += std::exp(l[j] - mx);
    for (std::size_t j = 0; j < cols; ++j) probs.at(r, j) = std::exp(l[j] - mx) / z;
    total += (std::log(z) + mx) - l[targets[r]];
  }
  std::vector<std::size_t> t(targets.begin(), targets.end());
  return make_op(Tensor::scalar(total / static_cast<double>(rows)), "softmax_cross_entropy",
                 {logits}, [probs = std::move(probs), t, rows, cols](Node& self) {
                   auto& g = self.parents[0]->grad_buffer();
                   const double s = (*self.grad)[0] / static_cast<double>(rows);
                   for (std::size_t r = 0; r < rows; ++r)
                     for (std::size_t j = 0; j < cols; ++j)
                       g[r * cols + j] += s * (probs.at(r, j) - (j == t[r] ? 1.0 : 0.0));
                 });
}

Var multi_label_cross_entropy(const Var& logits,
                              const std::vector<std::vector<std::size_t>>& targets,
                              NnDenominator mode) {
  require_rank(logits, 2, "multi_label_cross_entropy");
  const std::size_t rows = logits.shape()[0], cols = logits.shape()[1];
  if (targets.size() != rows) throw DimensionError("multi_label_cross_entropy: target rows");
  if (rows == 0) throw DimensionError("multi_label_cross_entropy: no rows");

  Tensor dlogits({rows, cols});  // d(mean loss)/d logits
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& tr = targets[r];
    if (tr.empty()) throw DimensionError("multi_label_cross_entropy: empty target set");
    for (auto j : tr)
      if (j >= cols) throw RetrievalError("multi_label_cross_entropy: target index out of range");
    auto l = logits.value().row(r);
    auto d = dlogits.row(r);
    const double mx = *std::max_element(l.begin(), l.end());
    const double invk = 1.0 / static_cast<double>(tr.size());
    if (mode == NnDenominator::kIncludeTargets) {
      double z = 0.0;
      for (std::size_t j = 0; j < cols; ++j) z += std::exp(l[j] - mx);
      const double lse = std::log(z) + mx;
      double row_loss = 0.0;
      for (auto j : tr) row_loss += lse - l[j];
      total += row_loss * invk;
      for (std::size_t j = 0; j < cols; ++j) d[j] = std::exp(l[j] - mx) / z;
      for (auto j : tr) d[j] -= invk;
    } else {
      std::vector<char> is_target(cols, 0);
      for (auto j : tr) is_target[j] = 1;
      double sneg = 0.0;
      for (std::size_t j = 0; j < cols; ++j)
        if (!is_target[j]) sneg += std::exp(l[j] - mx);
      double row_loss = 0.0;
      double share = 0.0;  // Σ_j 1/Z_j over targets, for the negative-column gradient
      for (auto j : tr) {
        const double ej = std::exp(l[j] - mx);
        const double zj = ej + sneg;
        row_loss += std::log(zj) - (l[j] - mx);
        d[j] += invk * (ej / zj - 1.0);
        share += 1.0 / zj;
      }
      total += row_loss * invk;
      for (std::size_t j = 0; j < cols; ++j)
        if (!is_target[j]) d[j] += invk * std::exp(l[j] - mx) * share;
    }
  }
  return make_op(Tensor::scalar(total / static_cast<double>(rows)), "multi_label_cross_entropy",
                 {logits}, [dl = std::move(dlogits), rows](Node& self) {
                   auto& g = self.parents[0]->grad_buffer();
                   const double s = (*self.grad)[0] / static_cast<double>(rows);
                   for (std::size_t i = 0; i < g.size(); ++i) g[i] += s * dl[i];
                 });
}

Var conv3x3(const Var& x, const Var& w, const Var& b) {
  require_rank(x, 4, "conv3x3");
  require_rank(w, 4, "conv3x3");
  require_rank(b, 1, "conv3x3");
  kernels::ConvDims d{x.shape()[0], x.shape()[1], w.shape()[0], x.shape()[2], x.shape()[3]};
  if (w.shape()[1] != d.in_ch || w.shape()[2] != 3 || w.shape()[3] != 3 ||
      b.shape()[0] != d.out_ch)
    throw DimensionError("conv3x3: x" + shape_str(x.shape()) + " w" + shape_str(w.shape()) +
                         " b" + shape_str(b.shape()));
  Tensor out({d.batch, d.out_ch, d.height, d.width});
  kernels::parallel::conv3x3_forward(d, x.value().data().data(), w.value().data().data(),
                                     b.value().data().data(), out.data().data());
  return make_op(std::move(out), "conv3x3", {x, w, b}, [d](Node& self) {
    Node* px = self.parents[0].get();
    Node* pw = self.parents[1].get();
    Node* pb = self.parents[2].get();
    Tensor dw(pw->value.shape()), db(pb->value.shape());
    Tensor dx;
    if (px->requires_grad) dx = Tensor(px->value.shape());
    kernels::parallel::conv3x3_backward(d, px->value.data().data(), pw->value.data().data(),
                                        self.grad->data().data(),
                                        px->requires_grad ? dx.data().data() : nullptr,
                                        dw.data().data(), db.data().data());
    if (px->requires_grad) accumulate(px, dx);
    accumulate(pw, dw);
    accumulate(pb, db);
  });
}

Var avg_pool2(const Var& x) {
  require_rank(x, 4, "avg_pool2");
  const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  if (H % 2 || W % 2) throw DimensionError("avg_pool2: odd spatial size " + shape_str(x.shape()));
  const std::size_t h = H / 2, w = W / 2;
  Tensor out({B, C, h, w});
  const auto& in = x.value();
  for (std::size_t bc = 0; bc < B * C; ++bc)
    for (std::size_t r = 0; r < h; ++r)
      for (std::size_t c = 0; c < w; ++c) {
        const std::size_t base = bc * H * W + 2 * r * W + 2 * c;
        out[bc * h * w + r * w + c] =
            0.25 * (in[base] + in[base + 1] + in[base + W] + in[base + W + 1]);
      }
  return make_op(std::move(out), "avg_pool2", {x}, [B, C, H, W, h, w](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t bc = 0; bc < B * C; ++bc)
      for (std::size_t r = 0; r < h; ++r)
        for (std::size_t c = 0; c < w; ++c) {
          const double v = 0.25 * (*self.grad)[bc * h * w + r * w + c];
          const std::size_t base = bc * H * W + 2 * r * W + 2 * c;
          g[base] += v;
          g[base + 1] += v;
          g[base + W] += v;
          g[base + W + 1] += v;
        }
  });
}

Var global_avg_pool(const Var& x) {
  require_rank(x, 4, "global_avg_pool");
  const std::size_t B = x.shape()[0], C = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
  if (hw == 0) throw DimensionError("global_avg_pool: empty spatial extent");
  Tensor out({B, C});
  for (std::size_t bc = 0; bc < B * C; ++bc) {
    double s = 0.0;
    for (std::size_t j = 0; j < hw; ++j) s += x.value()[bc * hw + j];
    out[bc] = s / static_cast<double>(hw);
  }
  return make_op(std::move(out), "global_avg_pool", {x}, [B, C, hw](Node& self) {
    auto& g = self.parents[0]->grad_buffer();
    for (std::size_t bc = 0; bc < B * C; ++bc) {
      const double v = (*self.grad)[bc] / static_cast<double>(hw);
      for (std::size_t j = 0; j < hw; ++j) g[bc * hw + j] += v;
    }
  });
}

}  // namespace ad
}  // namespace kmoco
