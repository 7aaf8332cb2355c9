#include "tsde/autodiff.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace tsde::ad {

namespace {

Var make_node(Tensor val, std::vector<Var> parents, std::function<void(Node&)> backprop) {
  auto n = std::make_shared<Node>();
  n->val = std::move(val);
  n->parents = std::move(parents);
  for (const auto& p : n->parents)
    if (p->requires_grad) n->requires_grad = true;
  if (n->requires_grad) n->backprop = std::move(backprop);
  return n;
}

void check_same_shape(const Var& a, const Var& b, const char* op) {
  if (!a->val.same_shape(b->val))
    throw std::invalid_argument(std::string(op) + ": shape mismatch " + a->val.shape_str() +
                                " vs " + b->val.shape_str());
}

// y = f(x) elementwise with dy/dx supplied as a function of (x, y).
Var unary_elementwise(const Var& a, double (*f)(double),
                      double (*df)(double, double)) {
  Tensor out(a->val.shape());
  const int64_t n = a->val.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = f(a->val[i]);
  return make_node(std::move(out), {a}, [df](Node& self) {
    Var a = self.parents[0];
    if (!a->requires_grad) return;
    a->ensure_grad();
    const int64_t n = self.val.numel();
    for (int64_t i = 0; i < n; ++i)
      a->grad[i] += self.grad[i] * df(a->val[i], self.val[i]);
  });
}

// out[n,p] += A[n,m] * B[m,p], with optional transposes. ikj loop order.
void gemm_acc(const double* a, const double* b, double* out, int64_t n, int64_t m, int64_t p,
              bool trans_a, bool trans_b) {
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t k = 0; k < m; ++k) {
      const double av = trans_a ? a[k * n + i] : a[i * m + k];
      if (av == 0.0) continue;
      const double* brow = trans_b ? nullptr : b + k * p;
      double* orow = out + i * p;
      if (trans_b) {
        for (int64_t j = 0; j < p; ++j) orow[j] += av * b[j * m + k];
      } else {
        for (int64_t j = 0; j < p; ++j) orow[j] += av * brow[j];
      }
    }
  }
}

}  // namespace

Var param(Tensor value) {
  auto n = std::make_shared<Node>();
  n->val = std::move(value);
  n->requires_grad = true;
  return n;
}

Var constant(Tensor value) {
  auto n = std::make_shared<Node>();
  n->val = std::move(value);
  return n;
}

Var add(const Var& a, const Var& b) {
  check_same_shape(a, b, "add");
  Tensor out(a->val.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->val[i] + b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      p->ensure_grad();
      const int64_t n = self.val.numel();
      for (int64_t i = 0; i < n; ++i) p->grad[i] += self.grad[i];
    }
  });
}

Var sub(const Var& a, const Var& b) {
  check_same_shape(a, b, "sub");
  Tensor out(a->val.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->val[i] - b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    Var a = self.parents[0], b = self.parents[1];
    const int64_t n = self.val.numel();
    if (a->requires_grad) {
      a->ensure_grad();
      for (int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int64_t i = 0; i < n; ++i) b->grad[i] -= self.grad[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  check_same_shape(a, b, "mul");
  Tensor out(a->val.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->val[i] * b->val[i];
  return make_node(std::move(out), {a, b}, [](Node& self) {
    Var a = self.parents[0], b = self.parents[1];
    const int64_t n = self.val.numel();
    if (a->requires_grad) {
      a->ensure_grad();
      for (int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i] * b->val[i];
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int64_t i = 0; i < n; ++i) b->grad[i] += self.grad[i] * a->val[i];
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out(a->val.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->val[i] * s;
  return make_node(std::move(out), {a}, [s](Node& self) {
    Var a = self.parents[0];
    if (!a->requires_grad) return;
    a->ensure_grad();
    const int64_t n = self.val.numel();
    for (int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i] * s;
  });
}

Var cmul(const Var& a, const Tensor& mask) {
  if (!a->val.same_shape(mask))
    throw std::invalid_argument("cmul: shape mismatch");
  Tensor out(a->val.shape());
  const int64_t n = out.numel();
  for (int64_t i = 0; i < n; ++i) out[i] = a->val[i] * mask[i];
  Tensor mask_copy = mask;
  return make_node(std::move(out), {a}, [mask_copy](Node& self) {
    Var a = self.parents[0];
    if (!a->requires_grad) return;
    a->ensure_grad();
    const int64_t n = self.val.numel();
    for (int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i] * mask_copy[i];
  });
}

Var add_rowvec(const Var& x, const Var& v) {
  if (x->val.rank() != 2 || v->val.rank() != 1 || x->val.dim(1) != v->val.dim(0))
    throw std::invalid_argument("add_rowvec: expected [n,c] and [c]");
  const int64_t n = x->val.dim(0), c = x->val.dim(1);
  Tensor out({n, c});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < c; ++j) out.at(i, j) = x->val.at(i, j) + v->val[j];
  return make_node(std::move(out), {x, v}, [n, c](Node& self) {
    Var x = self.parents[0], v = self.parents[1];
    if (x->requires_grad) {
      x->ensure_grad();
      const int64_t total = n * c;
      for (int64_t i = 0; i < total; ++i) x->grad[i] += self.grad[i];
    }
    if (v->requires_grad) {
      v->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < c; ++j) v->grad[j] += self.grad.at(i, j);
    }
  });
}

Var matmul(const Var& x, const Var& w) {
  if (x->val.rank() != 2 || w->val.rank() != 2 || x->val.dim(1) != w->val.dim(0))
    throw std::invalid_argument("matmul: incompatible shapes " + x->val.shape_str() + " x " +
                                w->val.shape_str());
  const int64_t n = x->val.dim(0), m = x->val.dim(1), p = w->val.dim(1);
  Tensor out({n, p});
  gemm_acc(x->val.data(), w->val.data(), out.data(), n, m, p, false, false);
  return make_node(std::move(out), {x, w}, [n, m, p](Node& self) {
    Var x = self.parents[0], w = self.parents[1];
    if (x->requires_grad) {
      x->ensure_grad();
      // dX = dY * W^T
      gemm_acc(self.grad.data(), w->val.data(), x->grad.data(), n, p, m, false, true);
    }
    if (w->requires_grad) {
      w->ensure_grad();
      // dW = X^T * dY
      gemm_acc(x->val.data(), self.grad.data(), w->grad.data(), m, n, p, true, false);
    }
  });
}

Var bmm(const Var& a, const Var& b) {
  if (a->val.rank() != 3 || b->val.rank() != 3 || a->val.dim(0) != b->val.dim(0) ||
      a->val.dim(2) != b->val.dim(1))
    throw std::invalid_argument("bmm: incompatible shapes " + a->val.shape_str() + " x " +
                                b->val.shape_str());
  const int64_t B = a->val.dim(0), n = a->val.dim(1), m = a->val.dim(2), p = b->val.dim(2);
  Tensor out({B, n, p});
  for (int64_t bi = 0; bi < B; ++bi)
    gemm_acc(a->val.data() + bi * n * m, b->val.data() + bi * m * p, out.data() + bi * n * p, n,
             m, p, false, false);
  return make_node(std::move(out), {a, b}, [B, n, m, p](Node& self) {
    Var a = self.parents[0], b = self.parents[1];
    if (a->requires_grad) {
      a->ensure_grad();
      for (int64_t bi = 0; bi < B; ++bi)
        gemm_acc(self.grad.data() + bi * n * p, b->val.data() + bi * m * p,
                 a->grad.data() + bi * n * m, n, p, m, false, true);
    }
    if (b->requires_grad) {
      b->ensure_grad();
      for (int64_t bi = 0; bi < B; ++bi)
        gemm_acc(a->val.data() + bi * n * m, self.grad.data() + bi * n * p,
                 b->grad.data() + bi * m * p, m, n, p, true, false);
    }
  });
}

Var transpose12(const Var& a) {
  if (a->val.rank() != 3) throw std::invalid_argument("transpose12: expected rank 3");
  return permute(a, {0, 2, 1});
}

namespace {

std::vector<int64_t> strides_of(const std::vector<int64_t>& shape) {
  std::vector<int64_t> s(shape.size(), 1);
  for (int i = static_cast<int>(shape.size()) - 2; i >= 0; --i)
    s[static_cast<size_t>(i)] = s[static_cast<size_t>(i) + 1] * shape[static_cast<size_t>(i) + 1];
  return s;
}

void permute_copy(const Tensor& in, Tensor& out, const std::vector<int>& perm) {
  const auto& ishape = in.shape();
  const auto istr = strides_of(ishape);
  const auto ostr = strides_of(out.shape());
  const int r = in.rank();
  const int64_t n = in.numel();
  std::vector<int64_t> idx(static_cast<size_t>(r), 0);
  for (int64_t flat = 0; flat < n; ++flat) {
    int64_t rem = flat;
    int64_t oflat = 0;
    for (int d = 0; d < r; ++d) {
      idx[static_cast<size_t>(d)] = rem / istr[static_cast<size_t>(d)];
      rem %= istr[static_cast<size_t>(d)];
    }
    for (int d = 0; d < r; ++d)
      oflat += idx[static_cast<size_t>(perm[static_cast<size_t>(d)])] * ostr[static_cast<size_t>(d)];
    out[oflat] = in[flat];
  }
}

}  // namespace

Var permute(const Var& a, const std::vector<int>& perm) {
  const int r = a->val.rank();
  if (static_cast<int>(perm.size()) != r)
    throw std::invalid_argument("permute: bad permutation length");
  std::vector<int64_t> oshape(static_cast<size_t>(r));
  for (int d = 0; d < r; ++d)
    oshape[static_cast<size_t>(d)] = a->val.dim(perm[static_cast<size_t>(d)]);
  Tensor out(oshape);
  // out axis d corresponds to in axis perm[d]
  permute_copy(a->val, out, perm);
  std::vector<int> inv(static_cast<size_t>(r));
  for (int d = 0; d < r; ++d) inv[static_cast<size_t>(perm[static_cast<size_t>(d)])] = d;
  return make_node(std::move(out), {a}, [inv](Node& self) {
    Var a = self.parents[0];
    if (!a->requires_grad) return;
    a->ensure_grad();
    Tensor g(a->val.shape());
    permute_copy(self.grad, g, inv);
    const int64_t n = g.numel();
    for (int64_t i = 0; i < n; ++i) a->grad[i] += g[i];
  });
}

Var reshape(const Var& a, std::vector<int64_t> shape) {
  Tensor out = a->val.reshaped(std::move(shape));
  return make_node(std::move(out), {a}, [](Node& self) {
    Var a = self.parents[0];
    if (!a->requires_grad) return;
    a->ensure_grad();
    const int64_t n = self.val.numel();
    for (int64_t i = 0; i < n; ++i) a->grad[i] += self.grad[i];
  });
}

namespace {
double f_relu(double x) { return x > 0 ? x : 0; }
double df_relu(double x, double) { return x > 0 ? 1.0 : 0.0; }
double f_gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }
double df_gelu(double x, double) {
  return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
         x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}
double f_sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double df_sigmoid(double, double y) { return y * (1.0 - y); }
double f_silu(double x) { return x / (1.0 + std::exp(-x)); }
double df_silu(double x, double) {
  double s = 1.0 / (1.0 + std::exp(-x));
  return s * (1.0 + x * (1.0 - s));
}
double f_tanh(double x) { return std::tanh(x); }
double df_tanh(double, double y) { return 1.0 - y * y; }
double f_exp(double x) { return std::exp(x); }
double df_exp(double, double y) { return y; }
double f_log(double x) { return std::log(x); }
double df_log(double x, double) { return 1.0 / x; }
}  // namespace

Var relu(const Var& a) { return unary_elementwise(a, f_relu, df_relu); }
Var gelu(const Var& a) { return unary_elementwise(a, f_gelu, df_gelu); }
Var silu(const Var& a) { return unary_elementwise(a, f_silu, df_silu); }
Var tanh_op(const Var& a) { return unary_elementwise(a, f_tanh, df_tanh); }
Var sigmoid(const Var& a) { return unary_elementwise(a, f_sigmoid, df_sigmoid); }
Var exp_op(const Var& a) { return unary_elementwise(a, f_exp, df_exp); }
Var log_op(const Var& a) { return unary_elementwise(a, f_log, df_log); }

Var softmax_last(const Var& a) {
  if (a->val.rank() < 1) throw std::invalid_argument("softmax_last: rank 0");
  const int64_t d = a->val.dim(a->val.rank() - 1);
  const int64_t rows = a->val.numel() / d;
  Tensor out(a->val.shape());
  for (int64_t r = 0; r < rows; ++r) {
    const double* xi = a->val.data() + r * d;
    double* yi = out.data() + r * d;
    double mx = xi[0];
    for (int64_t j = 1; j < d; ++j) mx = std::max(mx, xi[j]);
    double sum = 0;
    for (int64_t j = 0; j < d; ++j) {
      yi[j] = std::exp(xi[j] - mx);
      sum += yi[j];
    }
    for (int64_t j = 0; j < d; ++j) yi[j] /= sum;
  }
  return make_node(std::move(out), {a}, [d, rows](Node& self) {
    Var a = self.parents[0];
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (int64_t r = 0; r < rows; ++r) {
      const double* y = self.val.data() + r * d;
      const double* gy = self.grad.data() + r * d;
      double* gx = a->grad.data() + r * d;
      double dot = 0;
      for (int64_t j = 0; j < d; ++j) dot += y[j] * gy[j];
      for (int64_t j = 0; j < d; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
}

Var layernorm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  if (x->val.rank() != 2 || gamma->val.rank() != 1 || beta->val.rank() != 1 ||
      gamma->val.dim(0) != x->val.dim(1) || beta->val.dim(0) != x->val.dim(1))
    throw std::invalid_argument("layernorm: expected [n,d], [d], [d]");
  const int64_t n = x->val.dim(0), d = x->val.dim(1);
  Tensor out({n, d});
  Tensor xhat({n, d});
  Tensor inv_std({n});
  for (int64_t i = 0; i < n; ++i) {
    const double* xi = x->val.data() + i * d;
    double mean = 0;
    for (int64_t j = 0; j < d; ++j) mean += xi[j];
    mean /= static_cast<double>(d);
    double var = 0;
    for (int64_t j = 0; j < d; ++j) var += (xi[j] - mean) * (xi[j] - mean);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[i] = is;
    for (int64_t j = 0; j < d; ++j) {
      xhat.at(i, j) = (xi[j] - mean) * is;
      out.at(i, j) = xhat.at(i, j) * gamma->val[j] + beta->val[j];
    }
  }
  Tensor xhat_c = xhat, inv_std_c = inv_std;
  return make_node(std::move(out), {x, gamma, beta},
                   [n, d, xhat_c, inv_std_c](Node& self) {
    Var x = self.parents[0], gamma = self.parents[1], beta = self.parents[2];
    if (gamma->requires_grad) {
      gamma->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j)
          gamma->grad[j] += self.grad.at(i, j) * xhat_c.at(i, j);
    }
    if (beta->requires_grad) {
      beta->ensure_grad();
      for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < d; ++j) beta->grad[j] += self.grad.at(i, j);
    }
    if (x->requires_grad) {
      x->ensure_grad();
      for (int64_t i = 0; i < n; ++i) {
        double mean_g = 0, mean_gx = 0;
        for (int64_t j = 0; j < d; ++j) {
          const double g = self.grad.at(i, j) * gamma->val[j];
          mean_g += g;
          mean_gx += g * xhat_c.at(i, j);
        }
        mean_g /= static_cast<double>(d);
        mean_gx /= static_cast<double>(d);
        for (int64_t j = 0; j < d; ++j) {
          const double g = self.grad.at(i, j) * gamma->val[j];
          x->grad.at(i, j) += (g - mean_g - xhat_c.at(i, j) * mean_gx) * inv_std_c[i];
        }
      }
    }
  });
}

Var concat_last(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_last: no parts");
  const int r = parts[0]->val.rank();
  int64_t total_last = 0;
  int64_t lead = parts[0]->val.numel() / parts[0]->val.dim(r - 1);
  for (const auto& p : parts) {
    if (p->val.rank() != r || p->val.numel() / p->val.dim(r - 1) != lead)
      throw std::invalid_argument("concat_last: leading dims mismatch");
    total_last += p->val.dim(r - 1);
  }
  std::vector<int64_t> oshape = parts[0]->val.shape();
  oshape[static_cast<size_t>(r - 1)] = total_last;
  Tensor out(oshape);
  std::vector<int64_t> widths;
  for (const auto& p : parts) widths.push_back(p->val.dim(r - 1));
  for (int64_t row = 0; row < lead; ++row) {
    int64_t off = 0;
    for (size_t pi = 0; pi < parts.size(); ++pi) {
      const int64_t w = widths[pi];
      const double* src = parts[pi]->val.data() + row * w;
      double* dst = out.data() + row * total_last + off;
      for (int64_t j = 0; j < w; ++j) dst[j] = src[j];
      off += w;
    }
  }
  return make_node(std::move(out), parts, [lead, total_last, widths](Node& self) {
    int64_t off = 0;
    for (size_t pi = 0; pi < self.parents.size(); ++pi) {
      const int64_t w = widths[pi];
      Var p = self.parents[pi];
      if (p->requires_grad) {
        p->ensure_grad();
        for (int64_t row = 0; row < lead; ++row) {
          const double* g = self.grad.data() + row * total_last + off;
          double* dst = p->grad.data() + row * w;
          for (int64_t j = 0; j < w; ++j) dst[j] += g[j];
        }
      }
      off += w;
    }
  });
}

Var slice_last(const Var& a, int64_t from, int64_t to) {
  const int r = a->val.rank();
  const int64_t last = a->val.dim(r - 1);
  if (from < 0 || to > last || from >= to)
    throw std::invalid_argument("slice_last: bad range");
  const int64_t w = to - from;
  const int64_t lead = a->val.numel() / last;
  std::vector<int64_t> oshape = a->val.shape();
  oshape[static_cast<size_t>(r - 1)] = w;
  Tensor out(oshape);
  for (int64_t row = 0; row < lead; ++row)
    for (int64_t j = 0; j < w; ++j) out[row * w + j] = a->val[row * last + from + j];
  return make_node(std::move(out), {a}, [lead, last, from, w](Node& self) {
    Var a = self.parents[0];
    if (!a->requires_grad) return;
    a->ensure_grad();
    for (int64_t row = 0; row < lead; ++row)
      for (int64_t j = 0; j < w; ++j)
        a->grad[row * last + from + j] += self.grad[row * w + j];
  });
}

Var rows(const Var& table, std::vector<int64_t> indices) {
  if (table->val.rank() != 2) throw std::invalid_argument("rows: expected [N,d] table");
  const int64_t N = table->val.dim(0), d = table->val.dim(1);
  const int64_t n = static_cast<int64_t>(indices.size());
  for (int64_t idx : indices)
    if (idx < 0 || idx >= N) throw std::out_of_range("rows: index out of range");
  Tensor out({n, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < d; ++j) out.at(i, j) = table->val.at(indices[static_cast<size_t>(i)], j);
  return make_node(std::move(out), {table}, [indices, d](Node& self) {
    Var t = self.parents[0];
    if (!t->requires_grad) return;
    t->ensure_grad();
    const int64_t n = static_cast<int64_t>(indices.size());
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < d; ++j)
        t->grad.at(indices[static_cast<size_t>(i)], j) += self.grad.at(i, j);
  });
}

Var sum_all(const Var& a) {
  double s = 0;
  const int64_t n = a->val.numel();
  for (int64_t i = 0; i < n; ++i) s += a->val[i];
  return make_node(Tensor::scalar(s), {a}, [](Node& self) {
    Var a = self.parents[0];
    if (!a->requires_grad) return;
    a->ensure_grad();
    const double g = self.grad[0];
    const int64_t n = a->val.numel();
    for (int64_t i = 0; i < n; ++i) a->grad[i] += g;
  });
}

void backward(const Var& root) {
  if (root->val.numel() != 1)
    throw std::invalid_argument("backward: root must be a scalar");
  // Iterative post-order DFS to get a topological order.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack;
  stack.emplace_back(root.get(), 0);
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, child] = stack.back();
    if (child < node->parents.size()) {
      Node* p = node->parents[child].get();
      ++child;
      if (p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  root->ensure_grad();
  root->grad[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop && n->has_grad()) n->backprop(*n);
  }
}

}  // namespace tsde::ad
