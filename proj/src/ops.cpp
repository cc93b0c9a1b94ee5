// SPDX-License-Identifier: Apache-2.0
#include "msat/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "msat/errors.hpp"

namespace msat {

namespace {

using detail::Node;

/// Input i of `out` when it wants a gradient, else null.
Node* grad_input(Node& out, std::size_t i) {
  Node* n = out.inputs[i].get();
  return n->requires_grad ? n : nullptr;
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
  }
}

[[noreturn]] void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                       " and " + shape_string(b.shape()));
}

enum class Broadcast { Equal, LeftScalar, RightScalar };

Broadcast broadcast_kind(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() == b.shape()) return Broadcast::Equal;
  if (b.numel() == 1) return Broadcast::RightScalar;
  if (a.numel() == 1) return Broadcast::LeftScalar;
  mismatch(op, a, b);
}

std::size_t row_vector_length(const char* op, const Tensor& x, const Tensor& v) {
  require_matrix(x, op);
  if (v.numel() != x.cols()) mismatch(op, x, v);
  return x.cols();
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) mismatch("matmul", a, b);
  const auto av = a.values();
  const auto bv = b.values();
  std::vector<double> c(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t t = 0; t < k; ++t) {
      const double x = av[i * k + t];
      if (x == 0.0) continue;
      const double* brow = &bv[t * n];
      double* crow = &c[i * n];
      for (std::size_t j = 0; j < n; ++j) crow[j] += x * brow[j];
    }
  }
  return make_result({m, n}, std::move(c), {a, b}, [m, k, n](Node& out) {
    const auto& g = out.grad;
    const auto& av = out.inputs[0]->value;
    const auto& bv = out.inputs[1]->value;
    if (Node* da = grad_input(out, 0)) {
      auto& ga = da->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < k; ++t) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bv[t * n + j];
          ga[i * k + t] += acc;
        }
    }
    if (Node* db = grad_input(out, 1)) {
      auto& gb = db->ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t t = 0; t < k; ++t) {
          const double x = av[i * k + t];
          if (x == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[t * n + j] += x * g[i * n + j];
        }
    }
  });
}

namespace {

Tensor linear_impl(const Tensor& x, const Tensor& w, const Tensor* bias) {
  require_matrix(x, "linear");
  require_matrix(w, "linear");
  const std::size_t r = x.rows(), in = x.cols(), o = w.rows();
  if (w.cols() != in) mismatch("linear", x, w);
  if (bias && bias->numel() != o) mismatch("linear", w, *bias);
  const auto xv = x.values();
  const auto wv = w.values();
  std::vector<double> y(r * o, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    const double* xrow = &xv[i * in];
    for (std::size_t j = 0; j < o; ++j) {
      const double* wrow = &wv[j * in];
      double acc = bias ? bias->values()[j] : 0.0;
      for (std::size_t t = 0; t < in; ++t) acc += xrow[t] * wrow[t];
      y[i * o + j] = acc;
    }
  }
  std::vector<Tensor> inputs{x, w};
  if (bias) inputs.push_back(*bias);
  return make_result({r, o}, std::move(y), std::move(inputs), [r, in, o](Node& out) {
    const auto& g = out.grad;
    const auto& xv = out.inputs[0]->value;
    const auto& wv = out.inputs[1]->value;
    if (Node* dx = grad_input(out, 0)) {
      auto& gx = dx->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < o; ++j) {
          const double gij = g[i * o + j];
          if (gij == 0.0) continue;
          const double* wrow = &wv[j * in];
          double* gxrow = &gx[i * in];
          for (std::size_t t = 0; t < in; ++t) gxrow[t] += gij * wrow[t];
        }
    }
    if (Node* dw = grad_input(out, 1)) {
      auto& gw = dw->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < o; ++j) {
          const double gij = g[i * o + j];
          if (gij == 0.0) continue;
          const double* xrow = &xv[i * in];
          double* gwrow = &gw[j * in];
          for (std::size_t t = 0; t < in; ++t) gwrow[t] += gij * xrow[t];
        }
    }
    if (out.inputs.size() > 2) {
      if (Node* db = grad_input(out, 2)) {
        auto& gb = db->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < o; ++j) gb[j] += g[i * o + j];
      }
    }
  });
}

}  // namespace

Tensor linear(const Tensor& x, const Tensor& weight) { return linear_impl(x, weight, nullptr); }

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  return linear_impl(x, weight, &bias);
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  const auto av = a.values();
  std::vector<double> t(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) t[j * m + i] = av[i * n + j];
  return make_result({n, m}, std::move(t), {a}, [m, n](Node& out) {
    auto& ga = out.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += out.grad[j * m + i];
  });
}

namespace {

// Shared driver for add/sub/mul. `da`/`db` give the local partials at index i.
template <typename F, typename DA, typename DB>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F f, DA da, DB db) {
  const Broadcast kind = broadcast_kind(op, a, b);
  const Tensor& shaped = kind == Broadcast::LeftScalar ? b : a;
  const std::size_t n = shaped.numel();
  const auto av = a.values();
  const auto bv = b.values();
  auto ai = [kind](std::size_t i) { return kind == Broadcast::LeftScalar ? 0 : i; };
  auto bi = [kind](std::size_t i) { return kind == Broadcast::RightScalar ? 0 : i; };
  std::vector<double> c(n);
  for (std::size_t i = 0; i < n; ++i) c[i] = f(av[ai(i)], bv[bi(i)]);
  return make_result(shaped.shape(), std::move(c), {a, b}, [n, ai, bi, da, db](Node& out) {
    const auto& x = out.inputs[0]->value;
    const auto& y = out.inputs[1]->value;
    if (Node* na = grad_input(out, 0)) {
      auto& g = na->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[ai(i)] += out.grad[i] * da(x[ai(i)], y[bi(i)]);
    }
    if (Node* nb = grad_input(out, 1)) {
      auto& g = nb->ensure_grad();
      for (std::size_t i = 0; i < n; ++i) g[bi(i)] += out.grad[i] * db(x[ai(i)], y[bi(i)]);
    }
  });
}

template <typename F, typename DF>
Tensor unary(const Tensor& a, F f, DF df) {
  const auto av = a.values();
  std::vector<double> c(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) c[i] = f(av[i]);
  return make_result(a.shape(), std::move(c), {a}, [df](Node& out) {
    const auto& x = out.inputs[0]->value;
    auto& g = out.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < x.size(); ++i) g[i] += out.grad[i] * df(x[i], out.value[i]);
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(
      a, [factor](double x) { return factor * x; }, [factor](double, double) { return factor; });
}

Tensor relu(const Tensor& a) {
  // Subgradient at exactly zero is zero.
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor sigmoid(const Tensor& a) {
  return unary(
      a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor add_row(const Tensor& x, const Tensor& v) {
  const std::size_t c = row_vector_length("add_row", x, v);
  const std::size_t r = x.rows();
  const auto xv = x.values();
  const auto vv = v.values();
  std::vector<double> y(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = xv[i * c + j] + vv[j];
  return make_result({r, c}, std::move(y), {x, v}, [r, c](Node& out) {
    if (Node* nx = grad_input(out, 0)) {
      auto& g = nx->ensure_grad();
      for (std::size_t i = 0; i < r * c; ++i) g[i] += out.grad[i];
    }
    if (Node* nv = grad_input(out, 1)) {
      auto& g = nv->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += out.grad[i * c + j];
    }
  });
}

Tensor mul_row(const Tensor& x, const Tensor& v) {
  const std::size_t c = row_vector_length("mul_row", x, v);
  const std::size_t r = x.rows();
  const auto xv = x.values();
  const auto vv = v.values();
  std::vector<double> y(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = xv[i * c + j] * vv[j];
  return make_result({r, c}, std::move(y), {x, v}, [r, c](Node& out) {
    const auto& xv = out.inputs[0]->value;
    const auto& vv = out.inputs[1]->value;
    if (Node* nx = grad_input(out, 0)) {
      auto& g = nx->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += out.grad[i * c + j] * vv[j];
    }
    if (Node* nv = grad_input(out, 1)) {
      auto& g = nv->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += out.grad[i * c + j] * xv[i * c + j];
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() == 0 || x.shape().back() == 0) throw DimensionError("layer_norm: empty last axis");
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t d = x.shape().back();
  if (gain.numel() != d) mismatch("layer_norm", x, gain);
  if (bias.numel() != d) mismatch("layer_norm", x, bias);
  const std::size_t rows = x.numel() / d;
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto bv = bias.values();
  std::vector<double> normalized(x.numel());
  std::vector<double> inv_std(rows);
  std::vector<double> y(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = &xv[r * d];
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[r] = inv;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xr[j] - mu) * inv;
      normalized[r * d + j] = h;
      y[r * d + j] = gv[j] * h + bv[j];
    }
  }
  return make_result(
      x.shape(), std::move(y), {x, gain, bias},
      [rows, d, normalized = std::move(normalized), inv_std = std::move(inv_std)](Node& out) {
        const auto& g = out.grad;
        const auto& gv = out.inputs[1]->value;
        if (Node* nx = grad_input(out, 0)) {
          auto& gx = nx->ensure_grad();
          const double dd = static_cast<double>(d);
          for (std::size_t r = 0; r < rows; ++r) {
            double sum_dh = 0.0, sum_dh_h = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[r * d + j] * gv[j];
              sum_dh += dh;
              sum_dh_h += dh * normalized[r * d + j];
            }
            for (std::size_t j = 0; j < d; ++j) {
              const double dh = g[r * d + j] * gv[j];
              gx[r * d + j] +=
                  inv_std[r] / dd * (dd * dh - sum_dh - normalized[r * d + j] * sum_dh_h);
            }
          }
        }
        if (Node* ng = grad_input(out, 1)) {
          auto& gg = ng->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gg[j] += g[r * d + j] * normalized[r * d + j];
        }
        if (Node* nb = grad_input(out, 2)) {
          auto& gb = nb->ensure_grad();
          for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < d; ++j) gb[j] += g[r * d + j];
        }
      });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result({1}, {s}, {a}, [](Node& out) {
    auto& g = out.inputs[0]->ensure_grad();
    for (double& v : g) v += out.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ContractError("mean of an empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor mean_axis(const Tensor& a, std::size_t axis) {
  require_matrix(a, "mean_axis");
  if (axis > 1) throw RangeError("mean_axis: axis " + std::to_string(axis) + " out of range");
  const std::size_t r = a.rows(), c = a.cols();
  const auto av = a.values();
  if (axis == 0) {
    std::vector<double> m(c, 0.0);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) m[j] += av[i * c + j];
    for (double& v : m) v /= static_cast<double>(r);
    return make_result({1, c}, std::move(m), {a}, [r, c](Node& out) {
      auto& g = out.inputs[0]->ensure_grad();
      const double s = 1.0 / static_cast<double>(r);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += out.grad[j] * s;
    });
  }
  std::vector<double> m(r, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) m[i] += av[i * c + j];
    m[i] /= static_cast<double>(c);
  }
  return make_result({r, 1}, std::move(m), {a}, [r, c](Node& out) {
    auto& g = out.inputs[0]->ensure_grad();
    const double s = 1.0 / static_cast<double>(c);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) g[i * c + j] += out.grad[i] * s;
  });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  if (axis > 1) throw RangeError("concat: axis " + std::to_string(axis) + " out of range");
  for (const auto& p : parts) require_matrix(p, "concat");
  const std::size_t other = 1 - axis;
  const std::size_t fixed = parts[0].dim(other);
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.dim(other) != fixed) mismatch("concat", parts[0], p);
    total += p.dim(axis);
  }
  std::vector<Tensor> inputs(parts.begin(), parts.end());
  if (axis == 0) {
    std::vector<double> y;
    y.reserve(total * fixed);
    for (const auto& p : parts) y.insert(y.end(), p.values().begin(), p.values().end());
    return make_result({total, fixed}, std::move(y), std::move(inputs), [](Node& out) {
      std::size_t offset = 0;
      for (std::size_t k = 0; k < out.inputs.size(); ++k) {
        const std::size_t n = out.inputs[k]->value.size();
        if (Node* in = grad_input(out, k)) {
          auto& g = in->ensure_grad();
          for (std::size_t i = 0; i < n; ++i) g[i] += out.grad[offset + i];
        }
        offset += n;
      }
    });
  }
  const std::size_t r = fixed;
  std::vector<double> y(r * total);
  std::size_t col = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    const auto pv = p.values();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) y[i * total + col + j] = pv[i * c + j];
    col += c;
  }
  return make_result({r, total}, std::move(y), std::move(inputs), [r, total](Node& out) {
    std::size_t col = 0;
    for (std::size_t k = 0; k < out.inputs.size(); ++k) {
      const std::size_t c = out.inputs[k]->shape[1];
      if (Node* in = grad_input(out, k)) {
        auto& g = in->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) g[i * c + j] += out.grad[i * total + col + j];
      }
      col += c;
    }
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> ids) {
  require_matrix(table, "gather_rows");
  const std::size_t n = table.rows(), c = table.cols();
  std::vector<std::size_t> index(ids.begin(), ids.end());
  std::vector<double> y(index.size() * c);
  const auto tv = table.values();
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n) {
      throw RangeError("gather_rows: index " + std::to_string(index[i]) + " out of range for " +
                       std::to_string(n) + " rows");
    }
    std::copy_n(&tv[index[i] * c], c, &y[i * c]);
  }
  const std::size_t count = index.size();
  return make_result({count, c}, std::move(y), {table}, [c, index = std::move(index)](Node& out) {
    auto& g = out.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < index.size(); ++i)
      for (std::size_t j = 0; j < c; ++j) g[index[i] * c + j] += out.grad[i * c + j];
  });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
  require_matrix(a, "slice_rows");
  if (begin > end || end > a.rows()) {
    throw RangeError("slice_rows: [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") out of range for " + std::to_string(a.rows()) + " rows");
  }
  const std::size_t c = a.cols();
  const auto av = a.values();
  std::vector<double> y(av.begin() + static_cast<std::ptrdiff_t>(begin * c),
                        av.begin() + static_cast<std::ptrdiff_t>(end * c));
  return make_result({end - begin, c}, std::move(y), {a}, [begin, c](Node& out) {
    auto& g = out.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < out.grad.size(); ++i) g[begin * c + i] += out.grad[i];
  });
}

Tensor repeat_rows(const Tensor& row, std::size_t n) {
  const std::size_t c = row.numel();
  const auto rv = row.values();
  std::vector<double> y(n * c);
  for (std::size_t i = 0; i < n; ++i) std::copy(rv.begin(), rv.end(), y.begin() + static_cast<std::ptrdiff_t>(i * c));
  return make_result({n, c}, std::move(y), {row}, [n, c](Node& out) {
    auto& g = out.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) g[j] += out.grad[i * c + j];
  });
}

Tensor softmax_axis(const Tensor& a, std::size_t axis) {
  require_matrix(a, "softmax_axis");
  if (axis > 1) throw RangeError("softmax_axis: axis " + std::to_string(axis) + " out of range");
  const std::size_t r = a.rows(), c = a.cols();
  // Address element k of lane l along the softmax axis.
  const std::size_t lanes = axis == 1 ? r : c;
  const std::size_t len = axis == 1 ? c : r;
  auto idx = [axis, c](std::size_t lane, std::size_t k) {
    return axis == 1 ? lane * c + k : k * c + lane;
  };
  const auto av = a.values();
  std::vector<double> y(r * c);
  for (std::size_t l = 0; l < lanes; ++l) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < len; ++k) mx = std::max(mx, av[idx(l, k)]);
    double z = 0.0;
    for (std::size_t k = 0; k < len; ++k) z += (y[idx(l, k)] = std::exp(av[idx(l, k)] - mx));
    for (std::size_t k = 0; k < len; ++k) y[idx(l, k)] /= z;
  }
  return make_result({r, c}, std::move(y), {a}, [lanes, len, idx](Node& out) {
    auto& g = out.inputs[0]->ensure_grad();
    for (std::size_t l = 0; l < lanes; ++l) {
      double dot = 0.0;
      for (std::size_t k = 0; k < len; ++k) dot += out.grad[idx(l, k)] * out.value[idx(l, k)];
      for (std::size_t k = 0; k < len; ++k)
        g[idx(l, k)] += out.value[idx(l, k)] * (out.grad[idx(l, k)] - dot);
    }
  });
}

Tensor log_softmax_rows(const Tensor& a) {
  require_matrix(a, "log_softmax_rows");
  const std::size_t r = a.rows(), c = a.cols();
  const auto av = a.values();
  std::vector<double> y(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < c; ++j) mx = std::max(mx, av[i * c + j]);
    double z = 0.0;
    for (std::size_t j = 0; j < c; ++j) z += std::exp(av[i * c + j] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < c; ++j) y[i * c + j] = av[i * c + j] - lse;
  }
  return make_result({r, c}, std::move(y), {a}, [r, c](Node& out) {
    auto& g = out.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < r; ++i) {
      double gs = 0.0;
      for (std::size_t j = 0; j < c; ++j) gs += out.grad[i * c + j];
      for (std::size_t j = 0; j < c; ++j)
        g[i * c + j] += out.grad[i * c + j] - std::exp(out.value[i * c + j]) * gs;
    }
  });
}

Tensor grouped_row_dot(const Tensor& x, const Tensor& w, std::size_t groups) {
  require_matrix(x, "grouped_row_dot");
  const std::size_t r = x.rows(), c = x.cols();
  if (w.numel() != c) mismatch("grouped_row_dot", x, w);
  if (groups == 0 || c % groups != 0) {
    throw DimensionError("grouped_row_dot: " + std::to_string(c) + " channels not divisible into " +
                         std::to_string(groups) + " groups");
  }
  const std::size_t width = c / groups;
  const auto xv = x.values();
  const auto wv = w.values();
  std::vector<double> y(r * groups, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[i * groups + j / width] += xv[i * c + j] * wv[j];
  return make_result({r, groups}, std::move(y), {x, w}, [r, c, groups, width](Node& out) {
    const auto& xv = out.inputs[0]->value;
    const auto& wv = out.inputs[1]->value;
    if (Node* nx = grad_input(out, 0)) {
      auto& g = nx->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += out.grad[i * groups + j / width] * wv[j];
    }
    if (Node* nw = grad_input(out, 1)) {
      auto& g = nw->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += out.grad[i * groups + j / width] * xv[i * c + j];
    }
  });
}

Tensor grouped_weighted_sum(const Tensor& weights, const Tensor& values) {
  require_matrix(weights, "grouped_weighted_sum");
  require_matrix(values, "grouped_weighted_sum");
  const std::size_t r = values.rows(), c = values.cols(), groups = weights.cols();
  if (weights.rows() != r || groups == 0 || c % groups != 0) {
    mismatch("grouped_weighted_sum", weights, values);
  }
  const std::size_t width = c / groups;
  const auto wv = weights.values();
  const auto vv = values.values();
  std::vector<double> y(c, 0.0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t h = 0; h < groups; ++h) {
      const double b = wv[i * groups + h];
      if (b == 0.0) continue;
      for (std::size_t j = h * width; j < (h + 1) * width; ++j) y[j] += b * vv[i * c + j];
    }
  return make_result({1, c}, std::move(y), {weights, values}, [r, c, groups, width](Node& out) {
    const auto& wv = out.inputs[0]->value;
    const auto& vv = out.inputs[1]->value;
    if (Node* nw = grad_input(out, 0)) {
      auto& g = nw->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t h = 0; h < groups; ++h) {
          double acc = 0.0;
          for (std::size_t j = h * width; j < (h + 1) * width; ++j) acc += out.grad[j] * vv[i * c + j];
          g[i * groups + h] += acc;
        }
    }
    if (Node* nv = grad_input(out, 1)) {
      auto& g = nv->ensure_grad();
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t h = 0; h < groups; ++h) {
          const double b = wv[i * groups + h];
          if (b == 0.0) continue;
          for (std::size_t j = h * width; j < (h + 1) * width; ++j) g[i * c + j] += b * out.grad[j];
        }
    }
  });
}

Tensor sigmoid_bce_mean(const Tensor& logits, std::span<const double> targets) {
  const std::size_t k = logits.numel();
  if (targets.size() != k) {
    throw DimensionError("sigmoid_bce_mean: " + std::to_string(k) + " logits vs " +
                         std::to_string(targets.size()) + " targets");
  }
  if (k == 0) throw ContractError("sigmoid_bce_mean: no logits");
  std::vector<double> y(targets.begin(), targets.end());
  const auto xv = logits.values();
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double x = xv[i];
    total += std::max(x, 0.0) - x * y[i] + std::log1p(std::exp(-std::abs(x)));
  }
  return make_result({1}, {total / static_cast<double>(k)}, {logits}, [k, y = std::move(y)](Node& out) {
    const auto& xv = out.inputs[0]->value;
    auto& g = out.inputs[0]->ensure_grad();
    for (std::size_t i = 0; i < k; ++i) {
      const double x = xv[i];
      const double p = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      g[i] += out.grad[0] * (p - y[i]) / static_cast<double>(k);
    }
  });
}

Tensor softmax_cross_entropy(const Tensor& logits, std::span<const std::size_t> targets,
                             const std::vector<bool>& include) {
  require_matrix(logits, "softmax_cross_entropy");
  const std::size_t r = logits.rows(), c = logits.cols();
  if (targets.size() != r || include.size() != r) {
    throw DimensionError("softmax_cross_entropy: " + std::to_string(r) + " rows vs " +
                         std::to_string(targets.size()) + " targets");
  }
  const auto lp = log_softmax_rows(logits.detach());
  const auto lv = lp.values();
  std::size_t count = 0;
  double total = 0.0;
  for (std::size_t i = 0; i < r; ++i) {
    if (!include[i]) continue;
    if (targets[i] >= c) {
      throw RangeError("softmax_cross_entropy: target " + std::to_string(targets[i]) +
                       " out of range for " + std::to_string(c) + " classes");
    }
    total -= lv[i * c + targets[i]];
    ++count;
  }
  if (count == 0) throw ContractError("softmax_cross_entropy: every position is masked");
  std::vector<double> logp(lv.begin(), lv.end());
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return make_result(
      {1}, {total / static_cast<double>(count)}, {logits},
      [r, c, count, include, logp = std::move(logp), tgt = std::move(tgt)](Node& out) {
        auto& g = out.inputs[0]->ensure_grad();
        const double s = out.grad[0] / static_cast<double>(count);
        for (std::size_t i = 0; i < r; ++i) {
          if (!include[i]) continue;
          for (std::size_t j = 0; j < c; ++j) {
            g[i * c + j] += s * (std::exp(logp[i * c + j]) - (j == tgt[i] ? 1.0 : 0.0));
          }
        }
      });
}

}  // namespace msat
