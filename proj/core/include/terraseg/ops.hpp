#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "terraseg/kernels.hpp"
#include "terraseg/tensor.hpp"

namespace terraseg::ops {

namespace detail {
using terraseg::detail::check_same_shape;
using terraseg::detail::make_result;

template <class T>
bool wants(const TensorImpl<T>& self, std::size_t i) {
    return self.inputs[i]->requires_grad;
}

template <class T>
std::vector<T>& grad_of(TensorImpl<T>& self, std::size_t i) {
    self.inputs[i]->ensure_grad();
    return self.inputs[i]->grad;
}
}  // namespace detail

// ---- elementwise arithmetic --------------------------------------------------

namespace detail {

enum class BinKind { Add, Sub, Mul };

template <class T>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, BinKind kind, const char* name) {
    const bool a_scalar = a.numel() == 1 && b.numel() != 1;
    const bool b_scalar = b.numel() == 1 && a.numel() != 1;
    if (!a_scalar && !b_scalar) check_same_shape(a, b, name);
    const std::size_t n = std::max(a.numel(), b.numel());
    const auto& av = a.values();
    const auto& bv = b.values();
    std::vector<T> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const T x = av[a_scalar ? 0 : i];
        const T y = bv[b_scalar ? 0 : i];
        out[i] = kind == BinKind::Add ? x + y : kind == BinKind::Sub ? x - y : x * y;
    }
    Shape shape = a_scalar ? b.shape() : a.shape();
    return make_result<T>(
        std::move(shape), std::move(out), name, {a, b},
        [kind, a_scalar, b_scalar](TensorImpl<T>& self) {
            const auto& g = self.grad;
            const auto& av = self.inputs[0]->values;
            const auto& bv = self.inputs[1]->values;
            if (wants(self, 0)) {
                auto& da = grad_of(self, 0);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    const T d = kind == BinKind::Mul ? g[i] * bv[b_scalar ? 0 : i] : g[i];
                    da[a_scalar ? 0 : i] += d;
                }
            }
            if (wants(self, 1)) {
                auto& db = grad_of(self, 1);
                for (std::size_t i = 0; i < g.size(); ++i) {
                    T d = g[i];
                    if (kind == BinKind::Mul) d *= av[a_scalar ? 0 : i];
                    if (kind == BinKind::Sub) d = -d;
                    db[b_scalar ? 0 : i] += d;
                }
            }
        });
}

}  // namespace detail

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary(a, b, detail::BinKind::Add, "add");
}
template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary(a, b, detail::BinKind::Sub, "sub");
}
template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary(a, b, detail::BinKind::Mul, "mul");
}

/// Multiply by a compile-time-known constant (not a graph node).
template <class T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
    std::vector<T> out(x.numel());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * factor;
    return detail::make_result<T>(x.shape(), std::move(out), "scale", {x},
                                  [factor](TensorImpl<T>& self) {
                                      if (!detail::wants(self, 0)) return;
                                      auto& dx = detail::grad_of(self, 0);
                                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                                          dx[i] += self.grad[i] * factor;
                                  });
}

// ---- elementwise nonlinearities ----------------------------------------------

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const T v = xv[i];
        if (v >= T(0)) {
            out[i] = T(1) / (T(1) + std::exp(-v));
        } else {
            const T e = std::exp(v);
            out[i] = e / (T(1) + e);
        }
    }
    return detail::make_result<T>(x.shape(), std::move(out), "sigmoid", {x},
                                  [](TensorImpl<T>& self) {
                                      if (!detail::wants(self, 0)) return;
                                      auto& dx = detail::grad_of(self, 0);
                                      for (std::size_t i = 0; i < self.grad.size(); ++i) {
                                          const T y = self.values[i];
                                          dx[i] += self.grad[i] * y * (T(1) - y);
                                      }
                                  });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > T(0) ? xv[i] : T(0);
    return detail::make_result<T>(x.shape(), std::move(out), "relu", {x},
                                  [](TensorImpl<T>& self) {
                                      if (!detail::wants(self, 0)) return;
                                      auto& dx = detail::grad_of(self, 0);
                                      const auto& xv = self.inputs[0]->values;
                                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                                          if (xv[i] > T(0)) dx[i] += self.grad[i];
                                  });
}

/// Gaussian error linear unit, tanh approximation.
template <class T>
Tensor<T> gelu(const Tensor<T>& x) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    std::vector<T> out(x.numel());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double v = static_cast<double>(xv[i]);
        out[i] = static_cast<T>(0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v))));
    }
    return detail::make_result<T>(
        x.shape(), std::move(out), "gelu", {x}, [](TensorImpl<T>& self) {
            if (!detail::wants(self, 0)) return;
            auto& dx = detail::grad_of(self, 0);
            const auto& xv = self.inputs[0]->values;
            for (std::size_t i = 0; i < self.grad.size(); ++i) {
                const double v = static_cast<double>(xv[i]);
                const double t = std::tanh(kC * (v + kA * v * v * v));
                const double du = kC * (1.0 + 3.0 * kA * v * v);
                const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
                dx[i] += self.grad[i] * static_cast<T>(d);
            }
        });
}

/// Natural logarithm; rejects non-positive inputs.
template <class T>
Tensor<T> log_op(const Tensor<T>& x) {
    std::vector<T> out(x.numel());
    const auto& xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(xv[i] > T(0)))
            throw DomainError("log: input " + std::to_string(static_cast<double>(xv[i])) +
                              " is not positive");
        out[i] = std::log(xv[i]);
    }
    return detail::make_result<T>(x.shape(), std::move(out), "log", {x},
                                  [](TensorImpl<T>& self) {
                                      if (!detail::wants(self, 0)) return;
                                      auto& dx = detail::grad_of(self, 0);
                                      const auto& xv = self.inputs[0]->values;
                                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                                          dx[i] += self.grad[i] / xv[i];
                                  });
}

// ---- reductions ----------------------------------------------------------------

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    T total = T(0);
    for (T v : x.values()) total += v;
    return detail::make_result<T>({1}, {total}, "sum", {x}, [](TensorImpl<T>& self) {
        if (!detail::wants(self, 0)) return;
        auto& dx = detail::grad_of(self, 0);
        const T g = self.grad[0];
        for (auto& d : dx) d += g;
    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    if (x.numel() == 0) throw DimensionError("mean: empty tensor");
    T total = T(0);
    for (T v : x.values()) total += v;
    const T inv = T(1) / static_cast<T>(x.numel());
    return detail::make_result<T>({1}, {total * inv}, "mean", {x}, [inv](TensorImpl<T>& self) {
        if (!detail::wants(self, 0)) return;
        auto& dx = detail::grad_of(self, 0);
        const T g = self.grad[0] * inv;
        for (auto& d : dx) d += g;
    });
}

// ---- shape manipulation --------------------------------------------------------

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) {
        throw DimensionError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                             shape_str(shape));
    }
    std::vector<T> out = x.values();
    return detail::make_result<T>(std::move(shape), std::move(out), "reshape", {x},
                                  [](TensorImpl<T>& self) {
                                      if (!detail::wants(self, 0)) return;
                                      auto& dx = detail::grad_of(self, 0);
                                      for (std::size_t i = 0; i < self.grad.size(); ++i)
                                          dx[i] += self.grad[i];
                                  });
}

namespace detail {

inline std::vector<std::size_t> row_major_strides(const Shape& s) {
    std::vector<std::size_t> st(s.size(), 1);
    for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
    return st;
}

template <class T>
void permute_into(const std::vector<T>& src, const Shape& in_shape,
                  const std::vector<std::size_t>& perm, T* dst) {
    const std::size_t rank = in_shape.size();
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[perm[i]];
    const auto in_strides = row_major_strides(in_shape);
    // stride of output axis i in the *input* layout
    std::vector<std::size_t> gather(rank);
    for (std::size_t i = 0; i < rank; ++i) gather[i] = in_strides[perm[i]];
    std::vector<std::size_t> idx(rank, 0);
    const std::size_t n = src.size();
    std::size_t src_off = 0;
    for (std::size_t o = 0; o < n; ++o) {
        dst[o] = src[src_off];
        for (std::size_t ax = rank; ax-- > 0;) {
            if (++idx[ax] < out_shape[ax]) {
                src_off += gather[ax];
                break;
            }
            src_off -= gather[ax] * (out_shape[ax] - 1);
            idx[ax] = 0;
        }
    }
}

}  // namespace detail

/// Permutes axes; perm[i] names the input axis that becomes output axis i.
template <class T>
Tensor<T> transpose(const Tensor<T>& x, std::vector<std::size_t> perm) {
    const std::size_t rank = x.rank();
    if (perm.size() != rank) throw DimensionError("transpose: permutation rank mismatch");
    std::vector<bool> used(rank, false);
    for (std::size_t p : perm) {
        if (p >= rank || used[p]) throw DimensionError("transpose: invalid permutation");
        used[p] = true;
    }
    Shape out_shape(rank);
    for (std::size_t i = 0; i < rank; ++i) out_shape[i] = x.dim(perm[i]);
    std::vector<T> out(x.numel());
    if (rank == 2 && perm[0] == 1) {
        kernels::transpose_2d(x.values().data(), out.data(), x.dim(0), x.dim(1));
    } else {
        detail::permute_into(x.values(), x.shape(), perm, out.data());
    }
    std::vector<std::size_t> inv(rank);
    for (std::size_t i = 0; i < rank; ++i) inv[perm[i]] = i;
    return detail::make_result<T>(
        std::move(out_shape), std::move(out), "transpose", {x},
        [inv](TensorImpl<T>& self) {
            if (!detail::wants(self, 0)) return;
            auto& dx = detail::grad_of(self, 0);
            std::vector<T> tmp(self.grad.size());
            if (self.shape.size() == 2 && inv[0] == 1) {
                kernels::transpose_2d(self.grad.data(), tmp.data(), self.shape[0], self.shape[1]);
            } else {
                detail::permute_into(self.grad, self.shape, inv, tmp.data());
            }
            for (std::size_t i = 0; i < tmp.size(); ++i) dx[i] += tmp[i];
        });
}

/// Concatenates tensors along `axis`; all other extents must agree.
template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, std::size_t axis) {
    if (xs.empty()) throw DimensionError("concat: no inputs");
    const Shape& first = xs[0].shape();
    if (axis >= first.size()) throw DimensionError("concat: axis out of range");
    std::size_t axis_total = 0;
    for (const auto& x : xs) {
        if (x.rank() != first.size()) throw DimensionError("concat: rank mismatch");
        for (std::size_t d = 0; d < first.size(); ++d) {
            if (d != axis && x.dim(d) != first[d]) {
                throw DimensionError("concat: shape mismatch " + shape_str(x.shape()) + " vs " +
                                     shape_str(first) + " on axis " + std::to_string(d));
            }
        }
        axis_total += x.dim(axis);
    }
    Shape out_shape = first;
    out_shape[axis] = axis_total;
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= first[d];
    for (std::size_t d = axis + 1; d < first.size(); ++d) inner *= first[d];

    std::vector<T> out(shape_numel(out_shape));
    const std::size_t out_block = axis_total * inner;
    std::vector<std::size_t> blocks(xs.size());
    std::size_t off = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
        const std::size_t blk = xs[k].dim(axis) * inner;
        blocks[k] = blk;
        const auto& src = xs[k].values();
        for (std::size_t o = 0; o < outer; ++o)
            std::copy_n(src.data() + o * blk, blk, out.data() + o * out_block + off);
        off += blk;
    }
    return detail::make_result<T>(
        std::move(out_shape), std::move(out), "concat", xs,
        [outer, out_block, blocks](TensorImpl<T>& self) {
            std::size_t off = 0;
            for (std::size_t k = 0; k < self.inputs.size(); ++k) {
                const std::size_t blk = blocks[k];
                if (detail::wants(self, k)) {
                    auto& dx = detail::grad_of(self, k);
                    for (std::size_t o = 0; o < outer; ++o) {
                        const T* g = self.grad.data() + o * out_block + off;
                        T* d = dx.data() + o * blk;
                        for (std::size_t i = 0; i < blk; ++i) d[i] += g[i];
                    }
                }
                off += blk;
            }
        });
}

/// Contiguous slice [start, start+len) along `axis`.
template <class T>
Tensor<T> narrow(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t len) {
    if (axis >= x.rank()) throw DimensionError("narrow: axis out of range");
    if (len == 0 || start + len > x.dim(axis)) {
        throw DimensionError("narrow: slice [" + std::to_string(start) + ", " +
                             std::to_string(start + len) + ") exceeds axis extent " +
                             std::to_string(x.dim(axis)));
    }
    std::size_t outer = 1, inner = 1;
    for (std::size_t d = 0; d < axis; ++d) outer *= x.dim(d);
    for (std::size_t d = axis + 1; d < x.rank(); ++d) inner *= x.dim(d);
    const std::size_t in_block = x.dim(axis) * inner;
    const std::size_t out_block = len * inner;
    Shape out_shape = x.shape();
    out_shape[axis] = len;
    std::vector<T> out(outer * out_block);
    for (std::size_t o = 0; o < outer; ++o)
        std::copy_n(x.values().data() + o * in_block + start * inner, out_block,
                    out.data() + o * out_block);
    return detail::make_result<T>(
        std::move(out_shape), std::move(out), "narrow", {x},
        [outer, inner, in_block, out_block, start](TensorImpl<T>& self) {
            if (!detail::wants(self, 0)) return;
            auto& dx = detail::grad_of(self, 0);
            for (std::size_t o = 0; o < outer; ++o) {
                const T* g = self.grad.data() + o * out_block;
                T* d = dx.data() + o * in_block + start * inner;
                for (std::size_t i = 0; i < out_block; ++i) d[i] += g[i];
            }
        });
}

/// Column slice of a matrix-like tensor (slice along the last axis).
template <class T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t start, std::size_t len) {
    return narrow(x, x.rank() - 1, start, len);
}

// ---- dense algebra ---------------------------------------------------------------

/// C[M x N] = A[M x K] * B[K x N].
template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.rank() != 2 || b.rank() != 2)
        throw DimensionError("matmul: expected rank-2 operands, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw DimensionError("matmul: inner extents differ, " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    std::vector<T> out(m * n);
    kernels::gemm(a.values().data(), k, b.values().data(), n, out.data(), n, m, k, n, false);
    return detail::make_result<T>(
        {m, n}, std::move(out), "matmul", {a, b}, [m, k, n](TensorImpl<T>& self) {
            const T* g = self.grad.data();
            if (detail::wants(self, 0)) {
                // dA += g * B^T
                std::vector<T> bt(k * n);
                kernels::transpose_2d(self.inputs[1]->values.data(), bt.data(), k, n);
                auto& da = detail::grad_of(self, 0);
                kernels::gemm(g, n, bt.data(), k, da.data(), k, m, n, k, true);
            }
            if (detail::wants(self, 1)) {
                // dB += A^T * g
                std::vector<T> at(m * k);
                kernels::transpose_2d(self.inputs[0]->values.data(), at.data(), m, k);
                auto& db = detail::grad_of(self, 1);
                kernels::gemm(at.data(), m, g, n, db.data(), n, k, m, n, true);
            }
        });
}

/// Adds a length-C bias to every row of an [..., C] tensor.
template <class T>
Tensor<T> add_bias_rows(const Tensor<T>& x, const Tensor<T>& bias) {
    if (bias.rank() != 1) throw DimensionError("add_bias_rows: bias must be rank 1");
    const std::size_t c = bias.dim(0);
    if (x.rank() == 0 || x.dim(x.rank() - 1) != c) {
        throw DimensionError("add_bias_rows: trailing extent of " + shape_str(x.shape()) +
                             " does not match bias " + shape_str(bias.shape()));
    }
    const std::size_t rows = x.numel() / c;
    std::vector<T> out(x.numel());
    const auto& xv = x.values();
    const auto& bv = bias.values();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < c; ++j) out[r * c + j] = xv[r * c + j] + bv[j];
    return detail::make_result<T>(
        x.shape(), std::move(out), "add_bias_rows", {x, bias}, [rows, c](TensorImpl<T>& self) {
            if (detail::wants(self, 0)) {
                auto& dx = detail::grad_of(self, 0);
                for (std::size_t i = 0; i < self.grad.size(); ++i) dx[i] += self.grad[i];
            }
            if (detail::wants(self, 1)) {
                auto& db = detail::grad_of(self, 1);
                for (std::size_t r = 0; r < rows; ++r)
                    for (std::size_t j = 0; j < c; ++j) db[j] += self.grad[r * c + j];
            }
        });
}

// ---- normalisation & attention pieces ---------------------------------------------

/// Row-wise softmax with temperature: y_rj = exp(x_rj / s) / sum_k exp(x_rk / s),
/// computed with the usual max-shift for stability. Rows are the last axis.
template <class T>
Tensor<T> softmax_rows(const Tensor<T>& x, T temperature) {
    if (!(temperature > T(0))) throw ConfigError("softmax temperature must be positive");
    if (x.rank() == 0) throw DimensionError("softmax: scalar input");
    const std::size_t cols = x.dim(x.rank() - 1);
    const std::size_t rows = x.numel() / cols;
    std::vector<T> out(x.numel());
    const auto& xv = x.values();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = xv.data() + r * cols;
        T* orow = out.data() + r * cols;
        T mx = row[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
        T denom = T(0);
        for (std::size_t j = 0; j < cols; ++j) {
            orow[j] = std::exp((row[j] - mx) / temperature);
            denom += orow[j];
        }
        const T inv = T(1) / denom;
        for (std::size_t j = 0; j < cols; ++j) orow[j] *= inv;
    }
    return detail::make_result<T>(
        x.shape(), std::move(out), "softmax_rows", {x},
        [rows, cols, temperature](TensorImpl<T>& self) {
            if (!detail::wants(self, 0)) return;
            auto& dx = detail::grad_of(self, 0);
            const T inv_t = T(1) / temperature;
            for (std::size_t r = 0; r < rows; ++r) {
                const T* y = self.values.data() + r * cols;
                const T* g = self.grad.data() + r * cols;
                T* d = dx.data() + r * cols;
                T gy = T(0);
                for (std::size_t j = 0; j < cols; ++j) gy += g[j] * y[j];
                for (std::size_t j = 0; j < cols; ++j) d[j] += y[j] * (g[j] - gy) * inv_t;
            }
        });
}

/// Layer normalisation over the last axis with learned gain and bias.
template <class T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-6)) {
    if (gain.rank() != 1 || bias.rank() != 1 || gain.dim(0) != bias.dim(0))
        throw DimensionError("layer_norm: gain/bias must be rank 1 with equal extent");
    const std::size_t c = gain.dim(0);
    if (x.rank() == 0 || x.dim(x.rank() - 1) != c) {
        throw DimensionError("layer_norm: trailing extent of " + shape_str(x.shape()) +
                             " does not match gain " + shape_str(gain.shape()));
    }
    const std::size_t rows = x.numel() / c;
    std::vector<T> out(x.numel());
    std::vector<T> mu(rows), rstd(rows);
    const auto& xv = x.values();
    const auto& gv = gain.values();
    const auto& bv = bias.values();
    const T invc = T(1) / static_cast<T>(c);
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = xv.data() + r * c;
        T m = T(0);
        for (std::size_t j = 0; j < c; ++j) m += row[j];
        m *= invc;
        T var = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            const T d = row[j] - m;
            var += d * d;
        }
        var *= invc;
        const T rs = T(1) / std::sqrt(var + eps);
        mu[r] = m;
        rstd[r] = rs;
        T* orow = out.data() + r * c;
        for (std::size_t j = 0; j < c; ++j) orow[j] = (row[j] - m) * rs * gv[j] + bv[j];
    }
    return detail::make_result<T>(
        x.shape(), std::move(out), "layer_norm", {x, gain, bias},
        [rows, c, mu = std::move(mu), rstd = std::move(rstd)](TensorImpl<T>& self) {
            const auto& xv = self.inputs[0]->values;
            const auto& gv = self.inputs[1]->values;
            const T invc = T(1) / static_cast<T>(c);
            const bool wx = detail::wants(self, 0);
            const bool wg = detail::wants(self, 1);
            const bool wb = detail::wants(self, 2);
            std::vector<T> xhat(c);
            for (std::size_t r = 0; r < rows; ++r) {
                const T* row = xv.data() + r * c;
                const T* g = self.grad.data() + r * c;
                for (std::size_t j = 0; j < c; ++j) xhat[j] = (row[j] - mu[r]) * rstd[r];
                if (wg) {
                    auto& dg = detail::grad_of(self, 1);
                    for (std::size_t j = 0; j < c; ++j) dg[j] += g[j] * xhat[j];
                }
                if (wb) {
                    auto& db = detail::grad_of(self, 2);
                    for (std::size_t j = 0; j < c; ++j) db[j] += g[j];
                }
                if (wx) {
                    auto& dx = detail::grad_of(self, 0);
                    T s1 = T(0), s2 = T(0);
                    for (std::size_t j = 0; j < c; ++j) {
                        const T dh = g[j] * gv[j];
                        s1 += dh;
                        s2 += dh * xhat[j];
                    }
                    s1 *= invc;
                    s2 *= invc;
                    T* d = dx.data() + r * c;
                    for (std::size_t j = 0; j < c; ++j) {
                        const T dh = g[j] * gv[j];
                        d[j] += rstd[r] * (dh - s1 - xhat[j] * s2);
                    }
                }
            }
        });
}

// ---- spatial ops -------------------------------------------------------------------

namespace detail {

inline std::size_t conv_extent(std::size_t in, std::size_t pad, std::size_t dil, std::size_t k,
                               std::size_t stride, const char* what) {
    const std::size_t span = dil * (k - 1) + 1;
    if (in + 2 * pad < span) {
        throw DimensionError(std::string(what) + ": input extent " + std::to_string(in) +
                             " too small for kernel span " + std::to_string(span) + " with pad " +
                             std::to_string(pad));
    }
    return (in + 2 * pad - span) / stride + 1;
}

}  // namespace detail

/// 2-D cross-correlation of x[Ci, H, W] with w[Co, Ci, E, E] plus bias[Co];
/// supports stride, symmetric zero padding and dilation. Output extent is
/// floor((H + 2P - r(E-1) - 1) / S) + 1. Implemented as a strip-wise
/// image-to-column expansion feeding the blocked GEMM.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                 std::size_t stride = 1, std::size_t pad = 0, std::size_t dilation = 1) {
    if (x.rank() != 3 || w.rank() != 4) {
        throw DimensionError("conv2d: expected x[C,H,W] and w[Co,Ci,E,E], got " +
                             shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    if (stride == 0 || dilation == 0) throw ConfigError("conv2d: stride/dilation must be >= 1");
    const std::size_t ci = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const std::size_t co = w.dim(0), e = w.dim(2);
    if (w.dim(1) != ci || w.dim(3) != e) {
        throw DimensionError("conv2d: weight " + shape_str(w.shape()) +
                             " incompatible with input " + shape_str(x.shape()));
    }
    if (bias.rank() != 1 || bias.dim(0) != co)
        throw DimensionError("conv2d: bias must have one value per output channel");
    kernels::ConvGeom g{};
    g.in_c = ci;
    g.in_h = h;
    g.in_w = wd;
    g.kernel = e;
    g.stride = stride;
    g.pad = pad;
    g.dilation = dilation;
    g.out_h = detail::conv_extent(h, pad, dilation, e, stride, "conv2d height");
    g.out_w = detail::conv_extent(wd, pad, dilation, e, stride, "conv2d width");

    const std::size_t taps = ci * e * e;
    const std::size_t plane = g.out_h * g.out_w;
    std::vector<T> out(co * plane);
    {
        const std::size_t strip = kernels::strip_rows(g);
        std::vector<T> col(taps * strip * g.out_w);
        for (std::size_t row0 = 0; row0 < g.out_h; row0 += strip) {
            const std::size_t rows = std::min(strip, g.out_h - row0);
            kernels::im2col_taps(g, x.values().data(), row0, rows, col.data());
            kernels::gemm(w.values().data(), taps, col.data(), rows * g.out_w,
                          out.data() + row0 * g.out_w, plane, co, taps, rows * g.out_w, false);
        }
        const auto& bv = bias.values();
        for (std::size_t c = 0; c < co; ++c) {
            T* ch = out.data() + c * plane;
            for (std::size_t i = 0; i < plane; ++i) ch[i] += bv[c];
        }
    }
    return detail::make_result<T>(
        {co, g.out_h, g.out_w}, std::move(out), "conv2d", {x, w, bias},
        [g, co, taps, plane](TensorImpl<T>& self) {
            const T* gout = self.grad.data();
            if (detail::wants(self, 2)) {
                auto& db = detail::grad_of(self, 2);
                for (std::size_t c = 0; c < co; ++c) {
                    T s = T(0);
                    const T* ch = gout + c * plane;
                    for (std::size_t i = 0; i < plane; ++i) s += ch[i];
                    db[c] += s;
                }
            }
            const bool wx = detail::wants(self, 0);
            const bool ww = detail::wants(self, 1);
            if (!wx && !ww) return;
            const std::size_t strip = kernels::strip_rows(g);
            const auto& xv = self.inputs[0]->values;
            std::vector<T> wt;
            if (wx) {
                wt.resize(taps * co);
                kernels::transpose_2d(self.inputs[1]->values.data(), wt.data(), co, taps);
            }
            std::vector<T> col(taps * strip * g.out_w);
            for (std::size_t row0 = 0; row0 < g.out_h; row0 += strip) {
                const std::size_t rows = std::min(strip, g.out_h - row0);
                const std::size_t pix = rows * g.out_w;
                if (ww) {
                    kernels::im2col_pixels(g, xv.data(), row0, rows, col.data());
                    auto& dw = detail::grad_of(self, 1);
                    kernels::gemm(gout + row0 * g.out_w, plane, col.data(), taps, dw.data(), taps,
                                  co, pix, taps, true);
                }
                if (wx) {
                    kernels::gemm(wt.data(), co, gout + row0 * g.out_w, plane, col.data(), pix,
                                  taps, co, pix, false);
                    auto& dxv = detail::grad_of(self, 0);
                    kernels::col2im_taps(g, col.data(), row0, rows, dxv.data());
                }
            }
        });
}

/// Depthwise 3x3-style convolution: w[C, E, E] filters each channel of
/// x[C, H, W] independently (stride 1, symmetric zero padding).
template <class T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                           std::size_t pad = 1) {
    if (x.rank() != 3 || w.rank() != 3) {
        throw DimensionError("depthwise_conv2d: expected x[C,H,W] and w[C,E,E], got " +
                             shape_str(x.shape()) + " and " + shape_str(w.shape()));
    }
    const std::size_t c = x.dim(0), h = x.dim(1), wd = x.dim(2), e = w.dim(1);
    if (w.dim(0) != c || w.dim(2) != e)
        throw DimensionError("depthwise_conv2d: weight " + shape_str(w.shape()) +
                             " incompatible with input " + shape_str(x.shape()));
    if (bias.rank() != 1 || bias.dim(0) != c)
        throw DimensionError("depthwise_conv2d: bias must have one value per channel");
    const std::size_t oh = detail::conv_extent(h, pad, 1, e, 1, "depthwise height");
    const std::size_t ow = detail::conv_extent(wd, pad, 1, e, 1, "depthwise width");
    std::vector<T> out(c * oh * ow);
    const auto& xv = x.values();
    const auto& wv = w.values();
    const auto& bv = bias.values();
    const long lh = static_cast<long>(h), lw = static_cast<long>(wd), lp = static_cast<long>(pad);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T* plane = xv.data() + ch * h * wd;
        const T* ker = wv.data() + ch * e * e;
        T* op = out.data() + ch * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                T acc = bv[ch];
                for (std::size_t ky = 0; ky < e; ++ky) {
                    const long iy = static_cast<long>(oy + ky) - lp;
                    if (iy < 0 || iy >= lh) continue;
                    for (std::size_t kx = 0; kx < e; ++kx) {
                        const long ix = static_cast<long>(ox + kx) - lp;
                        if (ix < 0 || ix >= lw) continue;
                        acc += ker[ky * e + kx] * plane[iy * lw + ix];
                    }
                }
                op[oy * ow + ox] = acc;
            }
        }
    }
    return detail::make_result<T>(
        {c, oh, ow}, std::move(out), "depthwise_conv2d", {x, w, bias},
        [c, h, wd, e, oh, ow, pad](TensorImpl<T>& self) {
            const T* gout = self.grad.data();
            const auto& xv = self.inputs[0]->values;
            const auto& wv = self.inputs[1]->values;
            const bool wantx = detail::wants(self, 0);
            const bool wantw = detail::wants(self, 1);
            const bool wantb = detail::wants(self, 2);
            const long lh = static_cast<long>(h), lw = static_cast<long>(wd),
                       lp = static_cast<long>(pad);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T* g = gout + ch * oh * ow;
                if (wantb) {
                    T s = T(0);
                    for (std::size_t i = 0; i < oh * ow; ++i) s += g[i];
                    detail::grad_of(self, 2)[ch] += s;
                }
                if (!wantx && !wantw) continue;
                const T* plane = xv.data() + ch * h * wd;
                const T* ker = wv.data() + ch * e * e;
                for (std::size_t oy = 0; oy < oh; ++oy) {
                    for (std::size_t ox = 0; ox < ow; ++ox) {
                        const T gv = g[oy * ow + ox];
                        if (gv == T(0)) continue;
                        for (std::size_t ky = 0; ky < e; ++ky) {
                            const long iy = static_cast<long>(oy + ky) - lp;
                            if (iy < 0 || iy >= lh) continue;
                            for (std::size_t kx = 0; kx < e; ++kx) {
                                const long ix = static_cast<long>(ox + kx) - lp;
                                if (ix < 0 || ix >= lw) continue;
                                if (wantw)
                                    detail::grad_of(self, 1)[ch * e * e + ky * e + kx] +=
                                        gv * plane[iy * lw + ix];
                                if (wantx)
                                    detail::grad_of(self, 0)[ch * h * wd + iy * lw + ix] +=
                                        gv * ker[ky * e + kx];
                            }
                        }
                    }
                }
            }
        });
}

/// Bilinear resampling of x[C, H, W] to [C, out_h, out_w] using half-pixel
/// centre alignment.
template <class T>
Tensor<T> bilinear_resize(const Tensor<T>& x, std::size_t out_h, std::size_t out_w) {
    if (x.rank() != 3) throw DimensionError("bilinear_resize: expected x[C,H,W]");
    if (out_h == 0 || out_w == 0) throw DimensionError("bilinear_resize: empty output");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    auto ty = kernels::resize_table<T>(h, out_h);
    auto tx = kernels::resize_table<T>(w, out_w);
    std::vector<T> out(c * out_h * out_w);
    const auto& xv = x.values();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T* plane = xv.data() + ch * h * w;
        T* op = out.data() + ch * out_h * out_w;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
            const T* r0 = plane + ty.lo[oy] * w;
            const T* r1 = plane + ty.hi[oy] * w;
            const T fy = ty.frac[oy];
            for (std::size_t ox = 0; ox < out_w; ++ox) {
                const std::size_t x0 = tx.lo[ox], x1 = tx.hi[ox];
                const T fx = tx.frac[ox];
                const T top = r0[x0] + fx * (r0[x1] - r0[x0]);
                const T bot = r1[x0] + fx * (r1[x1] - r1[x0]);
                op[oy * out_w + ox] = top + fy * (bot - top);
            }
        }
    }
    return detail::make_result<T>(
        {c, out_h, out_w}, std::move(out), "bilinear_resize", {x},
        [c, h, w, out_h, out_w, ty = std::move(ty), tx = std::move(tx)](TensorImpl<T>& self) {
            if (!detail::wants(self, 0)) return;
            auto& dx = detail::grad_of(self, 0);
            for (std::size_t ch = 0; ch < c; ++ch) {
                const T* g = self.grad.data() + ch * out_h * out_w;
                T* d = dx.data() + ch * h * w;
                for (std::size_t oy = 0; oy < out_h; ++oy) {
                    const std::size_t y0 = ty.lo[oy], y1 = ty.hi[oy];
                    const T fy = ty.frac[oy];
                    for (std::size_t ox = 0; ox < out_w; ++ox) {
                        const std::size_t x0 = tx.lo[ox], x1 = tx.hi[ox];
                        const T fx = tx.frac[ox];
                        const T gv = g[oy * out_w + ox];
                        d[y0 * w + x0] += gv * (T(1) - fy) * (T(1) - fx);
                        d[y0 * w + x1] += gv * (T(1) - fy) * fx;
                        d[y1 * w + x0] += gv * fy * (T(1) - fx);
                        d[y1 * w + x1] += gv * fy * fx;
                    }
                }
            }
        });
}

/// 2x2 max pooling with stride 2; ties resolve to the first element in
/// (row, column) scan order. Odd trailing rows/columns are dropped.
template <class T>
Tensor<T> maxpool2d(const Tensor<T>& x) {
    if (x.rank() != 3) throw DimensionError("maxpool2d: expected x[C,H,W]");
    const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h < 2 || w < 2) throw DimensionError("maxpool2d: input smaller than window");
    const std::size_t oh = h / 2, ow = w / 2;
    std::vector<T> out(c * oh * ow);
    std::vector<std::size_t> arg(out.size());
    const auto& xv = x.values();
    for (std::size_t ch = 0; ch < c; ++ch) {
        const T* plane = xv.data() + ch * h * w;
        T* op = out.data() + ch * oh * ow;
        std::size_t* ap = arg.data() + ch * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox) {
                std::size_t best = (2 * oy) * w + 2 * ox;
                T bv = plane[best];
                const std::size_t cand[3] = {(2 * oy) * w + 2 * ox + 1, (2 * oy + 1) * w + 2 * ox,
                                             (2 * oy + 1) * w + 2 * ox + 1};
                for (std::size_t idx : cand) {
                    if (plane[idx] > bv) {
                        bv = plane[idx];
                        best = idx;
                    }
                }
                op[oy * ow + ox] = bv;
                ap[oy * ow + ox] = best;
            }
        }
    }
    return detail::make_result<T>({c, oh, ow}, std::move(out), "maxpool2d", {x},
                                  [c, h, w, oh, ow, arg = std::move(arg)](TensorImpl<T>& self) {
                                      if (!detail::wants(self, 0)) return;
                                      auto& dx = detail::grad_of(self, 0);
                                      for (std::size_t ch = 0; ch < c; ++ch) {
                                          const T* g = self.grad.data() + ch * oh * ow;
                                          const std::size_t* ap = arg.data() + ch * oh * ow;
                                          T* d = dx.data() + ch * h * w;
                                          for (std::size_t i = 0; i < oh * ow; ++i)
                                              d[ap[i]] += g[i];
                                      }
                                  });
}

// ---- losses ------------------------------------------------------------------------

namespace detail {

template <class T>
T softplus(T s) {
    if (s > T(20)) return s;
    if (s < T(-20)) return std::exp(s);
    return std::log1p(std::exp(s));
}

template <class T>
T sigmoid_scalar(T v) {
    if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
    const T e = std::exp(v);
    return e / (T(1) + e);
}

}  // namespace detail

/// Mean binary cross-entropy measured directly on logits, using the
/// overflow-safe form max(z,0) - z*y + log(1 + exp(-|z|)). Targets carry no
/// gradient.
template <class T>
Tensor<T> bce_with_logits_mean(const Tensor<T>& logits, const Tensor<T>& targets) {
    detail::check_same_shape(logits, targets, "bce_with_logits");
    if (targets.requires_grad())
        throw UsageError("bce_with_logits: targets must not require gradients");
    if (logits.numel() == 0) throw DimensionError("bce_with_logits: empty input");
    const auto& zv = logits.values();
    const auto& yv = targets.values();
    T total = T(0);
    for (std::size_t i = 0; i < zv.size(); ++i) {
        const T z = zv[i];
        total += std::max(z, T(0)) - z * yv[i] + std::log1p(std::exp(-std::abs(z)));
    }
    const T inv = T(1) / static_cast<T>(zv.size());
    return detail::make_result<T>(
        {1}, {total * inv}, "bce_with_logits", {logits, targets}, [inv](TensorImpl<T>& self) {
            if (!detail::wants(self, 0)) return;
            auto& dz = detail::grad_of(self, 0);
            const auto& zv = self.inputs[0]->values;
            const auto& yv = self.inputs[1]->values;
            const T g = self.grad[0] * inv;
            for (std::size_t i = 0; i < zv.size(); ++i)
                dz[i] += g * (detail::sigmoid_scalar(zv[i]) - yv[i]);
        });
}

/// Mean focal loss on logits: per element alpha_t * (1 - p_t)^gamma * (-log p_t),
/// where p_t is the predicted probability of the true class and alpha_t is
/// alpha for positives, 1 - alpha for negatives.
template <class T>
Tensor<T> focal_with_logits_mean(const Tensor<T>& logits, const Tensor<T>& targets, T alpha,
                                 T gamma) {
    detail::check_same_shape(logits, targets, "focal_with_logits");
    if (targets.requires_grad())
        throw UsageError("focal_with_logits: targets must not require gradients");
    if (!(alpha > T(0)) || !(alpha < T(1)))
        throw ConfigError("focal loss alpha must lie in (0, 1)");
    if (!(gamma >= T(0))) throw ConfigError("focal loss gamma must be non-negative");
    if (logits.numel() == 0) throw DimensionError("focal_with_logits: empty input");
    const auto& zv = logits.values();
    const auto& yv = targets.values();
    T total = T(0);
    for (std::size_t i = 0; i < zv.size(); ++i) {
        const T s = (T(1) - T(2) * yv[i]) * zv[i];  // s = -z for positives, z for negatives
        const T at = yv[i] * alpha + (T(1) - yv[i]) * (T(1) - alpha);
        total += at * std::pow(detail::sigmoid_scalar(s), gamma) * detail::softplus(s);
    }
    const T inv = T(1) / static_cast<T>(zv.size());
    return detail::make_result<T>(
        {1}, {total * inv}, "focal_with_logits", {logits, targets},
        [inv, alpha, gamma](TensorImpl<T>& self) {
            if (!detail::wants(self, 0)) return;
            auto& dz = detail::grad_of(self, 0);
            const auto& zv = self.inputs[0]->values;
            const auto& yv = self.inputs[1]->values;
            const T g = self.grad[0] * inv;
            for (std::size_t i = 0; i < zv.size(); ++i) {
                const T flip = T(1) - T(2) * yv[i];
                const T s = flip * zv[i];
                const T at = yv[i] * alpha + (T(1) - yv[i]) * (T(1) - alpha);
                const T ps = detail::sigmoid_scalar(s);
                const T dls = at * std::pow(ps, gamma) *
                              (gamma * (T(1) - ps) * detail::softplus(s) + ps);
                dz[i] += g * dls * flip;
            }
        });
}

}  // namespace terraseg::ops
