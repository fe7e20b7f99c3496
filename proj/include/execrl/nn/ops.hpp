#pragma once

#include "execrl/nn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace execrl::nn {

namespace detail {

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

enum class Broadcast { same, row, scalar };

inline Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
    if (a.rows() == b.rows() && a.cols() == b.cols()) return Broadcast::same;
    if (b.rows() == 1 && b.cols() == a.cols()) return Broadcast::row;
    if (b.rows() == 1 && b.cols() == 1) return Broadcast::scalar;
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

inline std::size_t bindex(Broadcast kind, std::size_t i, std::size_t cols) {
    switch (kind) {
        case Broadcast::same: return i;
        case Broadcast::row: return i % cols;
        case Broadcast::scalar: return 0;
    }
    return 0;
}

// Elementwise unary op; `dydx(x, y)` is the local derivative.
template <class F, class D>
Tensor unary(const Tensor& a, F f, D dydx) {
    std::vector<double> out(a.size());
    const auto x = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
    return make_result(a.rows(), a.cols(), std::move(out), {a}, [dydx](Node& self) {
        double* ga = parent_grad(self, 0);
        if (!ga) return;
        const auto& x = self.parents[0]->value;
        for (std::size_t i = 0; i < self.value.size(); ++i) ga[i] += self.grad[i] * dydx(x[i], self.value[i]);
    });
}

// c[i, :] += sum_k a[i, k] * b[k, :], k ascending; rows are independent so a
// row's result does not depend on how many rows share the call.
inline void gemm_accumulate(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                            std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = b + p * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

// da[m x k] += dc[m x n] * b^T
inline void gemm_bt_accumulate(const double* dc, const double* b, double* da, std::size_t m, std::size_t k,
                               std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* dci = dc + i * n;
        double* dai = da + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* bp = b + p * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += dci[j] * bp[j];
            dai[p] += s;
        }
    }
}

// db[k x n] += a^T[k x m] * dc[m x n]
inline void gemm_at_accumulate(const double* a, const double* dc, double* db, std::size_t m, std::size_t k,
                               std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* dci = dc + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            double* dbp = db + p * n;
            for (std::size_t j = 0; j < n; ++j) dbp[j] += aip * dci[j];
        }
    }
}

}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw DimensionError("matmul: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
    std::vector<double> out(m * n, 0.0);
    detail::gemm_accumulate(a.values().data(), b.values().data(), out.data(), m, k, n);
    return make_result(m, n, std::move(out), {a, b}, [m, k, n](Node& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        if (double* ga = parent_grad(self, 0)) detail::gemm_bt_accumulate(self.grad.data(), bv.data(), ga, m, k, n);
        if (double* gb = parent_grad(self, 1)) detail::gemm_at_accumulate(av.data(), self.grad.data(), gb, m, k, n);
    });
}

// x[m x k] * w[k x n] + b[1 x n]
inline Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols())
        throw DimensionError("linear: shape mismatch x" + x.shape_str() + " w" + w.shape_str() + " b" + b.shape_str());
    const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
    std::vector<double> out(m * n);
    const auto bv = b.values();
    for (std::size_t i = 0; i < m; ++i) std::copy(bv.begin(), bv.end(), out.begin() + static_cast<std::ptrdiff_t>(i * n));
    detail::gemm_accumulate(x.values().data(), w.values().data(), out.data(), m, k, n);
    return make_result(m, n, std::move(out), {x, w, b}, [m, k, n](Node& self) {
        const auto& xv = self.parents[0]->value;
        const auto& wv = self.parents[1]->value;
        if (double* gx = parent_grad(self, 0)) detail::gemm_bt_accumulate(self.grad.data(), wv.data(), gx, m, k, n);
        if (double* gw = parent_grad(self, 1)) detail::gemm_at_accumulate(xv.data(), self.grad.data(), gw, m, k, n);
        if (double* gb = parent_grad(self, 2))
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) gb[j] += self.grad[i * n + j];
    });
}

namespace detail {

template <class F, class DA, class DB>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f, DA da, DB db) {
    const Broadcast kind = broadcast_kind(a, b, name);
    const std::size_t cols = a.cols();
    std::vector<double> out(a.size());
    const auto av = a.values();
    const auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(av[i], bv[bindex(kind, i, cols)]);
    return make_result(a.rows(), a.cols(), std::move(out), {a, b}, [kind, cols, da, db](Node& self) {
        const auto& av = self.parents[0]->value;
        const auto& bv = self.parents[1]->value;
        double* ga = parent_grad(self, 0);
        double* gb = parent_grad(self, 1);
        for (std::size_t i = 0; i < self.value.size(); ++i) {
            const std::size_t j = bindex(kind, i, cols);
            if (ga) ga[i] += self.grad[i] * da(av[i], bv[j]);
            if (gb) gb[j] += self.grad[i] * db(av[i], bv[j]);
        }
    });
}

}  // namespace detail

// Elementwise; b may also be a [1 x cols] row or a [1 x 1] scalar broadcast over a.
inline Tensor add(const Tensor& a, const Tensor& b) {
    return detail::binary(
        a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    return detail::binary(
        a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    return detail::binary(
        a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

inline Tensor scale(const Tensor& a, double s) {
    return detail::unary(a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Tensor add_scalar(const Tensor& a, double s) {
    return detail::unary(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Tensor tanh(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline double sigmoid_scalar(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary(a, sigmoid_scalar, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor relu(const Tensor& a) {
    return detail::unary(a, [](double x) { return x > 0.0 ? x : 0.0; },
                         [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Tensor exp(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Tensor log(const Tensor& a) {
    return detail::unary(a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Tensor square(const Tensor& a) {
    return detail::unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

// Row-wise log-softmax, max-shifted.
inline Tensor log_softmax(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    if (n == 0) throw DimensionError("log_softmax: zero columns");
    std::vector<double> out(a.size());
    const auto x = a.values();
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.data() + i * n;
        const double mx = *std::max_element(xi, xi + n);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += std::exp(xi[j] - mx);
        const double lse = mx + std::log(s);
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xi[j] - lse;
    }
    return make_result(m, n, std::move(out), {a}, [m, n](Node& self) {
        double* ga = parent_grad(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < m; ++i) {
            double gsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) gsum += self.grad[i * n + j];
            for (std::size_t j = 0; j < n; ++j)
                ga[i * n + j] += self.grad[i * n + j] - std::exp(self.value[i * n + j]) * gsum;
        }
    });
}

// Row-wise softmax.
inline Tensor softmax(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    if (n == 0) throw DimensionError("softmax: zero columns");
    std::vector<double> out(a.size());
    const auto x = a.values();
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = x.data() + i * n;
        const double mx = *std::max_element(xi, xi + n);
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += (out[i * n + j] = std::exp(xi[j] - mx));
        for (std::size_t j = 0; j < n; ++j) out[i * n + j] /= s;
    }
    return make_result(m, n, std::move(out), {a}, [m, n](Node& self) {
        double* ga = parent_grad(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < m; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * self.value[i * n + j];
            for (std::size_t j = 0; j < n; ++j)
                ga[i * n + j] += self.value[i * n + j] * (self.grad[i * n + j] - dot);
        }
    });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows())
        throw DimensionError("concat_cols: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    const std::size_t m = a.rows(), na = a.cols(), nb = b.cols();
    std::vector<double> out(m * (na + nb));
    for (std::size_t i = 0; i < m; ++i) {
        std::copy_n(a.values().data() + i * na, na, out.data() + i * (na + nb));
        std::copy_n(b.values().data() + i * nb, nb, out.data() + i * (na + nb) + na);
    }
    return make_result(m, na + nb, std::move(out), {a, b}, [m, na, nb](Node& self) {
        double* ga = parent_grad(self, 0);
        double* gb = parent_grad(self, 1);
        for (std::size_t i = 0; i < m; ++i) {
            const double* g = self.grad.data() + i * (na + nb);
            if (ga)
                for (std::size_t j = 0; j < na; ++j) ga[i * na + j] += g[j];
            if (gb)
                for (std::size_t j = 0; j < nb; ++j) gb[i * nb + j] += g[na + j];
        }
    });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t n = parts.front().cols();
    std::size_t m = 0;
    for (const auto& p : parts) {
        if (p.cols() != n)
            throw DimensionError("concat_rows: shape mismatch " + parts.front().shape_str() + " vs " + p.shape_str());
        m += p.rows();
    }
    std::vector<double> out;
    out.reserve(m * n);
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    return make_result(m, n, std::move(out), parts, [](Node& self) {
        std::size_t offset = 0;
        for (std::size_t i = 0; i < self.parents.size(); ++i) {
            const std::size_t len = self.parents[i]->value.size();
            if (double* g = parent_grad(self, i))
                for (std::size_t j = 0; j < len; ++j) g[j] += self.grad[offset + j];
            offset += len;
        }
    });
}

inline Tensor select_rows(const Tensor& a, std::vector<std::size_t> indices) {
    const std::size_t n = a.cols();
    std::vector<double> out(indices.size() * n);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= a.rows())
            throw DimensionError("select_rows: row " + std::to_string(indices[r]) + " outside " + a.shape_str());
        std::copy_n(a.values().data() + indices[r] * n, n, out.data() + r * n);
    }
    const std::size_t m = indices.size();
    return make_result(m, n, std::move(out), {a}, [idx = std::move(indices), n](Node& self) {
        double* ga = parent_grad(self, 0);
        if (!ga) return;
        for (std::size_t r = 0; r < idx.size(); ++r)
            for (std::size_t j = 0; j < n; ++j) ga[idx[r] * n + j] += self.grad[r * n + j];
    });
}

// out[i] = a[i, columns[i]] as an [m x 1] column.
inline Tensor pick(const Tensor& a, std::vector<std::size_t> columns) {
    if (columns.size() != a.rows())
        throw DimensionError("pick: " + std::to_string(columns.size()) + " indices for " + a.shape_str());
    const std::size_t n = a.cols();
    std::vector<double> out(columns.size());
    for (std::size_t i = 0; i < columns.size(); ++i) {
        if (columns[i] >= n) throw DimensionError("pick: column " + std::to_string(columns[i]) + " outside " + a.shape_str());
        out[i] = a.values()[i * n + columns[i]];
    }
    const std::size_t m = columns.size();
    return make_result(m, 1, std::move(out), {a}, [cols = std::move(columns), n](Node& self) {
        double* ga = parent_grad(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < cols.size(); ++i) ga[i * n + cols[i]] += self.grad[i];
    });
}

inline Tensor row_sum(const Tensor& a) {
    const std::size_t m = a.rows(), n = a.cols();
    std::vector<double> out(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[i] += a.values()[i * n + j];
    return make_result(m, 1, std::move(out), {a}, [n](Node& self) {
        double* ga = parent_grad(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < self.value.size(); ++i)
            for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += self.grad[i];
    });
}

inline Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double v : a.values()) s += v;
    return make_result(1, 1, {s}, {a}, [](Node& self) {
        double* ga = parent_grad(self, 0);
        if (!ga) return;
        for (std::size_t i = 0; i < self.parents[0]->value.size(); ++i) ga[i] += self.grad[0];
    });
}

inline Tensor mean(const Tensor& a) {
    if (a.size() == 0) throw DimensionError("mean: empty tensor");
    return scale(sum(a), 1.0 / static_cast<double>(a.size()));
}

}  // namespace execrl::nn
