#include "onecast/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "onecast/error.hpp"

namespace onecast::numerics {
namespace {

void require_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw DimensionError(std::string(op) + ": expected a matrix, got " + shape_string(t.shape()));
    }
}

void require_same(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                             shape_string(b.shape()));
    }
}

void require_row_vector(const Tensor& x, const Tensor& row, const char* op) {
    if (row.size() != x.cols()) {
        throw DimensionError(std::string(op) + ": row vector " + shape_string(row.shape()) +
                             " does not match " + shape_string(x.shape()));
    }
}

// acc += a * b^T  (a: n x k, b: m x k)
void gemm_abt(const Tensor& a, const Tensor& b, Tensor& acc) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ar = &a[i * k];
        for (std::size_t j = 0; j < m; ++j) {
            const double* br = &b[j * k];
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += ar[p] * br[p];
            acc[i * m + j] += s;
        }
    }
}

// acc += a^T * b  (a: n x k, b: n x m)
void gemm_atb(const Tensor& a, const Tensor& b, Tensor& acc) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        const double* ar = &a[i * k];
        const double* br = &b[i * m];
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ar[p];
            if (av == 0.0) continue;
            double* out = &acc[p * m];
            for (std::size_t j = 0; j < m; ++j) out[j] += av * br[j];
        }
    }
}

// acc += a * b  (a: n x k, b: k x m)
void gemm_ab(const Tensor& a, const Tensor& b, Tensor& acc) {
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    for (std::size_t i = 0; i < n; ++i) {
        double* out = &acc[i * m];
        for (std::size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            if (av == 0.0) continue;
            const double* br = &b[p * m];
            for (std::size_t j = 0; j < m; ++j) out[j] += av * br[j];
        }
    }
}

template <typename F, typename DF>
Var unary(Var x, F f, DF df) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
    const std::size_t xi = x.index;
    return x.tape->record(std::move(out), {x}, [xi, df](Tape& t, std::size_t self) {
        Tensor* gx = t.grad_slot(xi);
        if (!gx) return;
        const Tensor& g = *t.grad_slot(self);
        const Tensor& xv = t.value(xi);
        for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i] * df(xv[i]);
    });
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank2(a, "matmul");
    require_rank2(b, "matmul");
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    Tensor out({a.rows(), b.cols()});
    gemm_ab(a, b, out);
    return out;
}

Var matmul(Var a, Var b) {
    Tensor out = matmul(a.value(), b.value());
    const std::size_t ai = a.index, bi = b.index;
    return a.tape->record(std::move(out), {a, b}, [ai, bi](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad_slot(self);
        if (Tensor* ga = t.grad_slot(ai)) gemm_abt(g, t.value(bi), *ga);
        if (Tensor* gb = t.grad_slot(bi)) gemm_atb(t.value(ai), g, *gb);
    });
}

Var linear(Var x, Var weight, std::optional<Var> bias) {
    if (x.value().rank() != 2 || weight.value().rank() != 2 || x.cols() != weight.rows()) {
        throw DimensionError("linear: input " + shape_string(x.shape()) + " incompatible with weight " +
                             shape_string(weight.shape()));
    }
    Var y = matmul(x, weight);
    return bias ? add_row(y, *bias) : y;
}

Var add(Var a, Var b) {
    require_same(a.value(), b.value(), "add");
    Tensor out = a.value();
    out.add_inplace(b.value());
    const std::size_t ai = a.index, bi = b.index;
    return a.tape->record(std::move(out), {a, b}, [ai, bi](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad_slot(self);
        if (Tensor* ga = t.grad_slot(ai)) ga->add_inplace(g);
        if (Tensor* gb = t.grad_slot(bi)) gb->add_inplace(g);
    });
}

Var sub(Var a, Var b) {
    require_same(a.value(), b.value(), "sub");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
    const std::size_t ai = a.index, bi = b.index;
    return a.tape->record(std::move(out), {a, b}, [ai, bi](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad_slot(self);
        if (Tensor* ga = t.grad_slot(ai)) ga->add_inplace(g);
        if (Tensor* gb = t.grad_slot(bi))
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
    });
}

Var mul(Var a, Var b) {
    require_same(a.value(), b.value(), "mul");
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const std::size_t ai = a.index, bi = b.index;
    return a.tape->record(std::move(out), {a, b}, [ai, bi](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad_slot(self);
        if (Tensor* ga = t.grad_slot(ai)) {
            const Tensor& bv = t.value(bi);
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * bv[i];
        }
        if (Tensor* gb = t.grad_slot(bi)) {
            const Tensor& av = t.value(ai);
            for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double s) {
    Tensor out = a.value();
    for (auto& v : out.values()) v *= s;
    const std::size_t ai = a.index;
    return a.tape->record(std::move(out), {a}, [ai, s](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad_slot(self);
        if (Tensor* ga = t.grad_slot(ai))
            for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += s * g[i];
    });
}

Var add_row(Var x, Var row) {
    const Tensor& xv = x.value();
    require_rank2(xv, "add_row");
    require_row_vector(xv, row.value(), "add_row");
    Tensor out = xv;
    const Tensor& rv = row.value();
    const std::size_t n = xv.rows(), c = xv.cols();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] += rv[j];
    const std::size_t xi = x.index, ri = row.index;
    return x.tape->record(std::move(out), {x, row}, [xi, ri, n, c](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad_slot(self);
        if (Tensor* gx = t.grad_slot(xi)) gx->add_inplace(g);
        if (Tensor* gr = t.grad_slot(ri))
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) (*gr)[j] += g[i * c + j];
    });
}

Var mul_row(Var x, Var row) {
    const Tensor& xv = x.value();
    require_rank2(xv, "mul_row");
    require_row_vector(xv, row.value(), "mul_row");
    Tensor out = xv;
    const Tensor& rv = row.value();
    const std::size_t n = xv.rows(), c = xv.cols();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] *= rv[j];
    const std::size_t xi = x.index, ri = row.index;
    return x.tape->record(std::move(out), {x, row}, [xi, ri, n, c](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad_slot(self);
        if (Tensor* gx = t.grad_slot(xi)) {
            const Tensor& rv = t.value(ri);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += g[i * c + j] * rv[j];
        }
        if (Tensor* gr = t.grad_slot(ri)) {
            const Tensor& xv = t.value(xi);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < c; ++j) (*gr)[j] += g[i * c + j] * xv[i * c + j];
        }
    });
}

Var relu(Var x) {
    return unary(
        x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var x) {
    return unary(
        x,
        [](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + 0.044715 * v * v * v))); },
        [](double v) {
            const double u = kGeluC * (v + 0.044715 * v * v * v);
            const double th = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * 0.044715 * v * v);
            return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
        });
}

Var tanh(Var x) {
    return unary(
        x, [](double v) { return std::tanh(v); },
        [](double v) {
            const double th = std::tanh(v);
            return 1.0 - th * th;
        });
}

Var transpose(Var x) {
    require_rank2(x.value(), "transpose");
    const std::size_t xi = x.index;
    return x.tape->record(x.value().transposed(), {x}, [xi](Tape& t, std::size_t self) {
        if (Tensor* gx = t.grad_slot(xi)) gx->add_inplace(t.grad_slot(self)->transposed());
    });
}

Var reshape(Var x, Shape shape) {
    const std::size_t xi = x.index;
    return x.tape->record(x.value().reshaped(std::move(shape)), {x}, [xi](Tape& t, std::size_t self) {
        if (Tensor* gx = t.grad_slot(xi)) {
            const Tensor& g = *t.grad_slot(self);
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[i] += g[i];
        }
    });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
    const Tensor& xv = x.value();
    require_rank2(xv, "slice_rows");
    if (begin + count > xv.rows()) {
        throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                             ") out of " + shape_string(xv.shape()));
    }
    const std::size_t c = xv.cols();
    Tensor out({count, c});
    std::copy_n(&xv[begin * c], count * c, out.values().data());
    const std::size_t xi = x.index;
    return x.tape->record(std::move(out), {x}, [xi, begin, c](Tape& t, std::size_t self) {
        if (Tensor* gx = t.grad_slot(xi)) {
            const Tensor& g = *t.grad_slot(self);
            for (std::size_t i = 0; i < g.size(); ++i) (*gx)[begin * c + i] += g[i];
        }
    });
}

Var slice_cols(Var x, std::size_t begin, std::size_t count) {
    const Tensor& xv = x.value();
    require_rank2(xv, "slice_cols");
    if (begin + count > xv.cols()) {
        throw DimensionError("slice_cols: cols [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                             ") out of " + shape_string(xv.shape()));
    }
    const std::size_t n = xv.rows(), c = xv.cols();
    Tensor out({n, count});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < count; ++j) out[i * count + j] = xv[i * c + begin + j];
    const std::size_t xi = x.index;
    return x.tape->record(std::move(out), {x}, [xi, begin, count, n, c](Tape& t, std::size_t self) {
        if (Tensor* gx = t.grad_slot(xi)) {
            const Tensor& g = *t.grad_slot(self);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < count; ++j) (*gx)[i * c + begin + j] += g[i * count + j];
        }
    });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t c = parts[0].cols();
    std::size_t rows = 0;
    for (const Var& p : parts) {
        require_rank2(p.value(), "concat_rows");
        if (p.cols() != c) {
            throw DimensionError("concat_rows: " + shape_string(parts[0].shape()) + " vs " +
                                 shape_string(p.shape()));
        }
        rows += p.rows();
    }
    Tensor out({rows, c});
    std::vector<std::size_t> indices, offsets;
    std::size_t off = 0;
    for (const Var& p : parts) {
        std::copy(p.value().values().begin(), p.value().values().end(), out.values().begin() + off);
        indices.push_back(p.index);
        offsets.push_back(off);
        off += p.value().size();
    }
    return parts[0].tape->record(std::move(out), parts, [indices, offsets](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad_slot(self);
        for (std::size_t k = 0; k < indices.size(); ++k) {
            if (Tensor* gp = t.grad_slot(indices[k]))
                for (std::size_t i = 0; i < gp->size(); ++i) (*gp)[i] += g[offsets[k] + i];
        }
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t n = parts[0].rows();
    std::size_t cols = 0;
    for (const Var& p : parts) {
        require_rank2(p.value(), "concat_cols");
        if (p.rows() != n) {
            throw DimensionError("concat_cols: " + shape_string(parts[0].shape()) + " vs " +
                                 shape_string(p.shape()));
        }
        cols += p.cols();
    }
    Tensor out({n, cols});
    std::vector<std::size_t> indices, offsets;
    std::size_t off = 0;
    for (const Var& p : parts) {
        const Tensor& pv = p.value();
        const std::size_t pc = pv.cols();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < pc; ++j) out[i * cols + off + j] = pv[i * pc + j];
        indices.push_back(p.index);
        offsets.push_back(off);
        off += pc;
    }
    return parts[0].tape->record(std::move(out), parts, [indices, offsets, n, cols](Tape& t, std::size_t self) {
        const Tensor& g = *t.grad_slot(self);
        for (std::size_t k = 0; k < indices.size(); ++k) {
            Tensor* gp = t.grad_slot(indices[k]);
            if (!gp) continue;
            const std::size_t pc = gp->cols();
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < pc; ++j) (*gp)[i * pc + j] += g[i * cols + offsets[k] + j];
        }
    });
}

Var gather_rows(Var table, std::span<const int> ids) {
    const Tensor& tv = table.value();
    require_rank2(tv, "gather_rows");
    const std::size_t c = tv.cols();
    Tensor out({ids.size(), c});
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
            throw VocabularyError("gather_rows: id " + std::to_string(ids[i]) + " outside table of " +
                                  std::to_string(tv.rows()) + " rows");
        }
        std::copy_n(&tv[static_cast<std::size_t>(ids[i]) * c], c, &out[i * c]);
    }
    std::vector<int> idv(ids.begin(), ids.end());
    const std::size_t ti = table.index;
    return table.tape->record(std::move(out), {table}, [ti, idv, c](Tape& t, std::size_t self) {
        if (Tensor* gt = t.grad_slot(ti)) {
            const Tensor& g = *t.grad_slot(self);
            for (std::size_t i = 0; i < idv.size(); ++i)
                for (std::size_t j = 0; j < c; ++j) (*gt)[static_cast<std::size_t>(idv[i]) * c + j] += g[i * c + j];
        }
    });
}

Tensor softmax_rows(const Tensor& x) {
    require_rank2(x, "softmax_rows");
    const std::size_t n = x.rows(), c = x.cols();
    Tensor out(x.shape());
    for (std::size_t i = 0; i < n; ++i) {
        const double* xr = &x[i * c];
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < c; ++j) m = std::max(m, xr[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out[i * c + j] = std::exp(xr[j] - m);
            s += out[i * c + j];
        }
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] /= s;
    }
    return out;
}

Var softmax_rows(Var x) {
    Tensor out = softmax_rows(x.value());
    const std::size_t xi = x.index;
    return x.tape->record(std::move(out), {x}, [xi](Tape& t, std::size_t self) {
        Tensor* gx = t.grad_slot(xi);
        if (!gx) return;
        const Tensor& g = *t.grad_slot(self);
        const Tensor& y = t.value(self);
        const std::size_t n = y.rows(), c = y.cols();
        for (std::size_t i = 0; i < n; ++i) {
            double dot = 0.0;
            for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
            for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
        }
    });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    const Tensor& xv = x.value();
    require_rank2(xv, "layer_norm");
    require_row_vector(xv, gamma.value(), "layer_norm");
    require_row_vector(xv, beta.value(), "layer_norm");
    const std::size_t n = xv.rows(), c = xv.cols();
    Tensor xhat(xv.shape());
    std::vector<double> inv_std(n);
    for (std::size_t i = 0; i < n; ++i) {
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += xv[i * c + j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (xv[i * c + j] - mu) * (xv[i * c + j] - mu);
        var /= static_cast<double>(c);
        inv_std[i] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < c; ++j) xhat[i * c + j] = (xv[i * c + j] - mu) * inv_std[i];
    }
    const Tensor& gv = gamma.value();
    const Tensor& bv = beta.value();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
    const std::size_t xi = x.index, gi = gamma.index, bi = beta.index;
    return x.tape->record(
        std::move(out), {x, gamma, beta},
        [xi, gi, bi, n, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::size_t self) {
            const Tensor& g = *t.grad_slot(self);
            if (Tensor* gg = t.grad_slot(gi))
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < c; ++j) (*gg)[j] += g[i * c + j] * xhat[i * c + j];
            if (Tensor* gb = t.grad_slot(bi))
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < c; ++j) (*gb)[j] += g[i * c + j];
            if (Tensor* gx = t.grad_slot(xi)) {
                const Tensor& gv = t.value(gi);
                const double inv_c = 1.0 / static_cast<double>(c);
                for (std::size_t i = 0; i < n; ++i) {
                    double sum_d = 0.0, sum_dx = 0.0;
                    for (std::size_t j = 0; j < c; ++j) {
                        const double d = g[i * c + j] * gv[j];
                        sum_d += d;
                        sum_dx += d * xhat[i * c + j];
                    }
                    for (std::size_t j = 0; j < c; ++j) {
                        const double d = g[i * c + j] * gv[j];
                        (*gx)[i * c + j] += inv_std[i] * (d - inv_c * sum_d - xhat[i * c + j] * inv_c * sum_dx);
                    }
                }
            }
        });
}

Var conv1d(Var x, Var kernels, std::optional<Var> bias, std::size_t stride, std::size_t padding) {
    const Tensor& xv = x.value();
    const Tensor& kv = kernels.value();
    if (xv.rank() != 2 || kv.rank() != 3 || kv.shape()[1] != xv.rows()) {
        throw DimensionError("conv1d: input " + shape_string(xv.shape()) + " incompatible with kernels " +
                             shape_string(kv.shape()));
    }
    if (stride == 0) throw DimensionError("conv1d: stride must be positive");
    const std::size_t cin = xv.rows(), len = xv.cols();
    const std::size_t cout = kv.shape()[0], k = kv.shape()[2];
    if (len + 2 * padding < k) {
        throw DimensionError("conv1d: kernel width " + std::to_string(k) + " exceeds padded length " +
                             std::to_string(len + 2 * padding));
    }
    if (bias && bias->value().size() != cout) {
        throw DimensionError("conv1d: bias " + shape_string(bias->shape()) + " vs kernels " + shape_string(kv.shape()));
    }
    const std::size_t lout = (len + 2 * padding - k) / stride + 1;
    Tensor out({cout, lout});
    for (std::size_t o = 0; o < cout; ++o) {
        const double b = bias ? bias->value()[o] : 0.0;
        for (std::size_t t = 0; t < lout; ++t) out[o * lout + t] = b;
        for (std::size_t i = 0; i < cin; ++i) {
            const double* kr = &kv[(o * cin + i) * k];
            const double* xr = &xv[i * len];
            for (std::size_t t = 0; t < lout; ++t) {
                double s = 0.0;
                for (std::size_t j = 0; j < k; ++j) {
                    const std::ptrdiff_t pos = static_cast<std::ptrdiff_t>(t * stride + j) -
                                               static_cast<std::ptrdiff_t>(padding);
                    if (pos >= 0 && pos < static_cast<std::ptrdiff_t>(len)) s += kr[j] * xr[pos];
                }
                out[o * lout + t] += s;
            }
        }
    }
    std::vector<Var> parents{x, kernels};
    if (bias) parents.push_back(*bias);
    const std::size_t xi = x.index, ki = kernels.index;
    const std::optional<std::size_t> bi = bias ? std::optional<std::size_t>(bias->index) : std::nullopt;
    return x.tape->record(std::move(out), parents,
                          [=](Tape& tp, std::size_t self) {
                              const Tensor& g = *tp.grad_slot(self);
                              const Tensor& xv = tp.value(xi);
                              const Tensor& kv = tp.value(ki);
                              Tensor* gx = tp.grad_slot(xi);
                              Tensor* gk = tp.grad_slot(ki);
                              for (std::size_t o = 0; o < cout; ++o) {
                                  for (std::size_t i = 0; i < cin; ++i) {
                                      for (std::size_t t = 0; t < lout; ++t) {
                                          const double go = g[o * lout + t];
                                          if (go == 0.0) continue;
                                          for (std::size_t j = 0; j < k; ++j) {
                                              const std::ptrdiff_t pos =
                                                  static_cast<std::ptrdiff_t>(t * stride + j) -
                                                  static_cast<std::ptrdiff_t>(padding);
                                              if (pos < 0 || pos >= static_cast<std::ptrdiff_t>(len)) continue;
                                              if (gk) (*gk)[(o * cin + i) * k + j] += go * xv[i * len + pos];
                                              if (gx) (*gx)[i * len + pos] += go * kv[(o * cin + i) * k + j];
                                          }
                                      }
                                  }
                              }
                              if (bi) {
                                  if (Tensor* gb = tp.grad_slot(*bi))
                                      for (std::size_t o = 0; o < cout; ++o)
                                          for (std::size_t t = 0; t < lout; ++t) (*gb)[o] += g[o * lout + t];
                              }
                          });
}

Var conv_transpose1d(Var x, Var kernels, std::optional<Var> bias, std::size_t stride) {
    const Tensor& xv = x.value();
    const Tensor& kv = kernels.value();
    if (xv.rank() != 2 || kv.rank() != 3 || kv.shape()[0] != xv.rows()) {
        throw DimensionError("conv_transpose1d: input " + shape_string(xv.shape()) + " incompatible with kernels " +
                             shape_string(kv.shape()));
    }
    if (stride == 0) throw DimensionError("conv_transpose1d: stride must be positive");
    const std::size_t cin = xv.rows(), len = xv.cols();
    const std::size_t cout = kv.shape()[1], k = kv.shape()[2];
    if (bias && bias->value().size() != cout) {
        throw DimensionError("conv_transpose1d: bias " + shape_string(bias->shape()) + " vs kernels " +
                             shape_string(kv.shape()));
    }
    const std::size_t lout = (len - 1) * stride + k;
    Tensor out({cout, lout});
    if (bias)
        for (std::size_t o = 0; o < cout; ++o)
            for (std::size_t t = 0; t < lout; ++t) out[o * lout + t] = bias->value()[o];
    for (std::size_t i = 0; i < cin; ++i)
        for (std::size_t o = 0; o < cout; ++o) {
            const double* kr = &kv[(i * cout + o) * k];
            for (std::size_t t = 0; t < len; ++t) {
                const double xval = xv[i * len + t];
                for (std::size_t j = 0; j < k; ++j) out[o * lout + t * stride + j] += xval * kr[j];
            }
        }
    std::vector<Var> parents{x, kernels};
    if (bias) parents.push_back(*bias);
    const std::size_t xi = x.index, ki = kernels.index;
    const std::optional<std::size_t> bi = bias ? std::optional<std::size_t>(bias->index) : std::nullopt;
    return x.tape->record(std::move(out), parents, [=](Tape& tp, std::size_t self) {
        const Tensor& g = *tp.grad_slot(self);
        const Tensor& xv = tp.value(xi);
        const Tensor& kv = tp.value(ki);
        Tensor* gx = tp.grad_slot(xi);
        Tensor* gk = tp.grad_slot(ki);
        for (std::size_t i = 0; i < cin; ++i)
            for (std::size_t o = 0; o < cout; ++o)
                for (std::size_t t = 0; t < len; ++t)
                    for (std::size_t j = 0; j < k; ++j) {
                        const double go = g[o * lout + t * stride + j];
                        if (gx) (*gx)[i * len + t] += go * kv[(i * cout + o) * k + j];
                        if (gk) (*gk)[(i * cout + o) * k + j] += go * xv[i * len + t];
                    }
        if (bi) {
            if (Tensor* gb = tp.grad_slot(*bi))
                for (std::size_t o = 0; o < cout; ++o)
                    for (std::size_t t = 0; t < lout; ++t) (*gb)[o] += g[o * lout + t];
        }
    });
}

Var sum(Var x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    const std::size_t xi = x.index;
    return x.tape->record(Tensor::scalar(s), {x}, [xi](Tape& t, std::size_t self) {
        if (Tensor* gx = t.grad_slot(xi)) {
            const double g = (*t.grad_slot(self))[0];
            for (auto& v : gx->values()) v += g;
        }
    });
}

Var mean(Var x) {
    const double n = static_cast<double>(x.value().size());
    return scale(sum(x), 1.0 / n);
}

Var mse(Var a, Var b) {
    require_same(a.value(), b.value(), "mse");
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    const double n = static_cast<double>(av.size());
    double s = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) s += (av[i] - bv[i]) * (av[i] - bv[i]);
    const std::size_t ai = a.index, bi = b.index;
    return a.tape->record(Tensor::scalar(s / n), {a, b}, [ai, bi, n](Tape& t, std::size_t self) {
        const double g = (*t.grad_slot(self))[0];
        const Tensor& av = t.value(ai);
        const Tensor& bv = t.value(bi);
        Tensor* ga = t.grad_slot(ai);
        Tensor* gb = t.grad_slot(bi);
        for (std::size_t i = 0; i < av.size(); ++i) {
            const double d = 2.0 * g * (av[i] - bv[i]) / n;
            if (ga) (*ga)[i] += d;
            if (gb) (*gb)[i] -= d;
        }
    });
}

Var stop_gradient(Var x) { return x.tape->constant(x.value()); }

Var straight_through(Var continuous, Var quantized) {
    require_same(continuous.value(), quantized.value(), "straight_through");
    const std::size_t ci = continuous.index;
    return continuous.tape->record(quantized.value(), {continuous}, [ci](Tape& t, std::size_t self) {
        if (Tensor* gc = t.grad_slot(ci)) gc->add_inplace(*t.grad_slot(self));
    });
}

Var softmax_cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights) {
    const Tensor& lv = logits.value();
    require_rank2(lv, "softmax_cross_entropy");
    const std::size_t n = lv.rows(), v = lv.cols();
    if (targets.size() != n || weights.size() != n) {
        throw DimensionError("softmax_cross_entropy: logits " + shape_string(lv.shape()) + " with " +
                             std::to_string(targets.size()) + " targets and " + std::to_string(weights.size()) +
                             " weights");
    }
    double wsum = 0.0;
    for (double w : weights) wsum += w;
    if (wsum <= 0.0) throw DegenerateBatchError("softmax_cross_entropy: every weight is zero");
    for (int tgt : targets) {
        if (tgt < 0 || static_cast<std::size_t>(tgt) >= v) {
            throw VocabularyError("softmax_cross_entropy: target " + std::to_string(tgt) + " outside [0, " +
                                  std::to_string(v) + ")");
        }
    }
    Tensor probs = softmax_rows(lv);
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (weights[i] == 0.0) continue;
        const double* row = &lv[i * v];
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < v; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < v; ++j) s += std::exp(row[j] - m);
        const double log_p = row[targets[i]] - m - std::log(s);
        loss -= weights[i] * log_p;
    }
    loss /= wsum;
    std::vector<int> tg(targets.begin(), targets.end());
    std::vector<double> wt(weights.begin(), weights.end());
    const std::size_t li = logits.index;
    return logits.tape->record(Tensor::scalar(loss), {logits},
                               [li, tg = std::move(tg), wt = std::move(wt), probs = std::move(probs), wsum, v](
                                   Tape& t, std::size_t self) {
                                   Tensor* gl = t.grad_slot(li);
                                   if (!gl) return;
                                   const double g = (*t.grad_slot(self))[0];
                                   for (std::size_t i = 0; i < tg.size(); ++i) {
                                       if (wt[i] == 0.0) continue;
                                       const double c = g * wt[i] / wsum;
                                       for (std::size_t j = 0; j < v; ++j) {
                                           const double y = static_cast<std::size_t>(tg[i]) == j ? 1.0 : 0.0;
                                           (*gl)[i * v + j] += c * (probs[i * v + j] - y);
                                       }
                                   }
                               });
}

}  // namespace onecast::numerics
