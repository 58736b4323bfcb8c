#include "stadm/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace stadm {

const Array& Var::val() const { return tape_->value(id_); }
const Array& Var::grad() const { return tape_->grad(id_); }

Var Tape::leaf(Array value) {
    nodes_.push_back(Node{std::move(value), Array{}, {}, nullptr, true, false});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::constant(Array value) {
    nodes_.push_back(Node{std::move(value), Array{}, {}, nullptr, false, false});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::make_node(Array value, std::vector<int> parents,
                    std::function<void(Tape&, int)> backward) {
    bool needs = false;
    for (int p : parents) needs = needs || nodes_[p].needs_grad;
    nodes_.push_back(Node{std::move(value), Array{}, std::move(parents),
                          needs ? std::move(backward) : nullptr, needs, false});
    return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Array& Tape::grad_buffer(int id) {
    Node& n = nodes_[id];
    if (n.grad.empty() && n.value.numel() > 0) n.grad = Array::zeros(n.value.shape());
    return n.grad;
}

const Array& Tape::grad(int id) const {
    const Node& n = nodes_[id];
    if (n.grad.empty()) {
        // Distinguish "never touched" from a true zero gradient lazily.
        const_cast<Tape*>(this)->grad_buffer(id);
    }
    return nodes_[id].grad;
}

void Tape::backward(Var root) {
    if (root.tape() != this) throw DimensionError("backward: var belongs to another tape");
    Node& r = nodes_[root.id()];
    if (r.value.numel() != 1) throw DimensionError("backward: root must be scalar");
    for (auto& n : nodes_) n.reachable = false;

    std::vector<int> stack{root.id()};
    while (!stack.empty()) {
        const int id = stack.back();
        stack.pop_back();
        if (nodes_[id].reachable) continue;
        nodes_[id].reachable = true;
        for (int p : nodes_[id].parents) stack.push_back(p);
    }

    grad_buffer(root.id())[0] = 1.0;
    for (int id = root.id(); id >= 0; --id) {
        Node& n = nodes_[id];
        if (!n.reachable || !n.needs_grad || !n.backward) continue;
        if (n.grad.empty()) continue;  // no consumer contributed anything
        n.backward(*this, id);
    }
}

namespace {

Tape* same_tape(Var a, Var b) {
    if (a.tape() != b.tape()) throw DimensionError("operands belong to different tapes");
    return a.tape();
}

void require_same_shape(const Array& a, const Array& b, const char* op) {
    if (!a.same_shape(b))
        throw DimensionError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                             b.shape_str());
}

void axpy(Array& dst, const Array& src, double alpha = 1.0) {
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t i = 0; i < dst.numel(); ++i) d[i] += alpha * s[i];
}

}  // namespace

Var add(Var a, Var b) {
    Tape* t = same_tape(a, b);
    require_same_shape(a.val(), b.val(), "add");
    Array out = a.val();
    axpy(out, b.val());
    const int pa = a.id(), pb = b.id();
    return t->make_node(std::move(out), {pa, pb}, [pa, pb](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        if (tp.node(pa).needs_grad) axpy(tp.grad_buffer(pa), g);
        if (tp.node(pb).needs_grad) axpy(tp.grad_buffer(pb), g);
    });
}

Var sub(Var a, Var b) {
    Tape* t = same_tape(a, b);
    require_same_shape(a.val(), b.val(), "sub");
    Array out = a.val();
    axpy(out, b.val(), -1.0);
    const int pa = a.id(), pb = b.id();
    return t->make_node(std::move(out), {pa, pb}, [pa, pb](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        if (tp.node(pa).needs_grad) axpy(tp.grad_buffer(pa), g);
        if (tp.node(pb).needs_grad) axpy(tp.grad_buffer(pb), g, -1.0);
    });
}

Var mul(Var a, Var b) {
    Tape* t = same_tape(a, b);
    require_same_shape(a.val(), b.val(), "mul");
    Array out = a.val();
    {
        double* o = out.data();
        const double* bv = b.val().data();
        for (std::size_t i = 0; i < out.numel(); ++i) o[i] *= bv[i];
    }
    const int pa = a.id(), pb = b.id();
    return t->make_node(std::move(out), {pa, pb}, [pa, pb](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        if (tp.node(pa).needs_grad) {
            Array& da = tp.grad_buffer(pa);
            const double* bv = tp.value(pb).data();
            for (std::size_t i = 0; i < da.numel(); ++i) da[i] += g[i] * bv[i];
        }
        if (tp.node(pb).needs_grad) {
            Array& db = tp.grad_buffer(pb);
            const double* av = tp.value(pa).data();
            for (std::size_t i = 0; i < db.numel(); ++i) db[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double c) {
    Array out = a.val();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] *= c;
    const int pa = a.id();
    return a.tape()->make_node(std::move(out), {pa}, [pa, c](Tape& tp, int self) {
        if (tp.node(pa).needs_grad) axpy(tp.grad_buffer(pa), tp.grad(self), c);
    });
}

Var add_rowvec(Var x, Var row) {
    Tape* t = same_tape(x, row);
    const Array& xv = x.val();
    const Array& rv = row.val();
    const std::size_t m = xv.rows(), n = xv.cols();
    if (rv.numel() != n)
        throw DimensionError("add_rowvec: row length " + rv.shape_str() + " vs cols " +
                             std::to_string(n));
    Array out = xv;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(i, j) += rv[j];
    const int px = x.id(), pr = row.id();
    return t->make_node(std::move(out), {px, pr}, [px, pr, m, n](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        if (tp.node(px).needs_grad) axpy(tp.grad_buffer(px), g);
        if (tp.node(pr).needs_grad) {
            Array& dr = tp.grad_buffer(pr);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < n; ++j) dr[j] += g[i * n + j];
        }
    });
}

Var matmul(Var a, Var b) {
    Tape* t = same_tape(a, b);
    const Array& av = a.val();
    const Array& bv = b.val();
    const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
    if (bv.rows() != k)
        throw DimensionError("matmul: inner extents disagree, " + av.shape_str() + " x " +
                             bv.shape_str());
    Array out({m, n});
    gemm(false, false, m, k, n, 1.0, av.data(), bv.data(), out.data(), false);
    const int pa = a.id(), pb = b.id();
    return t->make_node(std::move(out), {pa, pb}, [pa, pb, m, k, n](Tape& tp, int self) {
        const Array& g = tp.grad(self);
        if (tp.node(pa).needs_grad)
            gemm(false, true, m, n, k, 1.0, g.data(), tp.value(pb).data(),
                 tp.grad_buffer(pa).data(), true);
        if (tp.node(pb).needs_grad)
            gemm(true, false, k, m, n, 1.0, tp.value(pa).data(), g.data(),
                 tp.grad_buffer(pb).data(), true);
    });
}

Var transpose(Var x) {
    const Array& xv = x.val();
    const std::size_t m = xv.rows(), n = xv.cols();
    Array out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out.at(j, i) = xv.at(i, j);
    const int px = x.id();
    return x.tape()->make_node(std::move(out), {px}, [px, m, n](Tape& tp, int self) {
        if (!tp.node(px).needs_grad) return;
        const Array& g = tp.grad(self);
        Array& dx = tp.grad_buffer(px);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) dx[i * n + j] += g[j * m + i];
    });
}

Var relu(Var x) {
    Array out = x.val();
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    const int px = x.id();
    return x.tape()->make_node(std::move(out), {px}, [px](Tape& tp, int self) {
        if (!tp.node(px).needs_grad) return;
        const Array& g = tp.grad(self);
        const Array& xv = tp.value(px);
        Array& dx = tp.grad_buffer(px);
        for (std::size_t i = 0; i < dx.numel(); ++i)
            if (xv[i] > 0.0) dx[i] += g[i];
    });
}

Var gelu(Var x) {
    static constexpr double kInvSqrt2 = 0.70710678118654752440;
    static constexpr double kInvSqrt2Pi = 0.39894228040143267794;
    Array out = x.val();
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = 0.5 * out[i] * (1.0 + std::erf(out[i] * kInvSqrt2));
    const int px = x.id();
    return x.tape()->make_node(std::move(out), {px}, [px](Tape& tp, int self) {
        if (!tp.node(px).needs_grad) return;
        const Array& g = tp.grad(self);
        const Array& xv = tp.value(px);
        Array& dx = tp.grad_buffer(px);
        for (std::size_t i = 0; i < dx.numel(); ++i) {
            const double v = xv[i];
            const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
            const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
            dx[i] += g[i] * (cdf + v * pdf);
        }
    });
}

Var softmax_rows(Var x) {
    const Array& xv = x.val();
    const std::size_t m = xv.rows(), n = xv.cols();
    Array out({m, n});
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = xv.data() + i * n;
        double mx = row[0];
        for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        double* orow = out.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) {
            orow[j] = std::exp(row[j] - mx);
            sum += orow[j];
        }
        const double inv = 1.0 / sum;
        for (std::size_t j = 0; j < n; ++j) orow[j] *= inv;
    }
    const int px = x.id();
    return x.tape()->make_node(std::move(out), {px}, [px, m, n](Tape& tp, int self) {
        if (!tp.node(px).needs_grad) return;
        const Array& g = tp.grad(self);
        const Array& y = tp.value(self);
        Array& dx = tp.grad_buffer(px);
        for (std::size_t i = 0; i < m; ++i) {
            const double* yr = y.data() + i * n;
            const double* gr = g.data() + i * n;
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) dot += yr[j] * gr[j];
            double* dr = dx.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) dr[j] += yr[j] * (gr[j] - dot);
        }
    });
}

Var layer_norm_rows(Var x, Var gain, Var shift, double eps) {
    Tape* t = same_tape(x, gain);
    same_tape(x, shift);
    const Array& xv = x.val();
    const std::size_t m = xv.rows(), n = xv.cols();
    if (n < 2) throw ConfigError("layer_norm_rows: need at least 2 columns");
    if (gain.val().numel() != n || shift.val().numel() != n)
        throw DimensionError("layer_norm_rows: gain/shift width mismatch");

    Array xhat({m, n});
    Array inv_std({m});
    for (std::size_t i = 0; i < m; ++i) {
        const double* row = xv.data() + i * n;
        double mean = 0.0;
        for (std::size_t j = 0; j < n; ++j) mean += row[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double inv = 1.0 / std::sqrt(var + eps);
        inv_std[i] = inv;
        double* hr = xhat.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) hr[j] = (row[j] - mean) * inv;
    }
    Array out({m, n});
    {
        const double* gv = gain.val().data();
        const double* sv = shift.val().data();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out.at(i, j) = xhat.at(i, j) * gv[j] + sv[j];
    }
    const int px = x.id(), pg = gain.id(), ps = shift.id();
    return t->make_node(
        std::move(out), {px, pg, ps},
        [px, pg, ps, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp,
                                                                                 int self) {
            const Array& g = tp.grad(self);
            if (tp.node(pg).needs_grad) {
                Array& dg = tp.grad_buffer(pg);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) dg[j] += g[i * n + j] * xhat[i * n + j];
            }
            if (tp.node(ps).needs_grad) {
                Array& ds = tp.grad_buffer(ps);
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) ds[j] += g[i * n + j];
            }
            if (tp.node(px).needs_grad) {
                Array& dx = tp.grad_buffer(px);
                const double* gv = tp.value(pg).data();
                for (std::size_t i = 0; i < m; ++i) {
                    const double* gr = g.data() + i * n;
                    const double* hr = xhat.data() + i * n;
                    double mean_dh = 0.0, mean_dh_h = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dh = gr[j] * gv[j];
                        mean_dh += dh;
                        mean_dh_h += dh * hr[j];
                    }
                    mean_dh /= static_cast<double>(n);
                    mean_dh_h /= static_cast<double>(n);
                    double* dr = dx.data() + i * n;
                    for (std::size_t j = 0; j < n; ++j) {
                        const double dh = gr[j] * gv[j];
                        dr[j] += inv_std[i] * (dh - mean_dh - hr[j] * mean_dh_h);
                    }
                }
            }
        });
}

Var conv1d_same(Var x, Var kernel, Var bias) {
    Tape* t = same_tape(x, kernel);
    same_tape(x, bias);
    const Array& xv = x.val();
    const Array& wv = kernel.val();
    const Array& bv = bias.val();
    if (xv.ndim() != 2 || wv.ndim() != 3)
        throw DimensionError("conv1d_same: expected x rank 2 and kernel rank 3");
    const std::size_t c_in = xv.shape()[0], len = xv.shape()[1];
    const std::size_t f_out = wv.shape()[0], kc = wv.shape()[1], kw = wv.shape()[2];
    if (kc != c_in) throw DimensionError("conv1d_same: kernel channel count mismatch");
    if (kw % 2 == 0) throw ConfigError("conv1d_same: kernel width must be odd");
    if (bv.numel() != f_out) throw DimensionError("conv1d_same: bias length mismatch");
    const std::size_t pad = (kw - 1) / 2;

    Array out({f_out, len});
    for (std::size_t f = 0; f < f_out; ++f) {
        double* orow = out.data() + f * len;
        const double bval = bv[f];
        for (std::size_t nidx = 0; nidx < len; ++nidx) orow[nidx] = bval;
        for (std::size_t c = 0; c < c_in; ++c) {
            const double* xrow = xv.data() + c * len;
            const double* wrow = wv.data() + (f * c_in + c) * kw;
            for (std::size_t j = 0; j < kw; ++j) {
                const double w = wrow[j];
                // x index = n + j - pad; restrict n so the index stays in range
                const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) -
                                           static_cast<std::ptrdiff_t>(pad);
                const std::size_t n0 = off < 0 ? static_cast<std::size_t>(-off) : 0;
                const std::size_t n1 =
                    off > 0 ? (len > static_cast<std::size_t>(off)
                                   ? len - static_cast<std::size_t>(off)
                                   : 0)
                            : len;
                for (std::size_t nidx = n0; nidx < n1; ++nidx)
                    orow[nidx] +=
                        w * xrow[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(nidx) + off)];
            }
        }
    }
    const int px = x.id(), pw = kernel.id(), pb = bias.id();
    return t->make_node(
        std::move(out), {px, pw, pb},
        [px, pw, pb, c_in, len, f_out, kw, pad](Tape& tp, int self) {
            const Array& g = tp.grad(self);
            if (tp.node(pb).needs_grad) {
                Array& db = tp.grad_buffer(pb);
                for (std::size_t f = 0; f < f_out; ++f) {
                    double s = 0.0;
                    const double* gr = g.data() + f * len;
                    for (std::size_t nidx = 0; nidx < len; ++nidx) s += gr[nidx];
                    db[f] += s;
                }
            }
            if (tp.node(pw).needs_grad) {
                Array& dw = tp.grad_buffer(pw);
                const Array& xv = tp.value(px);
                for (std::size_t f = 0; f < f_out; ++f) {
                    const double* gr = g.data() + f * len;
                    for (std::size_t c = 0; c < c_in; ++c) {
                        const double* xrow = xv.data() + c * len;
                        double* wrow = dw.data() + (f * c_in + c) * kw;
                        for (std::size_t j = 0; j < kw; ++j) {
                            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) -
                                                       static_cast<std::ptrdiff_t>(pad);
                            const std::size_t n0 = off < 0 ? static_cast<std::size_t>(-off) : 0;
                            const std::size_t n1 =
                                off > 0 ? (len > static_cast<std::size_t>(off)
                                               ? len - static_cast<std::size_t>(off)
                                               : 0)
                                        : len;
                            double s = 0.0;
                            for (std::size_t nidx = n0; nidx < n1; ++nidx)
                                s += gr[nidx] *
                                     xrow[static_cast<std::size_t>(
                                         static_cast<std::ptrdiff_t>(nidx) + off)];
                            wrow[j] += s;
                        }
                    }
                }
            }
            if (tp.node(px).needs_grad) {
                Array& dx = tp.grad_buffer(px);
                const Array& wv = tp.value(pw);
                for (std::size_t f = 0; f < f_out; ++f) {
                    const double* gr = g.data() + f * len;
                    for (std::size_t c = 0; c < c_in; ++c) {
                        double* dxr = dx.data() + c * len;
                        const double* wrow = wv.data() + (f * c_in + c) * kw;
                        for (std::size_t j = 0; j < kw; ++j) {
                            const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(j) -
                                                       static_cast<std::ptrdiff_t>(pad);
                            const std::size_t n0 = off < 0 ? static_cast<std::size_t>(-off) : 0;
                            const std::size_t n1 =
                                off > 0 ? (len > static_cast<std::size_t>(off)
                                               ? len - static_cast<std::size_t>(off)
                                               : 0)
                                        : len;
                            const double w = wrow[j];
                            for (std::size_t nidx = n0; nidx < n1; ++nidx)
                                dxr[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(nidx) +
                                                             off)] += w * gr[nidx];
                        }
                    }
                }
            }
        });
}

Var concat_rows(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no parts");
    Tape* t = parts[0].tape();
    const std::size_t n = parts[0].val().cols();
    std::size_t m = 0;
    for (const Var& p : parts) {
        same_tape(parts[0], p);
        if (p.val().cols() != n) throw DimensionError("concat_rows: column mismatch");
        m += p.val().rows();
    }
    Array out({m, n});
    std::vector<int> ids;
    std::vector<std::size_t> offsets;
    std::size_t r = 0;
    for (const Var& p : parts) {
        std::memcpy(out.data() + r * n, p.val().data(), p.val().numel() * sizeof(double));
        ids.push_back(p.id());
        offsets.push_back(r);
        r += p.val().rows();
    }
    std::vector<int> parents = ids;
    return t->make_node(std::move(out), std::move(parents),
                        [ids, offsets, n](Tape& tp, int self) {
                            const Array& g = tp.grad(self);
                            for (std::size_t i = 0; i < ids.size(); ++i) {
                                if (!tp.node(ids[i]).needs_grad) continue;
                                Array& d = tp.grad_buffer(ids[i]);
                                const double* src = g.data() + offsets[i] * n;
                                for (std::size_t e = 0; e < d.numel(); ++e) d[e] += src[e];
                            }
                        });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no parts");
    Tape* t = parts[0].tape();
    const std::size_t m = parts[0].val().rows();
    std::size_t n = 0;
    for (const Var& p : parts) {
        same_tape(parts[0], p);
        if (p.val().rows() != m) throw DimensionError("concat_cols: row mismatch");
        n += p.val().cols();
    }
    Array out({m, n});
    std::vector<int> ids;
    std::vector<std::size_t> offsets, widths;
    std::size_t c = 0;
    for (const Var& p : parts) {
        const std::size_t w = p.val().cols();
        for (std::size_t i = 0; i < m; ++i)
            std::memcpy(out.data() + i * n + c, p.val().data() + i * w, w * sizeof(double));
        ids.push_back(p.id());
        offsets.push_back(c);
        widths.push_back(w);
        c += w;
    }
    std::vector<int> parents = ids;
    return t->make_node(std::move(out), std::move(parents),
                        [ids, offsets, widths, m, n](Tape& tp, int self) {
                            const Array& g = tp.grad(self);
                            for (std::size_t i = 0; i < ids.size(); ++i) {
                                if (!tp.node(ids[i]).needs_grad) continue;
                                Array& d = tp.grad_buffer(ids[i]);
                                const std::size_t w = widths[i];
                                for (std::size_t r = 0; r < m; ++r)
                                    for (std::size_t j = 0; j < w; ++j)
                                        d[r * w + j] += g[r * n + offsets[i] + j];
                            }
                        });
}

Var slice_rows(Var x, std::size_t offset, std::size_t count) {
    const Array& xv = x.val();
    const std::size_t m = xv.rows(), n = xv.cols();
    if (offset + count > m) throw RangeError("slice_rows: out of range");
    Array out({count, n});
    std::memcpy(out.data(), xv.data() + offset * n, count * n * sizeof(double));
    const int px = x.id();
    return x.tape()->make_node(std::move(out), {px},
                               [px, offset, count, n](Tape& tp, int self) {
                                   if (!tp.node(px).needs_grad) return;
                                   const Array& g = tp.grad(self);
                                   Array& dx = tp.grad_buffer(px);
                                   double* dst = dx.data() + offset * n;
                                   for (std::size_t e = 0; e < count * n; ++e) dst[e] += g[e];
                               });
}

Var slice_cols(Var x, std::size_t offset, std::size_t count) {
    const Array& xv = x.val();
    const std::size_t m = xv.rows(), n = xv.cols();
    if (offset + count > n) throw RangeError("slice_cols: out of range");
    Array out({m, count});
    for (std::size_t i = 0; i < m; ++i)
        std::memcpy(out.data() + i * count, xv.data() + i * n + offset, count * sizeof(double));
    const int px = x.id();
    return x.tape()->make_node(std::move(out), {px},
                               [px, offset, count, m, n](Tape& tp, int self) {
                                   if (!tp.node(px).needs_grad) return;
                                   const Array& g = tp.grad(self);
                                   Array& dx = tp.grad_buffer(px);
                                   for (std::size_t i = 0; i < m; ++i)
                                       for (std::size_t j = 0; j < count; ++j)
                                           dx[i * n + offset + j] += g[i * count + j];
                               });
}

Var rows_select(Var x, std::vector<std::size_t> indices) {
    const Array& xv = x.val();
    const std::size_t m = xv.rows(), n = xv.cols();
    for (std::size_t idx : indices)
        if (idx >= m) throw RangeError("rows_select: index out of range");
    Array out({indices.size(), n});
    for (std::size_t r = 0; r < indices.size(); ++r)
        std::memcpy(out.data() + r * n, xv.data() + indices[r] * n, n * sizeof(double));
    const int px = x.id();
    return x.tape()->make_node(std::move(out), {px},
                               [px, indices = std::move(indices), n](Tape& tp, int self) {
                                   if (!tp.node(px).needs_grad) return;
                                   const Array& g = tp.grad(self);
                                   Array& dx = tp.grad_buffer(px);
                                   for (std::size_t r = 0; r < indices.size(); ++r) {
                                       double* dst = dx.data() + indices[r] * n;
                                       const double* src = g.data() + r * n;
                                       for (std::size_t j = 0; j < n; ++j) dst[j] += src[j];
                                   }
                               });
}

Var mse(Var a, Var b) {
    Tape* t = same_tape(a, b);
    require_same_shape(a.val(), b.val(), "mse");
    const std::size_t n = a.val().numel();
    if (n == 0) throw DimensionError("mse: empty operands");
    double acc = 0.0;
    {
        const double* av = a.val().data();
        const double* bv = b.val().data();
        for (std::size_t i = 0; i < n; ++i) {
            const double d = av[i] - bv[i];
            acc += d * d;
        }
    }
    const double value = acc / static_cast<double>(n);
    if (!std::isfinite(value)) throw NumericError("mse: non-finite result");
    const int pa = a.id(), pb = b.id();
    Array out = Array::from({1, 1}, {value});
    return t->make_node(std::move(out), {pa, pb}, [pa, pb, n](Tape& tp, int self) {
        const double gy = tp.grad(self)[0];
        const double c = 2.0 * gy / static_cast<double>(n);
        const double* av = tp.value(pa).data();
        const double* bv = tp.value(pb).data();
        if (tp.node(pa).needs_grad) {
            Array& da = tp.grad_buffer(pa);
            for (std::size_t i = 0; i < n; ++i) da[i] += c * (av[i] - bv[i]);
        }
        if (tp.node(pb).needs_grad) {
            Array& db = tp.grad_buffer(pb);
            for (std::size_t i = 0; i < n; ++i) db[i] -= c * (av[i] - bv[i]);
        }
    });
}

Var batch_norm_feature(Var x, Var gain, Var shift, NormMode mode, Array& running_mean,
                       Array& running_var, double momentum, double eps) {
    Tape* t = same_tape(x, gain);
    same_tape(x, shift);
    const Array& xv = x.val();
    const std::size_t b = xv.rows(), f = xv.cols();
    if (gain.val().numel() != f || shift.val().numel() != f)
        throw DimensionError("batch_norm_feature: gain/shift width mismatch");
    if (running_mean.numel() != f || running_var.numel() != f)
        throw DimensionError("batch_norm_feature: running stats width mismatch");

    Array mean({f}), inv_std({f});
    if (mode == NormMode::train) {
        if (b < 2) throw ConfigError("batch_norm_feature: train mode needs at least 2 rows");
        Array var({f});
        for (std::size_t j = 0; j < f; ++j) {
            double mu = 0.0;
            for (std::size_t i = 0; i < b; ++i) mu += xv.at(i, j);
            mu /= static_cast<double>(b);
            double v = 0.0;
            for (std::size_t i = 0; i < b; ++i) {
                const double d = xv.at(i, j) - mu;
                v += d * d;
            }
            v /= static_cast<double>(b);
            mean[j] = mu;
            var[j] = v;
            inv_std[j] = 1.0 / std::sqrt(v + eps);
        }
        // Running stats track the unbiased variance.
        const double unbias = static_cast<double>(b) / static_cast<double>(b - 1);
        for (std::size_t j = 0; j < f; ++j) {
            running_mean[j] = (1.0 - momentum) * running_mean[j] + momentum * mean[j];
            running_var[j] = (1.0 - momentum) * running_var[j] + momentum * var[j] * unbias;
        }
    } else {
        for (std::size_t j = 0; j < f; ++j) {
            mean[j] = running_mean[j];
            inv_std[j] = 1.0 / std::sqrt(running_var[j] + eps);
        }
    }

    Array xhat({b, f});
    for (std::size_t i = 0; i < b; ++i)
        for (std::size_t j = 0; j < f; ++j) xhat.at(i, j) = (xv.at(i, j) - mean[j]) * inv_std[j];
    Array out({b, f});
    {
        const double* gv = gain.val().data();
        const double* sv = shift.val().data();
        for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < f; ++j) out.at(i, j) = xhat.at(i, j) * gv[j] + sv[j];
    }

    const int px = x.id(), pg = gain.id(), ps = shift.id();
    const bool train = mode == NormMode::train;
    return t->make_node(
        std::move(out), {px, pg, ps},
        [px, pg, ps, b, f, train, xhat = std::move(xhat), inv_std = std::move(inv_std)](
            Tape& tp, int self) {
            const Array& g = tp.grad(self);
            if (tp.node(pg).needs_grad) {
                Array& dg = tp.grad_buffer(pg);
                for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t j = 0; j < f; ++j) dg[j] += g[i * f + j] * xhat[i * f + j];
            }
            if (tp.node(ps).needs_grad) {
                Array& ds = tp.grad_buffer(ps);
                for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t j = 0; j < f; ++j) ds[j] += g[i * f + j];
            }
            if (!tp.node(px).needs_grad) return;
            Array& dx = tp.grad_buffer(px);
            const double* gv = tp.value(pg).data();
            if (!train) {
                for (std::size_t i = 0; i < b; ++i)
                    for (std::size_t j = 0; j < f; ++j)
                        dx[i * f + j] += g[i * f + j] * gv[j] * inv_std[j];
                return;
            }
            for (std::size_t j = 0; j < f; ++j) {
                double mean_dh = 0.0, mean_dh_h = 0.0;
                for (std::size_t i = 0; i < b; ++i) {
                    const double dh = g[i * f + j] * gv[j];
                    mean_dh += dh;
                    mean_dh_h += dh * xhat[i * f + j];
                }
                mean_dh /= static_cast<double>(b);
                mean_dh_h /= static_cast<double>(b);
                for (std::size_t i = 0; i < b; ++i) {
                    const double dh = g[i * f + j] * gv[j];
                    dx[i * f + j] += inv_std[j] * (dh - mean_dh - xhat[i * f + j] * mean_dh_h);
                }
            }
        });
}

}  // namespace stadm
