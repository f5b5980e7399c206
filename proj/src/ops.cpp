#include "dtspike/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace dts {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
}

void record_op(const char* op, std::vector<Tensor> inputs, Tensor& out, std::function<void()> backward) {
    GradTape* tape = GradTape::current();
    if (!tape) return;
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (!any) return;
    out.set_requires_grad(true);
    TapeNode node;
    node.op = op;
    for (auto& t : inputs) node.inputs.push_back(t.impl());
    node.output = out.impl();
    node.backward = std::move(backward);
    tape->record(std::move(node));
}

} // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    const size_t n = a.values().size();
    std::vector<float> out(n);
    const float* pa = a.values().data();
    const float* pb = b.values().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
    Tensor c = make_tensor(a.shape(), std::move(out));
    auto ia = a.impl(), ib = b.impl(), ic = c.impl();
    record_op("add", {a, b}, c, [ia, ib, ic, n] {
        accumulate_grad(ia, ic->grad.data(), n);
        accumulate_grad(ib, ic->grad.data(), n);
    });
    return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    const size_t n = a.values().size();
    std::vector<float> out(n);
    const float* pa = a.values().data();
    const float* pb = b.values().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] - pb[i];
    Tensor c = make_tensor(a.shape(), std::move(out));
    auto ia = a.impl(), ib = b.impl(), ic = c.impl();
    record_op("sub", {a, b}, c, [ia, ib, ic, n] {
        accumulate_grad(ia, ic->grad.data(), n);
        if (ib->requires_grad) {
            ib->ensure_grad();
            for (size_t i = 0; i < n; ++i) ib->grad[i] -= ic->grad[i];
        }
    });
    return c;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    const size_t n = a.values().size();
    std::vector<float> out(n);
    const float* pa = a.values().data();
    const float* pb = b.values().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
    Tensor c = make_tensor(a.shape(), std::move(out));
    auto ia = a.impl(), ib = b.impl(), ic = c.impl();
    record_op("mul", {a, b}, c, [ia, ib, ic, n] {
        if (ia->requires_grad) {
            ia->ensure_grad();
            for (size_t i = 0; i < n; ++i) ia->grad[i] += ic->grad[i] * ib->data[i];
        }
        if (ib->requires_grad) {
            ib->ensure_grad();
            for (size_t i = 0; i < n; ++i) ib->grad[i] += ic->grad[i] * ia->data[i];
        }
    });
    return c;
}

Tensor scale(const Tensor& a, float cfac) {
    const size_t n = a.values().size();
    std::vector<float> out(n);
    const float* pa = a.values().data();
    for (size_t i = 0; i < n; ++i) out[i] = pa[i] * cfac;
    Tensor c = make_tensor(a.shape(), std::move(out));
    auto ia = a.impl(), ic = c.impl();
    record_op("scale", {a}, c, [ia, ic, n, cfac] {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        for (size_t i = 0; i < n; ++i) ia->grad[i] += ic->grad[i] * cfac;
    });
    return c;
}

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw DimensionError("reshape: " + shape_str(a.shape()) + " has " + std::to_string(a.numel()) +
                             " elements, target " + shape_str(shape) + " wants " +
                             std::to_string(shape_numel(shape)));
    std::vector<float> out(a.values().begin(), a.values().end());
    Tensor c = make_tensor(std::move(shape), std::move(out));
    auto ia = a.impl(), ic = c.impl();
    const size_t n = a.values().size();
    record_op("reshape", {a}, c, [ia, ic, n] { accumulate_grad(ia, ic->grad.data(), n); });
    return c;
}

Tensor permute(const Tensor& a, const std::vector<int>& dims) {
    const int nd = a.ndim();
    if (static_cast<int>(dims.size()) != nd) throw DimensionError("permute: rank mismatch");
    std::vector<bool> seen(static_cast<size_t>(nd), false);
    Shape out_shape(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) {
        int d = dims[static_cast<size_t>(i)];
        if (d < 0 || d >= nd || seen[static_cast<size_t>(d)]) throw DimensionError("permute: bad axis list");
        seen[static_cast<size_t>(d)] = true;
        out_shape[static_cast<size_t>(i)] = a.dim(d);
    }
    // strides of the input
    std::vector<int64_t> in_stride(static_cast<size_t>(nd), 1);
    for (int i = nd - 2; i >= 0; --i)
        in_stride[static_cast<size_t>(i)] = in_stride[static_cast<size_t>(i + 1)] * a.dim(i + 1);
    std::vector<int64_t> src_stride(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) src_stride[static_cast<size_t>(i)] = in_stride[static_cast<size_t>(dims[static_cast<size_t>(i)])];

    const size_t n = a.values().size();
    std::vector<float> out(n);
    const float* src = a.values().data();
    std::vector<int64_t> coord(static_cast<size_t>(nd), 0);
    for (size_t o = 0; o < n; ++o) {
        int64_t off = 0;
        for (int i = 0; i < nd; ++i) off += coord[static_cast<size_t>(i)] * src_stride[static_cast<size_t>(i)];
        out[o] = src[off];
        for (int i = nd - 1; i >= 0; --i) {
            if (++coord[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
            coord[static_cast<size_t>(i)] = 0;
        }
    }
    Tensor c = make_tensor(out_shape, std::move(out));
    auto ia = a.impl(), ic = c.impl();
    record_op("permute", {a}, c, [ia, ic, out_shape, src_stride, nd, n] {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        std::vector<int64_t> coord(static_cast<size_t>(nd), 0);
        for (size_t o = 0; o < n; ++o) {
            int64_t off = 0;
            for (int i = 0; i < nd; ++i) off += coord[static_cast<size_t>(i)] * src_stride[static_cast<size_t>(i)];
            ia->grad[static_cast<size_t>(off)] += ic->grad[o];
            for (int i = nd - 1; i >= 0; --i) {
                if (++coord[static_cast<size_t>(i)] < out_shape[static_cast<size_t>(i)]) break;
                coord[static_cast<size_t>(i)] = 0;
            }
        }
    });
    return c;
}

Tensor concat0(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat0: no inputs");
    Shape tail = parts[0].shape();
    int64_t rows = 0;
    for (const auto& p : parts) {
        Shape s = p.shape();
        rows += s[0];
        s[0] = tail[0];
        if (s != tail) throw DimensionError("concat0: mismatched part shapes");
    }
    Shape out_shape = tail;
    out_shape[0] = rows;
    std::vector<float> out;
    out.reserve(static_cast<size_t>(shape_numel(out_shape)));
    for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
    Tensor c = make_tensor(std::move(out_shape), std::move(out));
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    auto ic = c.impl();
    record_op("concat0", parts, c, [impls, ic] {
        size_t off = 0;
        for (const auto& in : impls) {
            const size_t n = in->data.size();
            accumulate_grad(in, ic->grad.data() + off, n);
            off += n;
        }
    });
    return c;
}

std::vector<Tensor> split0(const Tensor& a, int64_t parts) {
    if (parts <= 0 || a.dim(0) % parts != 0)
        throw DimensionError("split0: dim 0 = " + std::to_string(a.dim(0)) + " not divisible into " +
                             std::to_string(parts) + " parts");
    Shape part_shape = a.shape();
    part_shape[0] = a.dim(0) / parts;
    const size_t part_n = static_cast<size_t>(shape_numel(part_shape));
    std::vector<Tensor> out;
    out.reserve(static_cast<size_t>(parts));
    for (int64_t p = 0; p < parts; ++p) {
        std::vector<float> buf(a.values().begin() + static_cast<int64_t>(part_n) * p,
                               a.values().begin() + static_cast<int64_t>(part_n) * (p + 1));
        Tensor t = make_tensor(part_shape, std::move(buf));
        auto ia = a.impl(), it = t.impl();
        const size_t off = part_n * static_cast<size_t>(p);
        record_op("split0", {a}, t, [ia, it, off, part_n] {
            if (!ia->requires_grad) return;
            ia->ensure_grad();
            for (size_t i = 0; i < part_n; ++i) ia->grad[off + i] += it->grad[i];
        });
        out.push_back(std::move(t));
    }
    return out;
}

namespace {

struct MatmulPlan {
    int64_t m, k, n;
    int64_t batches;                 // flat output batch count
    std::vector<int64_t> a_off, b_off; // per-batch element offsets
    Shape out_shape;
};

MatmulPlan plan_matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() < 2)
        throw DimensionError("matmul: operands must have rank >= 2, got " + shape_str(a.shape()) +
                             " and " + shape_str(b.shape()));
    MatmulPlan p;
    p.m = a.dim(a.ndim() - 2);
    p.k = a.dim(a.ndim() - 1);
    int64_t kb = b.dim(b.ndim() - 2);
    p.n = b.dim(b.ndim() - 1);
    if (p.k != kb)
        throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));

    const int ba = a.ndim() - 2, bb = b.ndim() - 2;
    const int nb = std::max(ba, bb);
    Shape batch(static_cast<size_t>(nb), 1);
    for (int i = 0; i < nb; ++i) {
        int64_t da = i >= nb - ba ? a.dim(i - (nb - ba)) : 1;
        int64_t db = i >= nb - bb ? b.dim(i - (nb - bb)) : 1;
        if (da != db && da != 1 && db != 1)
            throw DimensionError("matmul: batch dims not broadcastable, " + shape_str(a.shape()) +
                                 " x " + shape_str(b.shape()));
        batch[static_cast<size_t>(i)] = std::max(da, db);
    }
    p.out_shape = batch;
    p.out_shape.push_back(p.m);
    p.out_shape.push_back(p.n);

    // per-dim strides in units of one matrix, 0 where broadcast
    std::vector<int64_t> sa(static_cast<size_t>(nb), 0), sb(static_cast<size_t>(nb), 0);
    int64_t acc = 1;
    for (int i = ba - 1; i >= 0; --i) {
        sa[static_cast<size_t>(i + nb - ba)] = a.dim(i) == 1 ? 0 : acc;
        acc *= a.dim(i);
    }
    acc = 1;
    for (int i = bb - 1; i >= 0; --i) {
        sb[static_cast<size_t>(i + nb - bb)] = b.dim(i) == 1 ? 0 : acc;
        acc *= b.dim(i);
    }
    p.batches = 1;
    for (int64_t d : batch) p.batches *= d;
    p.a_off.resize(static_cast<size_t>(p.batches));
    p.b_off.resize(static_cast<size_t>(p.batches));
    std::vector<int64_t> coord(static_cast<size_t>(nb), 0);
    const int64_t amat = p.m * p.k, bmat = p.k * p.n;
    for (int64_t o = 0; o < p.batches; ++o) {
        int64_t oa = 0, ob = 0;
        for (int i = 0; i < nb; ++i) {
            oa += coord[static_cast<size_t>(i)] * sa[static_cast<size_t>(i)];
            ob += coord[static_cast<size_t>(i)] * sb[static_cast<size_t>(i)];
        }
        p.a_off[static_cast<size_t>(o)] = oa * amat;
        p.b_off[static_cast<size_t>(o)] = ob * bmat;
        for (int i = nb - 1; i >= 0; --i) {
            if (++coord[static_cast<size_t>(i)] < batch[static_cast<size_t>(i)]) break;
            coord[static_cast<size_t>(i)] = 0;
        }
    }
    return p;
}

} // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
    MatmulPlan p = plan_matmul(a, b);
    std::vector<float> out(static_cast<size_t>(p.batches * p.m * p.n), 0.0f);
    const float* pa = a.values().data();
    const float* pb = b.values().data();
    const int64_t m = p.m, k = p.k, n = p.n;
    for (int64_t bi = 0; bi < p.batches; ++bi) {
        const float* A = pa + p.a_off[static_cast<size_t>(bi)];
        const float* B = pb + p.b_off[static_cast<size_t>(bi)];
        float* C = out.data() + bi * m * n;
        for (int64_t i = 0; i < m; ++i) {
            float* crow = C + i * n;
            for (int64_t kk = 0; kk < k; ++kk) {
                const float av = A[i * k + kk];
                if (av == 0.0f) continue; // spike sparsity; adds nothing, bit-exact
                const float* brow = B + kk * n;
                for (int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    }
    Tensor c = make_tensor(p.out_shape, std::move(out));
    auto ia = a.impl(), ib = b.impl(), ic = c.impl();
    record_op("matmul", {a, b}, c, [ia, ib, ic, p] {
        const int64_t m = p.m, k = p.k, n = p.n;
        const float* pa = ia->data.data();
        const float* pb = ib->data.data();
        const float* dc = ic->grad.data();
        if (ia->requires_grad) {
            ia->ensure_grad();
            for (int64_t bi = 0; bi < p.batches; ++bi) {
                float* dA = ia->grad.data() + p.a_off[static_cast<size_t>(bi)];
                const float* B = pb + p.b_off[static_cast<size_t>(bi)];
                const float* dC = dc + bi * m * n;
                for (int64_t i = 0; i < m; ++i)
                    for (int64_t kk = 0; kk < k; ++kk) {
                        float s = 0.0f;
                        for (int64_t j = 0; j < n; ++j) s += dC[i * n + j] * B[kk * n + j];
                        dA[i * k + kk] += s;
                    }
            }
        }
        if (ib->requires_grad) {
            ib->ensure_grad();
            for (int64_t bi = 0; bi < p.batches; ++bi) {
                const float* A = pa + p.a_off[static_cast<size_t>(bi)];
                float* dB = ib->grad.data() + p.b_off[static_cast<size_t>(bi)];
                const float* dC = dc + bi * m * n;
                for (int64_t kk = 0; kk < k; ++kk)
                    for (int64_t i = 0; i < m; ++i) {
                        const float av = A[i * k + kk];
                        if (av == 0.0f) continue;
                        for (int64_t j = 0; j < n; ++j) dB[kk * n + j] += av * dC[i * n + j];
                    }
            }
        }
    });
    return c;
}

Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding) {
    if (x.ndim() != 4 || w.ndim() != 4)
        throw DimensionError("conv2d: expected 4-d input and kernel, got " + shape_str(x.shape()) +
                             " and " + shape_str(w.shape()));
    if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
    if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
    const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != Cin)
        throw DimensionError("conv2d: kernel expects " + std::to_string(w.dim(1)) + " channels, input has " +
                             std::to_string(Cin));
    if (kh > H + 2 * padding || kw > W + 2 * padding)
        throw ConfigError("conv2d: kernel exceeds padded input extent");
    if ((H + 2 * padding - kh) % stride != 0 || (W + 2 * padding - kw) % stride != 0)
        throw ConfigError("conv2d: non-integral output size for input " + shape_str(x.shape()) +
                          ", kernel " + shape_str(w.shape()) + ", stride " + std::to_string(stride) +
                          ", padding " + std::to_string(padding));
    const int64_t Ho = (H + 2 * padding - kh) / stride + 1;
    const int64_t Wo = (W + 2 * padding - kw) / stride + 1;

    // valid output ranges per kernel tap, so the inner loops are branch-free;
    // captured by value because the backward closure outlives this frame
    const auto oh_range = [=](int64_t r, int64_t& lo, int64_t& hi) {
        lo = std::max<int64_t>(0, (padding - r + stride - 1) / stride);
        hi = std::min(Ho - 1, (H - 1 + padding - r) / stride);
    };
    const auto ow_range = [=](int64_t s, int64_t& lo, int64_t& hi) {
        lo = std::max<int64_t>(0, (padding - s + stride - 1) / stride);
        hi = std::min(Wo - 1, (W - 1 + padding - s) / stride);
    };

    std::vector<float> out(static_cast<size_t>(B * Cout * Ho * Wo), 0.0f);
    const float* px = x.values().data();
    const float* pw = w.values().data();
    for (int64_t n = 0; n < B; ++n) {
        for (int64_t co = 0; co < Cout; ++co) {
            float* oplane = out.data() + (n * Cout + co) * Ho * Wo;
            for (int64_t ci = 0; ci < Cin; ++ci) {
                const float* xplane = px + (n * Cin + ci) * H * W;
                const float* wk = pw + (co * Cin + ci) * kh * kw;
                for (int64_t r = 0; r < kh; ++r) {
                    int64_t oh_lo, oh_hi;
                    oh_range(r, oh_lo, oh_hi);
                    for (int64_t s = 0; s < kw; ++s) {
                        const float wv = wk[r * kw + s];
                        if (wv == 0.0f) continue;
                        int64_t ow_lo, ow_hi;
                        ow_range(s, ow_lo, ow_hi);
                        for (int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                            const float* xrow = xplane + (oh * stride - padding + r) * W - padding + s;
                            float* orow = oplane + oh * Wo;
                            if (stride == 1) {
                                for (int64_t ow = ow_lo; ow <= ow_hi; ++ow) orow[ow] += wv * xrow[ow];
                            } else {
                                for (int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                                    orow[ow] += wv * xrow[ow * stride];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor c = make_tensor({B, Cout, Ho, Wo}, std::move(out));
    auto ix = x.impl(), iw = w.impl(), ic = c.impl();
    record_op("conv2d", {x, w}, c, [ix, iw, ic, B, Cin, Cout, H, W, Ho, Wo, kh, kw, stride, padding,
                                    oh_range, ow_range] {
        const float* px = ix->data.data();
        const float* pw = iw->data.data();
        const float* dy = ic->grad.data();
        if (ix->requires_grad) {
            ix->ensure_grad();
            float* dx = ix->grad.data();
            for (int64_t n = 0; n < B; ++n)
                for (int64_t co = 0; co < Cout; ++co) {
                    const float* dplane = dy + (n * Cout + co) * Ho * Wo;
                    for (int64_t ci = 0; ci < Cin; ++ci) {
                        float* dxplane = dx + (n * Cin + ci) * H * W;
                        const float* wk = pw + (co * Cin + ci) * kh * kw;
                        for (int64_t r = 0; r < kh; ++r) {
                            int64_t oh_lo, oh_hi;
                            oh_range(r, oh_lo, oh_hi);
                            for (int64_t s = 0; s < kw; ++s) {
                                const float wv = wk[r * kw + s];
                                if (wv == 0.0f) continue;
                                int64_t ow_lo, ow_hi;
                                ow_range(s, ow_lo, ow_hi);
                                for (int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                                    float* dxrow = dxplane + (oh * stride - padding + r) * W - padding + s;
                                    const float* drow = dplane + oh * Wo;
                                    if (stride == 1) {
                                        for (int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                                            dxrow[ow] += wv * drow[ow];
                                    } else {
                                        for (int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                                            dxrow[ow * stride] += wv * drow[ow];
                                    }
                                }
                            }
                        }
                    }
                }
        }
        if (iw->requires_grad) {
            iw->ensure_grad();
            float* dw = iw->grad.data();
            for (int64_t n = 0; n < B; ++n)
                for (int64_t co = 0; co < Cout; ++co) {
                    const float* dplane = dy + (n * Cout + co) * Ho * Wo;
                    for (int64_t ci = 0; ci < Cin; ++ci) {
                        const float* xplane = px + (n * Cin + ci) * H * W;
                        float* dwk = dw + (co * Cin + ci) * kh * kw;
                        for (int64_t r = 0; r < kh; ++r) {
                            int64_t oh_lo, oh_hi;
                            oh_range(r, oh_lo, oh_hi);
                            for (int64_t s = 0; s < kw; ++s) {
                                int64_t ow_lo, ow_hi;
                                ow_range(s, ow_lo, ow_hi);
                                float acc = 0.0f;
                                for (int64_t oh = oh_lo; oh <= oh_hi; ++oh) {
                                    const float* xrow =
                                        xplane + (oh * stride - padding + r) * W - padding + s;
                                    const float* drow = dplane + oh * Wo;
                                    if (stride == 1) {
                                        for (int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                                            acc += xrow[ow] * drow[ow];
                                    } else {
                                        for (int64_t ow = ow_lo; ow <= ow_hi; ++ow)
                                            acc += xrow[ow * stride] * drow[ow];
                                    }
                                }
                                dwk[r * kw + s] += acc;
                            }
                        }
                    }
                }
        }
    });
    return c;
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                 bool training, float momentum, float eps) {
    if (x.ndim() < 2) throw DimensionError("batchnorm: input rank must be >= 2");
    const int64_t N = x.dim(0), C = x.dim(1);
    const int64_t S = x.numel() / (N * C); // spatial extent per (n, c)
    if (gamma.numel() != C || beta.numel() != C)
        throw DimensionError("batchnorm: scale/shift length " + std::to_string(gamma.numel()) + "/" +
                             std::to_string(beta.numel()) + " vs " + std::to_string(C) + " channels");
    if (state.running_mean.numel() != C || state.running_var.numel() != C)
        throw DimensionError("batchnorm: running stats length mismatch");

    const float* px = x.values().data();
    const float* pg = gamma.values().data();
    const float* pb = beta.values().data();
    std::vector<float> mean(static_cast<size_t>(C)), inv_std(static_cast<size_t>(C));

    if (training) {
        const double count = static_cast<double>(N * S);
        float* rm = state.running_mean.values_mut().data();
        float* rv = state.running_var.values_mut().data();
        for (int64_t c = 0; c < C; ++c) {
            double s = 0.0;
            for (int64_t n = 0; n < N; ++n) {
                const float* p = px + (n * C + c) * S;
                for (int64_t i = 0; i < S; ++i) s += p[i];
            }
            const double mu = s / count;
            double sq = 0.0;
            for (int64_t n = 0; n < N; ++n) {
                const float* p = px + (n * C + c) * S;
                for (int64_t i = 0; i < S; ++i) {
                    const double d = p[i] - mu;
                    sq += d * d;
                }
            }
            const double var = sq / count; // biased, used for normalization
            mean[static_cast<size_t>(c)] = static_cast<float>(mu);
            inv_std[static_cast<size_t>(c)] = static_cast<float>(1.0 / std::sqrt(var + eps));
            const double unbiased = count > 1.0 ? sq / (count - 1.0) : var;
            rm[c] = (1.0f - momentum) * rm[c] + momentum * static_cast<float>(mu);
            rv[c] = (1.0f - momentum) * rv[c] + momentum * static_cast<float>(unbiased);
        }
        state.batches++;
    } else {
        const float* rm = state.running_mean.values().data();
        const float* rv = state.running_var.values().data();
        for (int64_t c = 0; c < C; ++c) {
            mean[static_cast<size_t>(c)] = rm[c];
            inv_std[static_cast<size_t>(c)] = 1.0f / std::sqrt(rv[c] + eps);
        }
    }

    std::vector<float> out(static_cast<size_t>(x.numel()));
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const float* p = px + (n * C + c) * S;
            float* o = out.data() + (n * C + c) * S;
            const float mu = mean[static_cast<size_t>(c)];
            const float is = inv_std[static_cast<size_t>(c)];
            const float g = pg[c], b = pb[c];
            for (int64_t i = 0; i < S; ++i) o[i] = (p[i] - mu) * is * g + b;
        }
    Tensor y = make_tensor(x.shape(), std::move(out));
    auto ix = x.impl(), ig = gamma.impl(), ib = beta.impl(), iy = y.impl();
    record_op("batchnorm", {x, gamma, beta}, y, [ix, ig, ib, iy, mean, inv_std, N, C, S, training] {
        const float* px = ix->data.data();
        const float* pg = ig->data.data();
        const float* dy = iy->grad.data();
        const double count = static_cast<double>(N * S);
        for (int64_t c = 0; c < C; ++c) {
            const float mu = mean[static_cast<size_t>(c)];
            const float is = inv_std[static_cast<size_t>(c)];
            double dsum = 0.0, dxhat_sum = 0.0;
            for (int64_t n = 0; n < N; ++n) {
                const float* p = px + (n * C + c) * S;
                const float* d = dy + (n * C + c) * S;
                for (int64_t i = 0; i < S; ++i) {
                    dsum += d[i];
                    dxhat_sum += static_cast<double>(d[i]) * (p[i] - mu) * is;
                }
            }
            if (ig->requires_grad) {
                ig->ensure_grad();
                ig->grad[static_cast<size_t>(c)] += static_cast<float>(dxhat_sum);
            }
            if (ib->requires_grad) {
                ib->ensure_grad();
                ib->grad[static_cast<size_t>(c)] += static_cast<float>(dsum);
            }
            if (ix->requires_grad) {
                ix->ensure_grad();
                const float g = pg[c];
                if (training) {
                    const float mean_dy = static_cast<float>(dsum / count);
                    const float mean_dxhat = static_cast<float>(dxhat_sum / count);
                    for (int64_t n = 0; n < N; ++n) {
                        const float* p = px + (n * C + c) * S;
                        const float* d = dy + (n * C + c) * S;
                        float* dx = ix->grad.data() + (n * C + c) * S;
                        for (int64_t i = 0; i < S; ++i) {
                            const float xhat = (p[i] - mu) * is;
                            dx[i] += g * is * (d[i] - mean_dy - xhat * mean_dxhat);
                        }
                    }
                } else {
                    for (int64_t n = 0; n < N; ++n) {
                        const float* d = dy + (n * C + c) * S;
                        float* dx = ix->grad.data() + (n * C + c) * S;
                        for (int64_t i = 0; i < S; ++i) dx[i] += g * is * d[i];
                    }
                }
            }
        }
    });
    return y;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
    if (logits.ndim() != 2)
        throw DimensionError("cross_entropy: logits must be [batch, classes], got " + shape_str(logits.shape()));
    const int64_t B = logits.dim(0), K = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != B)
        throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch " +
                             std::to_string(B));
    for (int l : labels)
        if (l < 0 || l >= K)
            throw IndexError("cross_entropy: label " + std::to_string(l) + " outside [0, " +
                             std::to_string(K) + ")");
    const float* pl = logits.values().data();
    std::vector<float> softmax(static_cast<size_t>(B * K));
    double loss = 0.0;
    for (int64_t i = 0; i < B; ++i) {
        const float* row = pl + i * K;
        float mx = row[0];
        for (int64_t j = 1; j < K; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < K; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
        const double log_denom = std::log(denom);
        for (int64_t j = 0; j < K; ++j)
            softmax[static_cast<size_t>(i * K + j)] =
                static_cast<float>(std::exp(static_cast<double>(row[j] - mx)) / denom);
        loss += log_denom - static_cast<double>(row[labels[static_cast<size_t>(i)]] - mx);
    }
    Tensor out = Tensor::scalar(static_cast<float>(loss / static_cast<double>(B)));
    auto il = logits.impl(), io = out.impl();
    record_op("cross_entropy", {logits}, out, [il, io, softmax, labels, B, K] {
        if (!il->requires_grad) return;
        il->ensure_grad();
        const float g = io->grad[0] / static_cast<float>(B);
        for (int64_t i = 0; i < B; ++i)
            for (int64_t j = 0; j < K; ++j) {
                float p = softmax[static_cast<size_t>(i * K + j)];
                if (j == labels[static_cast<size_t>(i)]) p -= 1.0f;
                il->grad[static_cast<size_t>(i * K + j)] += g * p;
            }
    });
    return out;
}

Tensor sum_all(const Tensor& a) {
    double s = 0.0;
    for (float v : a.values()) s += v;
    Tensor out = Tensor::scalar(static_cast<float>(s));
    auto ia = a.impl(), io = out.impl();
    const size_t n = a.values().size();
    record_op("sum_all", {a}, out, [ia, io, n] {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        const float g = io->grad[0];
        for (size_t i = 0; i < n; ++i) ia->grad[i] += g;
    });
    return out;
}

Tensor mean_all(const Tensor& a) {
    double s = 0.0;
    for (float v : a.values()) s += v;
    const size_t n = a.values().size();
    Tensor out = Tensor::scalar(static_cast<float>(s / static_cast<double>(n)));
    auto ia = a.impl(), io = out.impl();
    record_op("mean_all", {a}, out, [ia, io, n] {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        const float g = io->grad[0] / static_cast<float>(n);
        for (size_t i = 0; i < n; ++i) ia->grad[i] += g;
    });
    return out;
}

Tensor mean_spatial(const Tensor& a) {
    if (a.ndim() != 4) throw DimensionError("mean_spatial: expected [N,C,H,W], got " + shape_str(a.shape()));
    const int64_t N = a.dim(0), C = a.dim(1), S = a.dim(2) * a.dim(3);
    std::vector<float> out(static_cast<size_t>(N * C));
    const float* p = a.values().data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            double s = 0.0;
            const float* q = p + (n * C + c) * S;
            for (int64_t i = 0; i < S; ++i) s += q[i];
            out[static_cast<size_t>(n * C + c)] = static_cast<float>(s / static_cast<double>(S));
        }
    Tensor y = make_tensor({N, C}, std::move(out));
    auto ia = a.impl(), iy = y.impl();
    record_op("mean_spatial", {a}, y, [ia, iy, N, C, S] {
        if (!ia->requires_grad) return;
        ia->ensure_grad();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c) {
                const float g = iy->grad[static_cast<size_t>(n * C + c)] / static_cast<float>(S);
                float* dx = ia->grad.data() + (n * C + c) * S;
                for (int64_t i = 0; i < S; ++i) dx[i] += g;
            }
    });
    return y;
}

Tensor spike_threshold(const Tensor& h, float v_threshold, float gamma) {
    const size_t n = h.values().size();
    std::vector<float> out(n);
    const float* p = h.values().data();
    for (size_t i = 0; i < n; ++i) out[i] = p[i] > v_threshold ? v_threshold : 0.0f;
    Tensor y = make_tensor(h.shape(), std::move(out));
    auto ih = h.impl(), iy = y.impl();
    record_op("spike_threshold", {h}, y, [ih, iy, n, v_threshold, gamma] {
        if (!ih->requires_grad) return;
        ih->ensure_grad();
        const float k = gamma / v_threshold;
        for (size_t i = 0; i < n; ++i) {
            const float t = 1.0f - std::fabs(ih->data[i] / v_threshold - 1.0f);
            if (t > 0.0f) ih->grad[i] += iy->grad[i] * k * t;
        }
    });
    return y;
}

Tensor mask_threshold(const Tensor& scores) {
    const size_t n = scores.values().size();
    std::vector<float> out(n);
    const float* p = scores.values().data();
    for (size_t i = 0; i < n; ++i) out[i] = p[i] >= 1.0f ? 1.0f : 0.0f;
    Tensor y = make_tensor(scores.shape(), std::move(out));
    auto is = scores.impl(), iy = y.impl();
    record_op("mask_threshold", {scores}, y, [is, iy, n] {
        if (!is->requires_grad) return;
        is->ensure_grad();
        for (size_t i = 0; i < n; ++i) {
            const float s = is->data[i];
            if (s > 0.0f && s < 2.0f) is->grad[i] += iy->grad[i];
        }
    });
    return y;
}

Tensor suffix_sum(const Tensor& params) {
    const size_t n = params.values().size();
    std::vector<float> out(n);
    const float* p = params.values().data();
    float acc = 0.0f;
    for (size_t i = n; i-- > 0;) {
        acc += p[i];
        out[i] = acc;
    }
    Tensor y = make_tensor(params.shape(), std::move(out));
    auto ip = params.impl(), iy = y.impl();
    record_op("suffix_sum", {params}, y, [ip, iy, n] {
        if (!ip->requires_grad) return;
        ip->ensure_grad();
        float acc = 0.0f;
        for (size_t i = 0; i < n; ++i) {
            acc += iy->grad[i];
            ip->grad[i] += acc;
        }
    });
    return y;
}

Tensor scale_by_entry(const Tensor& y, const Tensor& gate, int64_t index) {
    if (index < 0 || index >= gate.numel())
        throw IndexError("scale_by_entry: index " + std::to_string(index) + " outside gate of length " +
                         std::to_string(gate.numel()));
    const float g = gate.values()[static_cast<size_t>(index)];
    const size_t n = y.values().size();
    std::vector<float> out(n);
    const float* p = y.values().data();
    for (size_t i = 0; i < n; ++i) out[i] = p[i] * g;
    Tensor c = make_tensor(y.shape(), std::move(out));
    auto iy = y.impl(), ig = gate.impl(), ic = c.impl();
    record_op("scale_by_entry", {y, gate}, c, [iy, ig, ic, n, g, index] {
        if (iy->requires_grad) {
            iy->ensure_grad();
            for (size_t i = 0; i < n; ++i) iy->grad[i] += ic->grad[i] * g;
        }
        if (ig->requires_grad) {
            ig->ensure_grad();
            double s = 0.0;
            for (size_t i = 0; i < n; ++i) s += static_cast<double>(ic->grad[i]) * iy->data[i];
            ig->grad[static_cast<size_t>(index)] += static_cast<float>(s);
        }
    });
    return c;
}

std::vector<int> argmax_rows(const Tensor& logits) {
    if (logits.ndim() != 2) throw DimensionError("argmax_rows: expected a 2-d tensor");
    const int64_t B = logits.dim(0), K = logits.dim(1);
    const float* p = logits.values().data();
    std::vector<int> out(static_cast<size_t>(B));
    for (int64_t i = 0; i < B; ++i) {
        int best = 0;
        for (int64_t j = 1; j < K; ++j)
            if (p[i * K + j] > p[i * K + best]) best = static_cast<int>(j);
        out[static_cast<size_t>(i)] = best;
    }
    return out;
}

} // namespace dts
