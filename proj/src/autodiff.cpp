#include "fido/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace fido::ag {

const char* op_name(Op op) {
    switch (op) {
        case Op::leaf: return "leaf";
        case Op::add: return "add";
        case Op::mul: return "mul";
        case Op::matmul: return "matmul";
        case Op::conv2d: return "conv2d";
        case Op::relu: return "relu";
        case Op::sigmoid: return "sigmoid";
        case Op::log: return "log";
        case Op::exp: return "exp";
        case Op::abs: return "abs";
        case Op::square: return "square";
        case Op::clamp: return "clamp";
        case Op::sum: return "sum";
        case Op::mean: return "mean";
        case Op::max_pool: return "max_pool";
        case Op::avg_pool: return "avg_pool";
        case Op::softmax: return "softmax";
        case Op::mix: return "mix";
        case Op::upsample: return "bilinear_upsample";
        case Op::reshape: return "reshape";
        case Op::tv: return "tv_penalty";
    }
    return "?";
}

namespace {

[[noreturn]] void shape_fail(Op op, const std::string& detail) {
    throw ShapeError(std::string(op_name(op)) + ": " + detail);
}

}  // namespace

Node* Graph::make(Op op, Tensor value, std::vector<Node*> inputs) {
    value.check_finite(op_name(op));
    nodes_.emplace_back();
    Node& n = nodes_.back();
    n.op = op;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    return &n;
}

Node* Graph::leaf(Tensor v) { return make(Op::leaf, std::move(v), {}); }

// ---------------------------------------------------------------------------
// elementwise binary ops with scalar broadcast

Node* Graph::add(Node* a, Node* b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    bool a_scalar = av.numel() == 1;
    bool b_scalar = bv.numel() == 1;
    if (!a_scalar && !b_scalar && !av.same_shape(bv))
        shape_fail(Op::add, "incompatible shapes " + av.shape_str() + " and " + bv.shape_str());

    const Tensor& big = b_scalar ? av : bv;
    Tensor out(big.shape());
    for (long long i = 0; i < big.numel(); ++i)
        out[i] = av[a_scalar ? 0 : i] + bv[b_scalar ? 0 : i];

    Node* n = make(Op::add, std::move(out), {a, b});
    n->backward_fn = [n, a, b, a_scalar, b_scalar] {
        for (long long i = 0; i < n->grad.numel(); ++i) {
            a->grad[a_scalar ? 0 : i] += n->grad[i];
            b->grad[b_scalar ? 0 : i] += n->grad[i];
        }
    };
    return n;
}

Node* Graph::mul(Node* a, Node* b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    bool a_scalar = av.numel() == 1;
    bool b_scalar = bv.numel() == 1;
    if (!a_scalar && !b_scalar && !av.same_shape(bv))
        shape_fail(Op::mul, "incompatible shapes " + av.shape_str() + " and " + bv.shape_str());

    const Tensor& big = b_scalar ? av : bv;
    Tensor out(big.shape());
    for (long long i = 0; i < big.numel(); ++i)
        out[i] = av[a_scalar ? 0 : i] * bv[b_scalar ? 0 : i];

    Node* n = make(Op::mul, std::move(out), {a, b});
    n->backward_fn = [n, a, b, a_scalar, b_scalar] {
        for (long long i = 0; i < n->grad.numel(); ++i) {
            double g = n->grad[i];
            a->grad[a_scalar ? 0 : i] += g * b->value[b_scalar ? 0 : i];
            b->grad[b_scalar ? 0 : i] += g * a->value[a_scalar ? 0 : i];
        }
    };
    return n;
}

Node* Graph::scale(Node* x, double s) { return mul(x, constant(Tensor::scalar(s))); }
Node* Graph::shift(Node* x, double s) { return add(x, constant(Tensor::scalar(s))); }

// ---------------------------------------------------------------------------
// linear algebra

Node* Graph::matmul(Node* a, Node* b) {
    const Tensor& av = a->value;
    const Tensor& bv = b->value;
    if (av.ndim() != 2 || bv.ndim() != 2 || av.dim(1) != bv.dim(0))
        shape_fail(Op::matmul, "need (m,k) x (k,n), got " + av.shape_str() + " and " + bv.shape_str());
    int m = av.dim(0), k = av.dim(1), p = bv.dim(1);

    Tensor out({m, p});
    for (int i = 0; i < m; ++i)
        for (int l = 0; l < k; ++l) {
            double aval = av.at(i, l);
            for (int j = 0; j < p; ++j) out.at(i, j) += aval * bv.at(l, j);
        }

    Node* n = make(Op::matmul, std::move(out), {a, b});
    n->backward_fn = [n, a, b, m, k, p] {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < p; ++j) {
                double g = n->grad.at(i, j);
                for (int l = 0; l < k; ++l) {
                    a->grad.at(i, l) += g * b->value.at(l, j);
                    b->grad.at(l, j) += g * a->value.at(i, l);
                }
            }
    };
    return n;
}

Node* Graph::conv2d(Node* x, Node* kernel, Node* bias, int stride) {
    const Tensor& xv = x->value;
    const Tensor& kv = kernel->value;
    if (xv.ndim() != 3 || kv.ndim() != 4)
        shape_fail(Op::conv2d, "need image (C,H,W) and kernel (OC,C,KH,KW), got " + xv.shape_str() +
                                   " and " + kv.shape_str());
    if (kv.dim(1) != xv.dim(0))
        shape_fail(Op::conv2d, "kernel expects " + std::to_string(kv.dim(1)) + " channels, image has " +
                                   std::to_string(xv.dim(0)));
    if (stride < 1) shape_fail(Op::conv2d, "stride must be >= 1");
    int C = xv.dim(0), H = xv.dim(1), W = xv.dim(2);
    int OC = kv.dim(0), KH = kv.dim(2), KW = kv.dim(3);
    if (H < KH || W < KW)
        shape_fail(Op::conv2d, "kernel " + kv.shape_str() + " larger than image " + xv.shape_str());
    if (bias && (bias->value.ndim() != 1 || bias->value.dim(0) != OC))
        shape_fail(Op::conv2d, "bias shape " + bias->value.shape_str() + " does not match " +
                                   std::to_string(OC) + " output channels");
    int OH = (H - KH) / stride + 1;
    int OW = (W - KW) / stride + 1;

    auto kidx = [C, KH, KW](int oc, int c, int ki, int kj) {
        return ((static_cast<long long>(oc) * C + c) * KH + ki) * KW + kj;
    };

    Tensor out({OC, OH, OW});
    for (int oc = 0; oc < OC; ++oc) {
        double b0 = bias ? bias->value[oc] : 0.0;
        for (int oi = 0; oi < OH; ++oi)
            for (int oj = 0; oj < OW; ++oj) {
                double acc = b0;
                for (int c = 0; c < C; ++c)
                    for (int ki = 0; ki < KH; ++ki)
                        for (int kj = 0; kj < KW; ++kj)
                            acc += xv.at(c, oi * stride + ki, oj * stride + kj) * kv[kidx(oc, c, ki, kj)];
                out.at(oc, oi, oj) = acc;
            }
    }

    Node* n = make(Op::conv2d, std::move(out), bias ? std::vector<Node*>{x, kernel, bias}
                                                    : std::vector<Node*>{x, kernel});
    n->backward_fn = [n, x, kernel, bias, stride, C, OC, KH, KW, kidx] {
        const Tensor& xv2 = x->value;
        const Tensor& kv2 = kernel->value;
        int OH2 = n->value.dim(1), OW2 = n->value.dim(2);
        for (int oc = 0; oc < OC; ++oc)
            for (int oi = 0; oi < OH2; ++oi)
                for (int oj = 0; oj < OW2; ++oj) {
                    double g = n->grad.at(oc, oi, oj);
                    if (bias) bias->grad[oc] += g;
                    for (int c = 0; c < C; ++c)
                        for (int ki = 0; ki < KH; ++ki)
                            for (int kj = 0; kj < KW; ++kj) {
                                int ii = oi * stride + ki, jj = oj * stride + kj;
                                x->grad.at(c, ii, jj) += g * kv2[kidx(oc, c, ki, kj)];
                                kernel->grad[kidx(oc, c, ki, kj)] += g * xv2.at(c, ii, jj);
                            }
                }
    };
    return n;
}

// ---------------------------------------------------------------------------
// elementwise unary ops

namespace {

template <typename Fwd>
Tensor map_tensor(const Tensor& x, Fwd f) {
    Tensor out(x.shape());
    for (long long i = 0; i < x.numel(); ++i) out[i] = f(x[i]);
    return out;
}

}  // namespace

Node* Graph::relu(Node* x) {
    Node* n = make(Op::relu, map_tensor(x->value, [](double v) { return v > 0 ? v : 0.0; }), {x});
    n->backward_fn = [n, x] {
        for (long long i = 0; i < n->grad.numel(); ++i)
            if (x->value[i] > 0) x->grad[i] += n->grad[i];
    };
    return n;
}

Node* Graph::sigmoid(Node* x) {
    Node* n = make(Op::sigmoid, map_tensor(x->value, [](double v) { return 1.0 / (1.0 + std::exp(-v)); }), {x});
    n->backward_fn = [n, x] {
        for (long long i = 0; i < n->grad.numel(); ++i) {
            double y = n->value[i];
            x->grad[i] += n->grad[i] * y * (1.0 - y);
        }
    };
    return n;
}

Node* Graph::log(Node* x) {
    Node* n = make(Op::log, map_tensor(x->value, [](double v) { return std::log(v); }), {x});
    n->backward_fn = [n, x] {
        for (long long i = 0; i < n->grad.numel(); ++i) x->grad[i] += n->grad[i] / x->value[i];
    };
    return n;
}

Node* Graph::exp(Node* x) {
    Node* n = make(Op::exp, map_tensor(x->value, [](double v) { return std::exp(v); }), {x});
    n->backward_fn = [n, x] {
        for (long long i = 0; i < n->grad.numel(); ++i) x->grad[i] += n->grad[i] * n->value[i];
    };
    return n;
}

Node* Graph::abs(Node* x) {
    Node* n = make(Op::abs, map_tensor(x->value, [](double v) { return std::fabs(v); }), {x});
    n->backward_fn = [n, x] {
        for (long long i = 0; i < n->grad.numel(); ++i) {
            double v = x->value[i];
            if (v > 0)
                x->grad[i] += n->grad[i];
            else if (v < 0)
                x->grad[i] -= n->grad[i];
        }
    };
    return n;
}

Node* Graph::square(Node* x) {
    Node* n = make(Op::square, map_tensor(x->value, [](double v) { return v * v; }), {x});
    n->backward_fn = [n, x] {
        for (long long i = 0; i < n->grad.numel(); ++i) x->grad[i] += 2.0 * x->value[i] * n->grad[i];
    };
    return n;
}

Node* Graph::clamp(Node* x, double lo, double hi) {
    if (!(lo <= hi)) shape_fail(Op::clamp, "empty clamp range");
    Node* n = make(Op::clamp,
                   map_tensor(x->value, [lo, hi](double v) { return std::min(std::max(v, lo), hi); }), {x});
    n->backward_fn = [n, x, lo, hi] {
        for (long long i = 0; i < n->grad.numel(); ++i) {
            double v = x->value[i];
            if (v > lo && v < hi) x->grad[i] += n->grad[i];
        }
    };
    return n;
}

// ---------------------------------------------------------------------------
// reductions

Node* Graph::sum(Node* x) {
    Node* n = make(Op::sum, Tensor::scalar(x->value.sum()), {x});
    n->backward_fn = [n, x] {
        double g = n->grad[0];
        for (long long i = 0; i < x->grad.numel(); ++i) x->grad[i] += g;
    };
    return n;
}

Node* Graph::mean(Node* x) {
    double inv = 1.0 / static_cast<double>(x->value.numel());
    Node* n = make(Op::mean, Tensor::scalar(x->value.sum() * inv), {x});
    n->backward_fn = [n, x, inv] {
        double g = n->grad[0] * inv;
        for (long long i = 0; i < x->grad.numel(); ++i) x->grad[i] += g;
    };
    return n;
}

// ---------------------------------------------------------------------------
// pooling

Node* Graph::max_pool(Node* x, int factor) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 3) shape_fail(Op::max_pool, "need (C,H,W), got " + xv.shape_str());
    if (factor < 1 || xv.dim(1) < factor || xv.dim(2) < factor)
        shape_fail(Op::max_pool, "factor " + std::to_string(factor) + " too large for " + xv.shape_str());
    int C = xv.dim(0), OH = xv.dim(1) / factor, OW = xv.dim(2) / factor;

    Tensor out({C, OH, OW});
    auto argmax = std::make_shared<std::vector<long long>>(static_cast<size_t>(C) * OH * OW);
    long long o = 0;
    for (int c = 0; c < C; ++c)
        for (int oi = 0; oi < OH; ++oi)
            for (int oj = 0; oj < OW; ++oj, ++o) {
                double best = -1e300;
                long long best_idx = 0;
                for (int ki = 0; ki < factor; ++ki)
                    for (int kj = 0; kj < factor; ++kj) {
                        int ii = oi * factor + ki, jj = oj * factor + kj;
                        double v = xv.at(c, ii, jj);
                        if (v > best) {  // strict: ties keep the first element
                            best = v;
                            best_idx = (static_cast<long long>(c) * xv.dim(1) + ii) * xv.dim(2) + jj;
                        }
                    }
                out[o] = best;
                (*argmax)[static_cast<size_t>(o)] = best_idx;
            }

    Node* n = make(Op::max_pool, std::move(out), {x});
    n->backward_fn = [n, x, argmax] {
        for (long long i = 0; i < n->grad.numel(); ++i)
            x->grad[(*argmax)[static_cast<size_t>(i)]] += n->grad[i];
    };
    return n;
}

Node* Graph::avg_pool(Node* x, int factor) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 3) shape_fail(Op::avg_pool, "need (C,H,W), got " + xv.shape_str());
    if (factor < 1 || xv.dim(1) < factor || xv.dim(2) < factor)
        shape_fail(Op::avg_pool, "factor " + std::to_string(factor) + " too large for " + xv.shape_str());
    int C = xv.dim(0), OH = xv.dim(1) / factor, OW = xv.dim(2) / factor;
    double inv = 1.0 / (factor * factor);

    Tensor out({C, OH, OW});
    for (int c = 0; c < C; ++c)
        for (int oi = 0; oi < OH; ++oi)
            for (int oj = 0; oj < OW; ++oj) {
                double acc = 0;
                for (int ki = 0; ki < factor; ++ki)
                    for (int kj = 0; kj < factor; ++kj) acc += xv.at(c, oi * factor + ki, oj * factor + kj);
                out.at(c, oi, oj) = acc * inv;
            }

    Node* n = make(Op::avg_pool, std::move(out), {x});
    n->backward_fn = [n, x, factor, inv] {
        int C2 = n->value.dim(0), OH2 = n->value.dim(1), OW2 = n->value.dim(2);
        for (int c = 0; c < C2; ++c)
            for (int oi = 0; oi < OH2; ++oi)
                for (int oj = 0; oj < OW2; ++oj) {
                    double g = n->grad.at(c, oi, oj) * inv;
                    for (int ki = 0; ki < factor; ++ki)
                        for (int kj = 0; kj < factor; ++kj)
                            x->grad.at(c, oi * factor + ki, oj * factor + kj) += g;
                }
    };
    return n;
}

// ---------------------------------------------------------------------------

Node* Graph::softmax(Node* x) {
    const Tensor& xv = x->value;
    double m = xv.max();
    Tensor out(xv.shape());
    double total = 0;
    for (long long i = 0; i < xv.numel(); ++i) {
        out[i] = std::exp(xv[i] - m);
        total += out[i];
    }
    for (long long i = 0; i < out.numel(); ++i) out[i] /= total;

    Node* n = make(Op::softmax, std::move(out), {x});
    n->backward_fn = [n, x] {
        double dot = 0;
        for (long long i = 0; i < n->grad.numel(); ++i) dot += n->grad[i] * n->value[i];
        for (long long i = 0; i < n->grad.numel(); ++i)
            x->grad[i] += n->value[i] * (n->grad[i] - dot);
    };
    return n;
}

Node* Graph::mix(Node* x, Node* xhat, Node* z) {
    const Tensor& xv = x->value;
    const Tensor& hv = xhat->value;
    const Tensor& zv = z->value;
    if (!xv.same_shape(hv))
        shape_fail(Op::mix, "image shapes differ: " + xv.shape_str() + " vs " + hv.shape_str());
    bool shared = false;
    if (zv.same_shape(xv)) {
        shared = false;
    } else if (xv.ndim() == 3 && zv.ndim() == 2 && zv.dim(0) == xv.dim(1) && zv.dim(1) == xv.dim(2)) {
        shared = true;  // one mask value per pixel, shared across channels
    } else {
        shape_fail(Op::mix, "mask shape " + zv.shape_str() + " incompatible with image " + xv.shape_str());
    }
    long long plane = shared ? zv.numel() : 0;

    Tensor out(xv.shape());
    for (long long i = 0; i < xv.numel(); ++i) {
        double zi = zv[shared ? i % plane : i];
        out[i] = zi * xv[i] + (1.0 - zi) * hv[i];
    }

    Node* n = make(Op::mix, std::move(out), {x, xhat, z});
    n->backward_fn = [n, x, xhat, z, shared, plane] {
        for (long long i = 0; i < n->grad.numel(); ++i) {
            long long zi_idx = shared ? i % plane : i;
            double zi = z->value[zi_idx];
            double g = n->grad[i];
            x->grad[i] += g * zi;
            xhat->grad[i] += g * (1.0 - zi);
            z->grad[zi_idx] += g * (x->value[i] - xhat->value[i]);
        }
    };
    return n;
}

namespace {

struct LerpAxis {
    std::vector<int> i0, i1;
    std::vector<double> w1;  // weight on i1; weight on i0 is 1-w1
};

LerpAxis make_axis(int in_n, int out_n) {
    LerpAxis ax;
    ax.i0.resize(static_cast<size_t>(out_n));
    ax.i1.resize(static_cast<size_t>(out_n));
    ax.w1.resize(static_cast<size_t>(out_n));
    double scale = static_cast<double>(in_n) / out_n;
    for (int o = 0; o < out_n; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        src = std::min(std::max(src, 0.0), static_cast<double>(in_n - 1));
        int lo = static_cast<int>(std::floor(src));
        ax.i0[static_cast<size_t>(o)] = lo;
        ax.i1[static_cast<size_t>(o)] = std::min(lo + 1, in_n - 1);
        ax.w1[static_cast<size_t>(o)] = src - lo;
    }
    return ax;
}

}  // namespace

Node* Graph::upsample_bilinear(Node* x, int out_h, int out_w) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 2 && xv.ndim() != 3)
        shape_fail(Op::upsample, "need (H,W) or (C,H,W), got " + xv.shape_str());
    if (out_h < 1 || out_w < 1) shape_fail(Op::upsample, "output size must be positive");
    int C = xv.ndim() == 3 ? xv.dim(0) : 1;
    int H = xv.ndim() == 3 ? xv.dim(1) : xv.dim(0);
    int W = xv.ndim() == 3 ? xv.dim(2) : xv.dim(1);

    auto rows = std::make_shared<LerpAxis>(make_axis(H, out_h));
    auto cols = std::make_shared<LerpAxis>(make_axis(W, out_w));

    Shape out_shape = xv.ndim() == 3 ? Shape{C, out_h, out_w} : Shape{out_h, out_w};
    Tensor out(out_shape);
    for (int c = 0; c < C; ++c) {
        const double* in_plane = xv.data() + static_cast<long long>(c) * H * W;
        double* out_plane = out.data() + static_cast<long long>(c) * out_h * out_w;
        for (int i = 0; i < out_h; ++i) {
            int r0 = rows->i0[static_cast<size_t>(i)], r1 = rows->i1[static_cast<size_t>(i)];
            double wr = rows->w1[static_cast<size_t>(i)];
            for (int j = 0; j < out_w; ++j) {
                int c0 = cols->i0[static_cast<size_t>(j)], c1 = cols->i1[static_cast<size_t>(j)];
                double wc = cols->w1[static_cast<size_t>(j)];
                double top = (1 - wc) * in_plane[r0 * W + c0] + wc * in_plane[r0 * W + c1];
                double bot = (1 - wc) * in_plane[r1 * W + c0] + wc * in_plane[r1 * W + c1];
                out_plane[i * out_w + j] = (1 - wr) * top + wr * bot;
            }
        }
    }

    Node* n = make(Op::upsample, std::move(out), {x});
    n->backward_fn = [n, x, rows, cols, C, H, W, out_h, out_w] {
        for (int c = 0; c < C; ++c) {
            double* in_plane = x->grad.data() + static_cast<long long>(c) * H * W;
            const double* g_plane = n->grad.data() + static_cast<long long>(c) * out_h * out_w;
            for (int i = 0; i < out_h; ++i) {
                int r0 = rows->i0[static_cast<size_t>(i)], r1 = rows->i1[static_cast<size_t>(i)];
                double wr = rows->w1[static_cast<size_t>(i)];
                for (int j = 0; j < out_w; ++j) {
                    int c0 = cols->i0[static_cast<size_t>(j)], c1 = cols->i1[static_cast<size_t>(j)];
                    double wc = cols->w1[static_cast<size_t>(j)];
                    double g = g_plane[i * out_w + j];
                    in_plane[r0 * W + c0] += g * (1 - wr) * (1 - wc);
                    in_plane[r0 * W + c1] += g * (1 - wr) * wc;
                    in_plane[r1 * W + c0] += g * wr * (1 - wc);
                    in_plane[r1 * W + c1] += g * wr * wc;
                }
            }
        }
    };
    return n;
}

Node* Graph::reshape(Node* x, Shape shape) {
    if (shape_numel(shape) != x->value.numel())
        shape_fail(Op::reshape, "cannot reshape " + x->value.shape_str() + " to " + fido::shape_str(shape));
    Tensor out(shape, x->value.vec());
    Node* n = make(Op::reshape, std::move(out), {x});
    n->backward_fn = [n, x] {
        for (long long i = 0; i < n->grad.numel(); ++i) x->grad[i] += n->grad[i];
    };
    return n;
}

Node* Graph::tv2d(Node* x) {
    const Tensor& xv = x->value;
    if (xv.ndim() != 2) shape_fail(Op::tv, "need a 2-D map, got " + xv.shape_str());
    int H = xv.dim(0), W = xv.dim(1);
    long long pairs = static_cast<long long>(H) * (W - 1) + static_cast<long long>(H - 1) * W;

    double acc = 0;
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < W; ++j) {
            if (j + 1 < W) {
                double d = xv.at(i, j) - xv.at(i, j + 1);
                acc += d * d;
            }
            if (i + 1 < H) {
                double d = xv.at(i, j) - xv.at(i + 1, j);
                acc += d * d;
            }
        }
    double value = pairs > 0 ? acc / static_cast<double>(pairs) : 0.0;

    Node* n = make(Op::tv, Tensor::scalar(value), {x});
    n->backward_fn = [n, x, H, W, pairs] {
        if (pairs == 0) return;
        double g = 2.0 * n->grad[0] / static_cast<double>(pairs);
        for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
                if (j + 1 < W) {
                    double d = x->value.at(i, j) - x->value.at(i, j + 1);
                    x->grad.at(i, j) += g * d;
                    x->grad.at(i, j + 1) -= g * d;
                }
                if (i + 1 < H) {
                    double d = x->value.at(i, j) - x->value.at(i + 1, j);
                    x->grad.at(i, j) += g * d;
                    x->grad.at(i + 1, j) -= g * d;
                }
            }
    };
    return n;
}

// ---------------------------------------------------------------------------

void Graph::backward(Node* root) {
    if (root->value.numel() != 1)
        throw ShapeError("backward: root must be scalar, got shape " + root->value.shape_str());

    for (Node& n : nodes_) n.reachable = false;
    std::vector<Node*> stack{root};
    root->reachable = true;
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        for (Node* in : n->inputs)
            if (!in->reachable) {
                in->reachable = true;
                stack.push_back(in);
            }
    }

    for (Node& n : nodes_)
        if (n.reachable) {
            n.grad = Tensor(n.value.shape());
        }
    root->grad.fill(1.0);

    // Creation order is topological, so the reverse visits every consumer
    // before its producers; each reachable node runs exactly once.
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->reachable && it->backward_fn) it->backward_fn();
    }

    for (Node& n : nodes_)
        if (n.reachable) n.grad.check_finite("backward gradient of " + std::string(op_name(n.op)));
}

}  // namespace fido::ag
