#include "mts/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "mts/kernels.hpp"

namespace mts::ad {

namespace {
std::atomic<uint64_t> g_order{1};
}

Var::Var(Tensor value, bool requires_grad) {
    node_ = std::make_shared<Node>();
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
    node_->order = g_order.fetch_add(1, std::memory_order_relaxed);
}

double Var::item() const {
    if (node_->value.numel() != 1) throw ShapeError("item() on non-scalar " + shape_str(shape()));
    return node_->value[0];
}

void Var::zero_grad() const {
    if (node_ && node_->grad.defined())
        std::fill(node_->grad.data.begin(), node_->grad.data.end(), 0.0);
}

Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward_fn) {
    bool needs = false;
    for (const auto& p : parents) needs = needs || p.requires_grad();
    Var out(std::move(value), needs);
    if (needs) {
        for (auto& p : parents)
            if (p.defined()) out.node_->parents.push_back(p.node_);
        out.node_->backward_fn = std::move(backward_fn);
    }
    return out;
}

void backward(const Var& root) {
    if (!root.defined() || root.value().numel() != 1)
        throw ShapeError("backward() expects a defined scalar root");
    if (!root.requires_grad()) return;

    // collect reachable subgraph
    std::vector<Node*> nodes;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.node_.get()};
    seen.insert(root.node_.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        nodes.push_back(n);
        for (auto& p : n->parents)
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(nodes.begin(), nodes.end(), [](Node* a, Node* b) { return a->order > b->order; });

    root.node_->ensure_grad()[0] += 1.0;
    for (Node* n : nodes)
        if (n->backward_fn && n->grad.defined()) n->backward_fn(*n);
}

// ---------------------------------------------------------------------------

Var add(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] += b.value()[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) mutable {
        if (a.requires_grad()) {
            Tensor& g = a.ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (b.requires_grad()) {
            Tensor& g = b.ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "sub");
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] -= b.value()[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) mutable {
        if (a.requires_grad()) {
            Tensor& g = a.ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
        }
        if (b.requires_grad()) {
            Tensor& g = b.ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] -= n.grad[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a.value(), b.value(), "mul");
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] *= b.value()[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) mutable {
        if (a.requires_grad()) {
            Tensor& g = a.ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * b.value()[i];
        }
        if (b.requires_grad()) {
            Tensor& g = b.ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * a.value()[i];
        }
    });
}

Var affine(const Var& a, double s, double shift) {
    Tensor out = a.value();
    for (double& v : out.data) v = s * v + shift;
    return make_op(std::move(out), {a}, [a, s](Node& n) mutable {
        Tensor& g = a.ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += s * n.grad[i];
    });
}

Var relu(const Var& a) {
    Tensor out = a.value();
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return make_op(std::move(out), {a}, [a](Node& n) mutable {
        Tensor& g = a.ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i)
            if (a.value()[i] > 0.0) g[i] += n.grad[i];
    });
}

Var softplus(const Var& a) {
    Tensor out = a.value();
    for (double& v : out.data) v = std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
    return make_op(std::move(out), {a}, [a](Node& n) mutable {
        Tensor& g = a.ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i)
            g[i] += n.grad[i] / (1.0 + std::exp(-a.value()[i]));
    });
}

Var sigmoid(const Var& a) {
    Tensor out = a.value();
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    return make_op(std::move(out), {a}, [a](Node& n) mutable {
        Tensor& g = a.ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) {
            const double y = n.value[i];
            g[i] += n.grad[i] * y * (1.0 - y);
        }
    });
}

// ---------------------------------------------------------------------------

namespace {

// product of dims after the concat axis (axis 1)
int64_t inner_stride(const Shape& s) {
    int64_t r = 1;
    for (size_t i = 2; i < s.size(); ++i) r *= s[i];
    return r;
}

}  // namespace

Var concat_axis1(const std::vector<Var>& parts) {
    if (parts.empty()) throw ShapeError("concat_axis1: no inputs");
    const Shape& first = parts[0].shape();
    if (first.size() < 2) throw ShapeError("concat_axis1: rank must be >= 2");
    int64_t total_c = 0;
    for (const auto& p : parts) {
        if (p.shape().size() != first.size() || p.dim(0) != first[0])
            throw ShapeError("concat_axis1: incompatible shapes");
        for (size_t i = 2; i < first.size(); ++i)
            if (p.shape()[i] != first[i]) throw ShapeError("concat_axis1: incompatible shapes");
        total_c += p.dim(1);
    }
    Shape out_shape = first;
    out_shape[1] = total_c;
    Tensor out(out_shape);
    const int64_t batch = first[0];
    const int64_t inner = inner_stride(first);
    int64_t offset = 0;
    for (const auto& p : parts) {
        const int64_t block = p.dim(1) * inner;
        for (int64_t b = 0; b < batch; ++b)
            std::copy_n(p.value().ptr() + b * block, block,
                        out.ptr() + b * total_c * inner + offset);
        offset += block;
    }
    return make_op(std::move(out), parts, [parts, batch, inner, total_c](Node& n) mutable {
        int64_t offset = 0;
        for (auto& p : parts) {
            const int64_t block = p.dim(1) * inner;
            if (p.requires_grad()) {
                Tensor& g = p.ensure_grad();
                for (int64_t b = 0; b < batch; ++b) {
                    const double* src = n.grad.ptr() + b * total_c * inner + offset;
                    double* dst = g.ptr() + b * block;
                    for (int64_t i = 0; i < block; ++i) dst[i] += src[i];
                }
            }
            offset += block;
        }
    });
}

Var slice_axis1(const Var& a, int64_t begin, int64_t end) {
    const Shape& s = a.shape();
    if (s.size() < 2 || begin < 0 || end > s[1] || begin >= end)
        throw ShapeError("slice_axis1: bad range");
    Shape out_shape = s;
    out_shape[1] = end - begin;
    Tensor out(out_shape);
    const int64_t batch = s[0], inner = inner_stride(s);
    const int64_t in_block = s[1] * inner, out_block = (end - begin) * inner;
    for (int64_t b = 0; b < batch; ++b)
        std::copy_n(a.value().ptr() + b * in_block + begin * inner, out_block, out.ptr() + b * out_block);
    return make_op(std::move(out), {a}, [a, batch, inner, in_block, out_block, begin](Node& n) mutable {
        Tensor& g = a.ensure_grad();
        for (int64_t b = 0; b < batch; ++b) {
            const double* src = n.grad.ptr() + b * out_block;
            double* dst = g.ptr() + b * in_block + begin * inner;
            for (int64_t i = 0; i < out_block; ++i) dst[i] += src[i];
        }
    });
}

Var reshape(const Var& a, Shape target) {
    if (shape_numel(target) != a.value().numel()) throw ShapeError("reshape: element count mismatch");
    Tensor out(std::move(target), a.value().data);
    return make_op(std::move(out), {a}, [a](Node& n) mutable {
        Tensor& g = a.ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i];
    });
}

Var detach(const Var& a) { return Var(a.value(), false); }

// ---------------------------------------------------------------------------

Var gap(const Var& a) {
    const Shape& s = a.shape();
    if (s.size() < 3) throw ShapeError("gap: expected (B, C, spatial...)");
    const int64_t b = s[0], c = s[1], sp = inner_stride(s);
    Tensor out(Shape{b, c});
    kernels::gap_forward(a.value().ptr(), out.ptr(), b, c, sp);
    return make_op(std::move(out), {a}, [a, b, c, sp](Node& n) mutable {
        kernels::gap_backward(n.grad.ptr(), a.ensure_grad().ptr(), b, c, sp);
    });
}

namespace {
void check_bc3d(const Shape& s, const char* what) {
    if (s.size() != 5) throw ShapeError(std::string(what) + ": expected (B, C, D, H, W), got " + shape_str(s));
}
}  // namespace

Var channel_max(const Var& a) {
    check_bc3d(a.shape(), "channel_max");
    const int64_t b = a.dim(0), c = a.dim(1), sp = inner_stride(a.shape());
    Tensor out(Shape{b, 1, a.dim(2), a.dim(3), a.dim(4)});
    // remember the winning channel for the backward routing
    auto argmax = std::make_shared<std::vector<int32_t>>(size_t(b * sp));
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t v = 0; v < sp; ++v) {
            const double* base = a.value().ptr() + bi * c * sp + v;
            double best = base[0];
            int32_t best_c = 0;
            for (int64_t ci = 1; ci < c; ++ci)
                if (base[ci * sp] > best) {
                    best = base[ci * sp];
                    best_c = int32_t(ci);
                }
            out[bi * sp + v] = best;
            (*argmax)[size_t(bi * sp + v)] = best_c;
        }
    return make_op(std::move(out), {a}, [a, argmax, b, c, sp](Node& n) mutable {
        Tensor& g = a.ensure_grad();
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t v = 0; v < sp; ++v)
                g[bi * c * sp + (*argmax)[size_t(bi * sp + v)] * sp + v] += n.grad[bi * sp + v];
    });
}

Var channel_mean(const Var& a) {
    check_bc3d(a.shape(), "channel_mean");
    const int64_t b = a.dim(0), c = a.dim(1), sp = inner_stride(a.shape());
    Tensor out(Shape{b, 1, a.dim(2), a.dim(3), a.dim(4)});
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t v = 0; v < sp; ++v) {
            double acc = 0.0;
            for (int64_t ci = 0; ci < c; ++ci) acc += a.value()[bi * c * sp + ci * sp + v];
            out[bi * sp + v] = acc / double(c);
        }
    return make_op(std::move(out), {a}, [a, b, c, sp](Node& n) mutable {
        Tensor& g = a.ensure_grad();
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t v = 0; v < sp; ++v) {
                const double gv = n.grad[bi * sp + v] / double(c);
                for (int64_t ci = 0; ci < c; ++ci) g[bi * c * sp + ci * sp + v] += gv;
            }
    });
}

Var mul_channel_broadcast(const Var& a, const Var& attn) {
    check_bc3d(a.shape(), "mul_channel_broadcast");
    check_bc3d(attn.shape(), "mul_channel_broadcast");
    if (attn.dim(1) != 1 || attn.dim(0) != a.dim(0) || attn.dim(2) != a.dim(2) ||
        attn.dim(3) != a.dim(3) || attn.dim(4) != a.dim(4))
        throw ShapeError("mul_channel_broadcast: attention must be (B, 1, D, H, W) matching input");
    const int64_t b = a.dim(0), c = a.dim(1), sp = inner_stride(a.shape());
    Tensor out(a.shape());
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ci = 0; ci < c; ++ci)
            for (int64_t v = 0; v < sp; ++v)
                out[bi * c * sp + ci * sp + v] = a.value()[bi * c * sp + ci * sp + v] * attn.value()[bi * sp + v];
    return make_op(std::move(out), {a, attn}, [a, attn, b, c, sp](Node& n) mutable {
        if (a.requires_grad()) {
            Tensor& g = a.ensure_grad();
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t ci = 0; ci < c; ++ci)
                    for (int64_t v = 0; v < sp; ++v)
                        g[bi * c * sp + ci * sp + v] += n.grad[bi * c * sp + ci * sp + v] * attn.value()[bi * sp + v];
        }
        if (attn.requires_grad()) {
            Tensor& g = attn.ensure_grad();
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t v = 0; v < sp; ++v) {
                    double acc = 0.0;
                    for (int64_t ci = 0; ci < c; ++ci)
                        acc += n.grad[bi * c * sp + ci * sp + v] * a.value()[bi * c * sp + ci * sp + v];
                    g[bi * sp + v] += acc;
                }
        }
    });
}

Var softmax_axis1(const Var& a) {
    const Shape& s = a.shape();
    if (s.size() < 2) throw ShapeError("softmax_axis1: rank must be >= 2");
    const int64_t b = s[0], c = s[1], sp = inner_stride(s);
    Tensor out(s);
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t v = 0; v < sp; ++v) {
            const int64_t base = bi * c * sp + v;
            double mx = a.value()[base];
            for (int64_t ci = 1; ci < c; ++ci) mx = std::max(mx, a.value()[base + ci * sp]);
            double z = 0.0;
            for (int64_t ci = 0; ci < c; ++ci) {
                const double e = std::exp(a.value()[base + ci * sp] - mx);
                out[base + ci * sp] = e;
                z += e;
            }
            for (int64_t ci = 0; ci < c; ++ci) out[base + ci * sp] /= z;
        }
    return make_op(std::move(out), {a}, [a, b, c, sp](Node& n) mutable {
        Tensor& g = a.ensure_grad();
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t v = 0; v < sp; ++v) {
                const int64_t base = bi * c * sp + v;
                double dot = 0.0;
                for (int64_t ci = 0; ci < c; ++ci) dot += n.grad[base + ci * sp] * n.value[base + ci * sp];
                for (int64_t ci = 0; ci < c; ++ci)
                    g[base + ci * sp] += n.value[base + ci * sp] * (n.grad[base + ci * sp] - dot);
            }
    });
}

// ---------------------------------------------------------------------------

Var conv3d(const Var& input, const Var& weight, const Var& bias, int stride, int pad) {
    const Shape& xs = input.shape();
    const Shape& ws = weight.shape();
    if (xs.size() != 5 || ws.size() != 5) throw ShapeError("conv3d: input and weight must be rank 5");
    if (xs[1] != ws[1])
        throw ShapeError("conv3d: channel mismatch, input " + shape_str(xs) + " weight " + shape_str(ws));
    auto spec = kernels::make_conv3d_spec(xs[0], xs[1], ws[0], xs[2], xs[3], xs[4], int(ws[2]), stride, pad);
    Tensor out(Shape{spec.batch, spec.out_ch, spec.od, spec.oh, spec.ow});
    kernels::conv3d_forward(input.value().ptr(), weight.value().ptr(),
                            bias.defined() ? bias.value().ptr() : nullptr, out.ptr(), spec);
    return make_op(std::move(out), {input, weight, bias}, [input, weight, bias, spec](Node& n) mutable {
        if (weight.requires_grad())
            kernels::conv3d_grad_weight(n.grad.ptr(), input.value().ptr(), weight.ensure_grad().ptr(),
                                        bias.defined() && bias.requires_grad() ? bias.ensure_grad().ptr() : nullptr,
                                        spec);
        if (input.requires_grad()) {
            Tensor tmp(input.shape());
            kernels::conv3d_grad_input(n.grad.ptr(), weight.value().ptr(), tmp.ptr(), spec);
            Tensor& g = input.ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += tmp[i];
        }
    });
}

Var upsample2(const Var& a) {
    check_bc3d(a.shape(), "upsample2");
    const int64_t b = a.dim(0), c = a.dim(1), d = a.dim(2), h = a.dim(3), w = a.dim(4);
    Tensor out(Shape{b, c, 2 * d, 2 * h, 2 * w});
    kernels::upsample2_forward(a.value().ptr(), out.ptr(), b, c, d, h, w);
    return make_op(std::move(out), {a}, [a, b, c, d, h, w](Node& n) mutable {
        kernels::upsample2_backward(n.grad.ptr(), a.ensure_grad().ptr(), b, c, d, h, w);
    });
}

Var linear(const Var& input, const Var& weight, const Var& bias) {
    const Shape& xs = input.shape();
    const Shape& ws = weight.shape();
    if (xs.size() != 2 || ws.size() != 2) throw ShapeError("linear: expected (B, N) input and (M, N) weight");
    if (xs[1] != ws[1])
        throw ShapeError("linear: size mismatch, input " + shape_str(xs) + " weight " + shape_str(ws));
    const int64_t b = xs[0], n_in = xs[1], m = ws[0];
    Tensor out(Shape{b, m});
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t mi = 0; mi < m; ++mi) {
            double acc = bias.defined() ? bias.value()[mi] : 0.0;
            const double* w_row = weight.value().ptr() + mi * n_in;
            const double* x_row = input.value().ptr() + bi * n_in;
            for (int64_t ni = 0; ni < n_in; ++ni) acc += w_row[ni] * x_row[ni];
            out[bi * m + mi] = acc;
        }
    return make_op(std::move(out), {input, weight, bias}, [input, weight, bias, b, n_in, m](Node& n) mutable {
        if (input.requires_grad()) {
            Tensor& g = input.ensure_grad();
            for (int64_t bi = 0; bi < b; ++bi)
                for (int64_t ni = 0; ni < n_in; ++ni) {
                    double acc = 0.0;
                    for (int64_t mi = 0; mi < m; ++mi)
                        acc += n.grad[bi * m + mi] * weight.value()[mi * n_in + ni];
                    g[bi * n_in + ni] += acc;
                }
        }
        if (weight.requires_grad()) {
            Tensor& g = weight.ensure_grad();
            for (int64_t mi = 0; mi < m; ++mi)
                for (int64_t ni = 0; ni < n_in; ++ni) {
                    double acc = 0.0;
                    for (int64_t bi = 0; bi < b; ++bi)
                        acc += n.grad[bi * m + mi] * input.value()[bi * n_in + ni];
                    g[mi * n_in + ni] += acc;
                }
        }
        if (bias.defined() && bias.requires_grad()) {
            Tensor& g = bias.ensure_grad();
            for (int64_t mi = 0; mi < m; ++mi)
                for (int64_t bi = 0; bi < b; ++bi) g[mi] += n.grad[bi * m + mi];
        }
    });
}

Var dropout(const Var& a, double rate, bool training, Rng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout rate must be in [0, 1)");
    if (!training || rate == 0.0) return a;
    const double keep = 1.0 - rate;
    auto mask = std::make_shared<std::vector<double>>(size_t(a.value().numel()));
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) {
        const double m = rng.bernoulli(keep) ? 1.0 / keep : 0.0;
        (*mask)[size_t(i)] = m;
        out[i] *= m;
    }
    return make_op(std::move(out), {a}, [a, mask](Node& n) mutable {
        Tensor& g = a.ensure_grad();
        for (int64_t i = 0; i < g.numel(); ++i) g[i] += n.grad[i] * (*mask)[size_t(i)];
    });
}

// ---------------------------------------------------------------------------

Var soft_dice_loss(const Var& probs, const std::vector<int>& target, double eps) {
    check_bc3d(probs.shape(), "soft_dice_loss");
    const int64_t b = probs.dim(0), c = probs.dim(1), sp = inner_stride(probs.shape());
    if (int64_t(target.size()) != b * sp)
        throw ShapeError("soft_dice_loss: target size mismatch");
    if (c < 2) throw ShapeError("soft_dice_loss: need at least 2 channels");
    for (int t : target)
        if (t < 0 || t >= c) throw LabelError("soft_dice_loss: label " + std::to_string(t) + " outside [0," + std::to_string(c) + ")");

    // per (item, foreground class) soft dice, averaged
    const int64_t fg = c - 1;
    auto inter = std::make_shared<std::vector<double>>(size_t(b * c), 0.0);
    auto denom = std::make_shared<std::vector<double>>(size_t(b * c), 0.0);
    double loss = 0.0;
    for (int64_t bi = 0; bi < b; ++bi)
        for (int64_t ci = 1; ci < c; ++ci) {
            double is = 0.0, ps = 0.0, gs = 0.0;
            const double* p = probs.value().ptr() + (bi * c + ci) * sp;
            const int* t = target.data() + bi * sp;
            for (int64_t v = 0; v < sp; ++v) {
                const double gv = (t[v] == ci) ? 1.0 : 0.0;
                is += p[v] * gv;
                ps += p[v];
                gs += gv;
            }
            const double den = ps + gs + eps;
            (*inter)[size_t(bi * c + ci)] = 2.0 * is + eps;
            (*denom)[size_t(bi * c + ci)] = den;
            loss += 1.0 - (2.0 * is + eps) / den;
        }
    loss /= double(b * fg);
    return make_op(Tensor::scalar(loss), {probs},
                   [probs, target, inter, denom, b, c, sp, fg](Node& n) mutable {
                       const double gscale = n.grad[0] / double(b * fg);
                       Tensor& g = probs.ensure_grad();
                       for (int64_t bi = 0; bi < b; ++bi)
                           for (int64_t ci = 1; ci < c; ++ci) {
                               const double num = (*inter)[size_t(bi * c + ci)];
                               const double den = (*denom)[size_t(bi * c + ci)];
                               double* gp = g.ptr() + (bi * c + ci) * sp;
                               const int* t = target.data() + bi * sp;
                               for (int64_t v = 0; v < sp; ++v) {
                                   const double gv = (t[v] == ci) ? 1.0 : 0.0;
                                   // d(1 - num/den)/dp = (num - 2*gv*den) / den^2
                                   gp[v] += gscale * (num - 2.0 * gv * den) / (den * den);
                               }
                           }
                   });
}

Var cross_entropy_logits(const Var& logits, const std::vector<int>& labels) {
    const Shape& s = logits.shape();
    if (s.size() != 2) throw ShapeError("cross_entropy_logits: expected (B, K)");
    const int64_t b = s[0], k = s[1];
    if (int64_t(labels.size()) != b) throw ShapeError("cross_entropy_logits: label count mismatch");
    for (int y : labels)
        if (y < 0 || y >= k) throw LabelError("cross_entropy_logits: label outside range");

    auto soft = std::make_shared<Tensor>(s);
    double loss = 0.0;
    for (int64_t bi = 0; bi < b; ++bi) {
        const double* row = logits.value().ptr() + bi * k;
        double mx = row[0];
        for (int64_t i = 1; i < k; ++i) mx = std::max(mx, row[i]);
        double z = 0.0;
        for (int64_t i = 0; i < k; ++i) z += std::exp(row[i] - mx);
        const double logz = std::log(z) + mx;
        for (int64_t i = 0; i < k; ++i) (*soft)[bi * k + i] = std::exp(row[i] - logz);
        loss += logz - row[labels[size_t(bi)]];
    }
    loss /= double(b);
    return make_op(Tensor::scalar(loss), {logits}, [logits, labels, soft, b, k](Node& n) mutable {
        Tensor& g = logits.ensure_grad();
        const double gs = n.grad[0] / double(b);
        for (int64_t bi = 0; bi < b; ++bi)
            for (int64_t i = 0; i < k; ++i)
                g[bi * k + i] += gs * ((*soft)[bi * k + i] - (labels[size_t(bi)] == i ? 1.0 : 0.0));
    });
}

Var weighted_sum(const Var& a, double wa, const Var& b, double wb) {
    check_same_shape(a.value(), b.value(), "weighted_sum");
    Tensor out = a.value();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = wa * out[i] + wb * b.value()[i];
    return make_op(std::move(out), {a, b}, [a, b, wa, wb](Node& n) mutable {
        if (a.requires_grad()) {
            Tensor& g = a.ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += wa * n.grad[i];
        }
        if (b.requires_grad()) {
            Tensor& g = b.ensure_grad();
            for (int64_t i = 0; i < g.numel(); ++i) g[i] += wb * n.grad[i];
        }
    });
}

}  // namespace mts::ad
