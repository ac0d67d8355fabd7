#include "vreg/tape.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "vreg/kernels.hpp"

namespace vreg {

const Tensor& Var::value() const { return tape->value(id); }
const std::vector<int>& Var::shape() const { return tape->value(id).shape(); }

Var Tape::leaf(Tensor value, bool requires_grad) {
    if (consumed_) throw NumericError("tape already consumed by backward(); reset() first");
    if (!value.all_finite()) throw NumericError("leaf: non-finite input tensor");
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.op = "leaf";
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Tape::record(const char* op, Tensor value, std::vector<int> inputs,
                 std::function<void(Tape&, int)> backward_fn) {
    if (consumed_) throw NumericError("tape already consumed by backward(); reset() first");
    if (!value.all_finite())
        throw NumericError(std::string(op) + ": non-finite value produced");
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.inputs = std::move(inputs);
    for (int i : n.inputs)
        if (nodes_[static_cast<std::size_t>(i)].requires_grad) n.requires_grad = true;
    if (n.requires_grad) n.backward_fn = std::move(backward_fn);
    nodes_.push_back(std::move(n));
    return Var{this, static_cast<int>(nodes_.size()) - 1};
}

double* Tape::grad_data(int id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.requires_grad) return nullptr;
    if (!n.grad_allocated) {
        n.grad = Tensor(n.value.shape());
        n.grad_allocated = true;
    }
    return n.grad.data();
}

const Tensor* Tape::grad(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.grad_allocated ? &n.grad : nullptr;
}

Tensor Tape::grad_or_zeros(Var v) const {
    const Node& n = nodes_[static_cast<std::size_t>(v.id)];
    return n.grad_allocated ? n.grad : Tensor(n.value.shape());
}

void Tape::backward(Var loss) {
    if (loss.tape != this) throw ShapeError("backward: loss lives on a different tape");
    if (consumed_) throw NumericError("backward: tape already consumed");
    const Node& ln = nodes_[static_cast<std::size_t>(loss.id)];
    if (!ln.value.is_scalar()) throw ShapeError("backward: loss must be scalar");
    if (!ln.requires_grad)
        throw NumericError("backward: loss does not depend on any requires_grad leaf");
    double* seed = grad_data(loss.id);
    seed[0] = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (!n.grad_allocated || !n.backward_fn) continue;
        n.backward_fn(*this, id);
    }
    consumed_ = true;
}

void Tape::reset() {
    nodes_.clear();
    consumed_ = false;
}

namespace {

Tape& same_tape(const char* op, Var a, Var b) {
    if (!a.valid() || !b.valid()) throw ShapeError(std::string(op) + ": invalid operand");
    if (a.tape != b.tape) throw ShapeError(std::string(op) + ": operands on different tapes");
    return *a.tape;
}

Tape& own_tape(const char* op, Var a) {
    if (!a.valid()) throw ShapeError(std::string(op) + ": invalid operand");
    return *a.tape;
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                         b.shape_string());
}

// Shared skeleton for binary elementwise ops.
template <typename Fwd, typename Bwd>
Var binary_ew(const char* op, Var a, Var b, Fwd fwd, Bwd bwd) {
    Tape& t = same_tape(op, a, b);
    const Tensor& av = t.value(a.id);
    const Tensor& bv = t.value(b.id);
    require_same_shape(op, av, bv);
    const std::int64_t n = av.size();
    Tensor out(av.shape());
    for (std::int64_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
    return t.record(op, std::move(out), {a.id, b.id},
                    [ida = a.id, idb = b.id, n, bwd](Tape& t, int self) {
                        const Tensor& g = *t.grad(Var{&t, self});
                        const Tensor& av = t.value(ida);
                        const Tensor& bv = t.value(idb);
                        double* ga = t.grad_data(ida);
                        double* gb = t.grad_data(idb);
                        for (std::int64_t i = 0; i < n; ++i)
                            bwd(g[i], av[i], bv[i], ga ? ga + i : nullptr, gb ? gb + i : nullptr);
                    });
}

template <typename Fwd, typename Bwd>
Var unary_ew(const char* op, Var a, Fwd fwd, Bwd bwd) {
    Tape& t = own_tape(op, a);
    const Tensor& av = t.value(a.id);
    const std::int64_t n = av.size();
    Tensor out(av.shape());
    for (std::int64_t i = 0; i < n; ++i) out[i] = fwd(av[i]);
    return t.record(op, std::move(out), {a.id}, [ida = a.id, n, bwd](Tape& t, int self) {
        double* ga = t.grad_data(ida);
        if (!ga) return;
        const Tensor& g = *t.grad(Var{&t, self});
        const Tensor& av = t.value(ida);
        const Tensor& ov = t.value(self);
        for (std::int64_t i = 0; i < n; ++i) ga[i] += bwd(g[i], av[i], ov[i]);
    });
}

} // namespace

Var add(Var a, Var b) {
    return binary_ew(
        "add", a, b, [](double x, double y) { return x + y; },
        [](double g, double, double, double* ga, double* gb) {
            if (ga) *ga += g;
            if (gb) *gb += g;
        });
}

Var sub(Var a, Var b) {
    return binary_ew(
        "sub", a, b, [](double x, double y) { return x - y; },
        [](double g, double, double, double* ga, double* gb) {
            if (ga) *ga += g;
            if (gb) *gb -= g;
        });
}

Var mul(Var a, Var b) {
    return binary_ew(
        "mul", a, b, [](double x, double y) { return x * y; },
        [](double g, double x, double y, double* ga, double* gb) {
            if (ga) *ga += g * y;
            if (gb) *gb += g * x;
        });
}

Var divide(Var a, Var b) {
    return binary_ew(
        "div", a, b, [](double x, double y) { return x / y; },
        [](double g, double x, double y, double* ga, double* gb) {
            if (ga) *ga += g / y;
            if (gb) *gb -= g * x / (y * y);
        });
}

Var scale(Var a, double c) {
    return unary_ew(
        "scale", a, [c](double x) { return c * x; },
        [c](double g, double, double) { return c * g; });
}

Var vexp(Var a) {
    return unary_ew(
        "exp", a, [](double x) { return std::exp(x); },
        [](double g, double, double out) { return g * out; });
}

Var vabs(Var a) {
    return unary_ew(
        "abs", a, [](double x) { return std::abs(x); },
        [](double g, double x, double) { return x > 0 ? g : (x < 0 ? -g : 0.0); });
}

Var square(Var a) {
    return unary_ew(
        "square", a, [](double x) { return x * x; },
        [](double g, double x, double) { return 2.0 * x * g; });
}

Var leaky_relu(Var a, double slope) {
    return unary_ew(
        "leaky_relu", a, [slope](double x) { return x > 0 ? x : slope * x; },
        [slope](double g, double x, double) { return x > 0 ? g : slope * g; });
}

Var clamp_min(Var a, double floor_value) {
    return unary_ew(
        "clamp_min", a, [floor_value](double x) { return x < floor_value ? floor_value : x; },
        [floor_value](double g, double x, double) { return x >= floor_value ? g : 0.0; });
}

Var vsum(Var a) {
    Tape& t = own_tape("sum", a);
    const Tensor& av = t.value(a.id);
    const std::int64_t n = av.size();
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += av[i];
    return t.record("sum", Tensor::scalar(s), {a.id}, [ida = a.id, n](Tape& t, int self) {
        double* ga = t.grad_data(ida);
        if (!ga) return;
        const double g = (*t.grad(Var{&t, self}))[0];
        for (std::int64_t i = 0; i < n; ++i) ga[i] += g;
    });
}

Var vmean(Var a) {
    Tape& t = own_tape("mean", a);
    const Tensor& av = t.value(a.id);
    const std::int64_t n = av.size();
    double s = 0.0;
    for (std::int64_t i = 0; i < n; ++i) s += av[i];
    const double inv = 1.0 / static_cast<double>(n);
    return t.record("mean", Tensor::scalar(s * inv), {a.id}, [ida = a.id, n, inv](Tape& t, int self) {
        double* ga = t.grad_data(ida);
        if (!ga) return;
        const double g = (*t.grad(Var{&t, self}))[0] * inv;
        for (std::int64_t i = 0; i < n; ++i) ga[i] += g;
    });
}

Var reshape(Var a, std::vector<int> shape) {
    Tape& t = own_tape("reshape", a);
    const Tensor& av = t.value(a.id);
    Tensor out(std::move(shape), av.vec());
    if (out.size() != av.size())
        throw ShapeError("reshape: element count mismatch " + av.shape_string() + " -> " +
                         out.shape_string());
    const std::int64_t n = av.size();
    return t.record("reshape", std::move(out), {a.id}, [ida = a.id, n](Tape& t, int self) {
        double* ga = t.grad_data(ida);
        if (!ga) return;
        const Tensor& g = *t.grad(Var{&t, self});
        for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i];
    });
}

Var concat_channels(Var a, Var b) {
    Tape& t = same_tape("concat_channels", a, b);
    const Tensor& av = t.value(a.id);
    const Tensor& bv = t.value(b.id);
    if (av.rank() < 2 || bv.rank() != av.rank())
        throw ShapeError("concat_channels: operands must share rank >= 2");
    for (int ax = 1; ax < av.rank(); ++ax)
        if (av.extent(ax) != bv.extent(ax))
            throw ShapeError("concat_channels: spatial shape mismatch " + av.shape_string() +
                             " vs " + bv.shape_string());
    std::vector<int> shape = av.shape();
    shape[0] += bv.extent(0);
    Tensor out(shape);
    const std::int64_t na = av.size();
    const std::int64_t nb = bv.size();
    std::memcpy(out.data(), av.data(), sizeof(double) * static_cast<std::size_t>(na));
    std::memcpy(out.data() + na, bv.data(), sizeof(double) * static_cast<std::size_t>(nb));
    return t.record("concat_channels", std::move(out), {a.id, b.id},
                    [ida = a.id, idb = b.id, na, nb](Tape& t, int self) {
                        const Tensor& g = *t.grad(Var{&t, self});
                        if (double* ga = t.grad_data(ida))
                            for (std::int64_t i = 0; i < na; ++i) ga[i] += g[i];
                        if (double* gb = t.grad_data(idb))
                            for (std::int64_t i = 0; i < nb; ++i) gb[i] += g[na + i];
                    });
}

Var channel_max(Var a) {
    Tape& t = own_tape("channel_max", a);
    const Tensor& av = t.value(a.id);
    if (av.rank() < 2) throw ShapeError("channel_max: rank must be >= 2");
    const int channels = av.extent(0);
    const std::int64_t nvox = av.size() / channels;
    std::vector<int> shape = av.shape();
    shape[0] = 1;
    Tensor out(shape);
    std::vector<int> argmax(static_cast<std::size_t>(nvox), 0);
    for (std::int64_t v = 0; v < nvox; ++v) {
        double best = av[v];
        int bi = 0;
        for (int c = 1; c < channels; ++c) {
            const double x = av[c * nvox + v];
            if (x > best) {
                best = x;
                bi = c;
            }
        }
        out[v] = best;
        argmax[static_cast<std::size_t>(v)] = bi;
    }
    return t.record("channel_max", std::move(out), {a.id},
                    [ida = a.id, nvox, argmax = std::move(argmax)](Tape& t, int self) {
                        double* ga = t.grad_data(ida);
                        if (!ga) return;
                        const Tensor& g = *t.grad(Var{&t, self});
                        for (std::int64_t v = 0; v < nvox; ++v)
                            ga[argmax[static_cast<std::size_t>(v)] * nvox + v] += g[v];
                    });
}

Var add_channel_bias(Var x, Var bias) {
    Tape& t = same_tape("add_channel_bias", x, bias);
    const Tensor& xv = t.value(x.id);
    const Tensor& bv = t.value(bias.id);
    if (xv.rank() < 2 || bv.rank() != 1 || bv.extent(0) != xv.extent(0))
        throw ShapeError("add_channel_bias: bias shape " + bv.shape_string() +
                         " incompatible with " + xv.shape_string());
    const int channels = xv.extent(0);
    const std::int64_t nvox = xv.size() / channels;
    Tensor out(xv.shape());
    for (int c = 0; c < channels; ++c) {
        const double b = bv[c];
        for (std::int64_t v = 0; v < nvox; ++v) out[c * nvox + v] = xv[c * nvox + v] + b;
    }
    return t.record("add_channel_bias", std::move(out), {x.id, bias.id},
                    [idx = x.id, idb = bias.id, channels, nvox](Tape& t, int self) {
                        const Tensor& g = *t.grad(Var{&t, self});
                        if (double* gx = t.grad_data(idx))
                            for (std::int64_t i = 0; i < channels * nvox; ++i) gx[i] += g[i];
                        if (double* gb = t.grad_data(idb))
                            for (int c = 0; c < channels; ++c) {
                                double s = 0.0;
                                for (std::int64_t v = 0; v < nvox; ++v) s += g[c * nvox + v];
                                gb[c] += s;
                            }
                    });
}

Var conv(Var input, Var kernels, int stride, Padding padding) {
    Tape& t = same_tape("conv", input, kernels);
    const Tensor& iv = t.value(input.id);
    const Tensor& kv = t.value(kernels.id);
    const int dim = kv.rank() - 2;
    if (dim != 2 && dim != 3) throw ShapeError("conv: kernels must have rank spatial+2");
    if (iv.rank() != dim + 1)
        throw ShapeError("conv: input rank " + iv.shape_string() + " does not match kernels " +
                         kv.shape_string());
    if (iv.extent(0) != kv.extent(1))
        throw ShapeError("conv: channel mismatch, input has " + std::to_string(iv.extent(0)) +
                         ", kernels expect " + std::to_string(kv.extent(1)));
    const int k = kv.extent(2);
    for (int a = 3; a < kv.rank(); ++a)
        if (kv.extent(a) != k) throw ShapeError("conv: kernel must be square/cubic");
    int in_extent[3] = {1, 1, 1};
    for (int a = 0; a < dim; ++a) in_extent[a] = iv.extent(1 + a);
    const kernels::ConvDims cd = kernels::conv_dims(dim, iv.extent(0), kv.extent(0), k, stride,
                                                    padding == Padding::same, in_extent);
    std::vector<int> out_shape(static_cast<std::size_t>(dim) + 1);
    out_shape[0] = cd.cout;
    for (int a = 0; a < dim; ++a) out_shape[static_cast<std::size_t>(a) + 1] = cd.out[a];
    Tensor out(out_shape);
    kernels::conv_forward(cd, iv.data(), kv.data(), out.data());
    return t.record("conv", std::move(out), {input.id, kernels.id},
                    [idi = input.id, idk = kernels.id, cd](Tape& t, int self) {
                        const Tensor& g = *t.grad(Var{&t, self});
                        if (double* gi = t.grad_data(idi))
                            kernels::conv_backward_input(cd, t.value(idk).data(), g.data(), gi);
                        if (double* gk = t.grad_data(idk))
                            kernels::conv_backward_kernels(cd, t.value(idi).data(), g.data(), gk);
                    });
}

Var upsample_nearest(Var a, int factor, int spatial_rank) {
    Tape& t = own_tape("upsample_nearest", a);
    if (factor != 2) throw ShapeError("upsample_nearest: factor must be 2");
    const Tensor& av = t.value(a.id);
    if (spatial_rank != 2 && spatial_rank != 3)
        throw ShapeError("upsample_nearest: spatial rank must be 2 or 3");
    if (av.rank() < spatial_rank || av.rank() > spatial_rank + 1)
        throw ShapeError("upsample_nearest: rank " + av.shape_string() +
                         " incompatible with spatial rank " + std::to_string(spatial_rank));
    const int channels = av.rank() == spatial_rank ? 1 : av.extent(0);
    int in_extent[3] = {1, 1, 1};
    const int off = av.rank() - spatial_rank;
    for (int ax = 0; ax < spatial_rank; ++ax) in_extent[ax] = av.extent(off + ax);
    std::vector<int> out_shape = av.shape();
    for (int ax = 0; ax < spatial_rank; ++ax)
        out_shape[static_cast<std::size_t>(off + ax)] = 2 * in_extent[ax];
    Tensor out(out_shape);
    std::int64_t in_vox = 1, out_vox = 1;
    for (int ax = 0; ax < spatial_rank; ++ax) {
        in_vox *= in_extent[ax];
        out_vox *= 2 * in_extent[ax];
    }
    for (int c = 0; c < channels; ++c)
        kernels::upsample2_forward(spatial_rank, in_extent, av.data() + c * in_vox,
                                   out.data() + c * out_vox);
    return t.record("upsample_nearest", std::move(out), {a.id},
                    [ida = a.id, channels, spatial_rank, in_vox, out_vox,
                     e0 = in_extent[0], e1 = in_extent[1], e2 = in_extent[2]](Tape& t, int self) {
                        double* ga = t.grad_data(ida);
                        if (!ga) return;
                        const Tensor& g = *t.grad(Var{&t, self});
                        const int in_extent[3] = {e0, e1, e2};
                        for (int c = 0; c < channels; ++c)
                            kernels::upsample2_backward(spatial_rank, in_extent,
                                                        g.data() + c * out_vox, ga + c * in_vox);
                    });
}

Var shift_clamped(Var a, const std::vector<int>& offset) {
    Tape& t = own_tape("shift_clamped", a);
    const Tensor& av = t.value(a.id);
    const int dim = av.rank();
    if (dim != 2 && dim != 3) throw ShapeError("shift_clamped: rank must be 2 or 3");
    if (static_cast<int>(offset.size()) != dim)
        throw ShapeError("shift_clamped: offset rank mismatch");
    int extent[3] = {1, 1, 1};
    int off[3] = {0, 0, 0};
    for (int ax = 0; ax < dim; ++ax) {
        extent[ax] = av.extent(ax);
        off[ax] = offset[static_cast<std::size_t>(ax)];
    }
    Tensor out(av.shape());
    kernels::shift_forward(dim, extent, off, av.data(), out.data());
    return t.record("shift_clamped", std::move(out), {a.id},
                    [ida = a.id, dim, e0 = extent[0], e1 = extent[1], e2 = extent[2], o0 = off[0],
                     o1 = off[1], o2 = off[2]](Tape& t, int self) {
                        double* ga = t.grad_data(ida);
                        if (!ga) return;
                        const Tensor& g = *t.grad(Var{&t, self});
                        const int extent[3] = {e0, e1, e2};
                        const int off[3] = {o0, o1, o2};
                        kernels::shift_backward(dim, extent, off, g.data(), ga);
                    });
}

Var patch_filter(Var a, Tensor weights, int radius) {
    Tape& t = own_tape("patch_filter", a);
    const Tensor& av = t.value(a.id);
    const int dim = av.rank();
    if (dim != 2 && dim != 3) throw ShapeError("patch_filter: rank must be 2 or 3");
    if (radius < 0) throw ShapeError("patch_filter: radius must be nonnegative");
    const int k = 2 * radius + 1;
    std::int64_t taps = 1;
    for (int ax = 0; ax < dim; ++ax) taps *= k;
    if (weights.size() != taps) throw ShapeError("patch_filter: weight count mismatch");
    int extent[3] = {1, 1, 1};
    for (int ax = 0; ax < dim; ++ax) extent[ax] = av.extent(ax);
    Tensor out(av.shape());
    kernels::patch_filter_forward(dim, extent, radius, weights.data(), av.data(), out.data());
    return t.record("patch_filter", std::move(out), {a.id},
                    [ida = a.id, dim, radius, w = std::move(weights), e0 = extent[0],
                     e1 = extent[1], e2 = extent[2]](Tape& t, int self) {
                        double* ga = t.grad_data(ida);
                        if (!ga) return;
                        const Tensor& g = *t.grad(Var{&t, self});
                        const int extent[3] = {e0, e1, e2};
                        kernels::patch_filter_backward(dim, extent, radius, w.data(), g.data(), ga);
                    });
}

Var axis_diff(Var a, int axis) {
    Tape& t = own_tape("axis_diff", a);
    const Tensor& av = t.value(a.id);
    if (axis < 0 || axis >= av.rank()) throw ShapeError("axis_diff: axis out of range");
    if (av.extent(axis) < 2) throw ShapeError("axis_diff: axis extent must be >= 2");
    std::vector<int> out_shape = av.shape();
    out_shape[static_cast<std::size_t>(axis)] -= 1;
    // outer = product of extents before axis, inner = product after.
    std::int64_t outer = 1, inner = 1;
    for (int ax = 0; ax < axis; ++ax) outer *= av.extent(ax);
    for (int ax = axis + 1; ax < av.rank(); ++ax) inner *= av.extent(ax);
    const int n_in = av.extent(axis);
    const int n_out = n_in - 1;
    Tensor out(out_shape);
    for (std::int64_t o = 0; o < outer; ++o)
        for (int i = 0; i < n_out; ++i)
            for (std::int64_t r = 0; r < inner; ++r)
                out[(o * n_out + i) * inner + r] =
                    av[(o * n_in + i + 1) * inner + r] - av[(o * n_in + i) * inner + r];
    return t.record("axis_diff", std::move(out), {a.id},
                    [ida = a.id, outer, inner, n_in, n_out](Tape& t, int self) {
                        double* ga = t.grad_data(ida);
                        if (!ga) return;
                        const Tensor& g = *t.grad(Var{&t, self});
                        for (std::int64_t o = 0; o < outer; ++o)
                            for (int i = 0; i < n_out; ++i)
                                for (std::int64_t r = 0; r < inner; ++r) {
                                    const double gv = g[(o * n_out + i) * inner + r];
                                    ga[(o * n_in + i + 1) * inner + r] += gv;
                                    ga[(o * n_in + i) * inner + r] -= gv;
                                }
                    });
}

Var warp(Var image, Var field) {
    Tape& t = same_tape("warp", image, field);
    const Tensor& iv = t.value(image.id);
    const Tensor& fv = t.value(field.id);
    const int dim = iv.rank();
    if (dim != 2 && dim != 3) throw ShapeError("warp: image rank must be 2 or 3");
    if (fv.rank() != dim + 1 || fv.extent(0) != dim)
        throw ShapeError("warp: field shape " + fv.shape_string() + " incompatible with image " +
                         iv.shape_string());
    for (int ax = 0; ax < dim; ++ax)
        if (fv.extent(1 + ax) != iv.extent(ax))
            throw ShapeError("warp: field shape " + fv.shape_string() +
                             " incompatible with image " + iv.shape_string());
    int extent[3] = {1, 1, 1};
    for (int ax = 0; ax < dim; ++ax) extent[ax] = iv.extent(ax);
    Tensor out(iv.shape());
    kernels::warp_forward(dim, extent, iv.data(), fv.data(), out.data());
    return t.record("warp", std::move(out), {image.id, field.id},
                    [idi = image.id, idf = field.id, dim, e0 = extent[0], e1 = extent[1],
                     e2 = extent[2]](Tape& t, int self) {
                        const Tensor& g = *t.grad(Var{&t, self});
                        const int extent[3] = {e0, e1, e2};
                        double* gi = t.grad_data(idi);
                        double* gf = t.grad_data(idf);
                        if (gi || gf)
                            kernels::warp_backward(dim, extent, t.value(idi).data(),
                                                   t.value(idf).data(), g.data(), gi, gf);
                    });
}

} // namespace vreg
