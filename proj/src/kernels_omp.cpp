#include <cmath>
#include <vector>

#include "kernels_common.hpp"

// OpenMP kernels. Every parallel loop owns disjoint output elements and the
// adjoints are written in gather form, so results are bit-identical for any
// thread count. The one exception is the image-gradient scatter inside
// warp_backward, which stays serial (the scatter targets depend on the field
// values, so there is no cheap gather formulation).
namespace vreg::kernels::openmp {

using detail::clampi;
using detail::clamp_preimage;
using detail::voxels;

namespace {

struct TapTable {
    // Row-major enumerated kernel taps, delta[t][axis] = tap offset - pad.
    std::vector<int> delta;
    int count = 0;
};

TapTable make_taps(int dim, int k, int center) {
    TapTable t;
    const int kz = dim == 3 ? k : 1;
    t.count = k * k * kz;
    t.delta.resize(static_cast<std::size_t>(t.count) * 3, 0);
    int idx = 0;
    for (int t0 = 0; t0 < k; ++t0)
        for (int t1 = 0; t1 < k; ++t1)
            for (int t2 = 0; t2 < kz; ++t2) {
                t.delta[idx * 3 + 0] = t0 - center;
                t.delta[idx * 3 + 1] = t1 - center;
                t.delta[idx * 3 + 2] = dim == 3 ? t2 - center : 0;
                ++idx;
            }
    return t;
}

} // namespace

void conv_forward(const ConvDims& d, const double* in, const double* w, double* out) {
    const std::int64_t nin = d.in_voxels();
    const std::int64_t nout = d.out_voxels();
    const std::int64_t taps = d.taps();
    const TapTable tt = make_taps(d.dim, d.k, d.pad);
    const std::int64_t total = static_cast<std::int64_t>(d.cout) * nout;

#pragma omp parallel for schedule(static)
    for (std::int64_t u = 0; u < total; ++u) {
        const int co = static_cast<int>(u / nout);
        const std::int64_t yi = u % nout;
        int y[3];
        detail::decode(yi, d.dim, d.out, y);
        double acc = 0.0;
        for (int ci = 0; ci < d.cin; ++ci) {
            const double* wrow = w + (static_cast<std::int64_t>(co) * d.cin + ci) * taps;
            const double* inc = in + ci * nin;
            for (int t = 0; t < tt.count; ++t) {
                int x[3];
                bool ok = true;
                for (int a = 0; a < d.dim; ++a) {
                    x[a] = y[a] * d.stride + tt.delta[t * 3 + a];
                    if (x[a] < 0 || x[a] >= d.in[a]) {
                        ok = false;
                        break;
                    }
                }
                if (ok) acc += wrow[t] * inc[detail::encode(d.dim, d.in, x)];
            }
        }
        out[u] = acc;
    }
}

void conv_backward_input(const ConvDims& d, const double* w, const double* gout, double* gin) {
    const std::int64_t nin = d.in_voxels();
    const std::int64_t nout = d.out_voxels();
    const std::int64_t taps = d.taps();
    const TapTable tt = make_taps(d.dim, d.k, d.pad);
    const std::int64_t total = static_cast<std::int64_t>(d.cin) * nin;

#pragma omp parallel for schedule(static)
    for (std::int64_t u = 0; u < total; ++u) {
        const int ci = static_cast<int>(u / nin);
        const std::int64_t xi = u % nin;
        int x[3];
        detail::decode(xi, d.dim, d.in, x);
        double acc = 0.0;
        for (int co = 0; co < d.cout; ++co) {
            const double* wrow = w + (static_cast<std::int64_t>(co) * d.cin + ci) * taps;
            const double* gc = gout + co * nout;
            for (int t = 0; t < tt.count; ++t) {
                int y[3];
                bool ok = true;
                for (int a = 0; a < d.dim; ++a) {
                    const int num = x[a] - tt.delta[t * 3 + a];
                    if (num < 0 || num % d.stride != 0) {
                        ok = false;
                        break;
                    }
                    y[a] = num / d.stride;
                    if (y[a] >= d.out[a]) {
                        ok = false;
                        break;
                    }
                }
                if (ok) acc += wrow[t] * gc[detail::encode(d.dim, d.out, y)];
            }
        }
        gin[u] += acc;
    }
}

void conv_backward_kernels(const ConvDims& d, const double* in, const double* gout, double* gw) {
    const std::int64_t nin = d.in_voxels();
    const std::int64_t nout = d.out_voxels();
    const std::int64_t taps = d.taps();
    const TapTable tt = make_taps(d.dim, d.k, d.pad);
    const std::int64_t total = static_cast<std::int64_t>(d.cout) * d.cin * taps;

#pragma omp parallel for schedule(static)
    for (std::int64_t u = 0; u < total; ++u) {
        const int co = static_cast<int>(u / (d.cin * taps));
        const int ci = static_cast<int>((u / taps) % d.cin);
        const int t = static_cast<int>(u % taps);
        const double* inc = in + static_cast<std::int64_t>(ci) * nin;
        const double* gc = gout + static_cast<std::int64_t>(co) * nout;
        double acc = 0.0;
        int y[3];
        for (std::int64_t yi = 0; yi < nout; ++yi) {
            detail::decode(yi, d.dim, d.out, y);
            int x[3];
            bool ok = true;
            for (int a = 0; a < d.dim; ++a) {
                x[a] = y[a] * d.stride + tt.delta[t * 3 + a];
                if (x[a] < 0 || x[a] >= d.in[a]) {
                    ok = false;
                    break;
                }
            }
            if (ok) acc += gc[yi] * inc[detail::encode(d.dim, d.in, x)];
        }
        gw[u] += acc;
    }
}

namespace {

struct InterpPoint {
    int lo[3];
    double frac[3];
    bool clamped[3];
};

inline InterpPoint interp_point(int dim, const int* extent, const double* pos) {
    InterpPoint p{};
    for (int a = 0; a < dim; ++a) {
        double x = pos[a];
        const int n = extent[a];
        bool cl = false;
        if (x <= 0.0) {
            x = 0.0;
            cl = true;
        } else if (x >= n - 1) {
            x = n - 1;
            cl = true;
        }
        int i = static_cast<int>(std::floor(x));
        if (i > n - 2) i = n - 2;
        if (n == 1) {
            i = 0;
            x = 0.0;
            cl = true;
        }
        p.lo[a] = i;
        p.frac[a] = x - i;
        p.clamped[a] = cl;
    }
    return p;
}

} // namespace

void warp_forward(int dim, const int* extent, const double* image, const double* field, double* out) {
    const std::int64_t n = voxels(dim, extent);
    const int corners = 1 << dim;

#pragma omp parallel for schedule(static)
    for (std::int64_t v = 0; v < n; ++v) {
        int c[3];
        detail::decode(v, dim, extent, c);
        double pos[3];
        for (int a = 0; a < dim; ++a) pos[a] = c[a] + field[a * n + v];
        const InterpPoint p = interp_point(dim, extent, pos);
        double acc = 0.0;
        for (int m = 0; m < corners; ++m) {
            double wgt = 1.0;
            int q[3];
            for (int a = 0; a < dim; ++a) {
                const int hi = (m >> a) & 1;
                wgt *= hi ? p.frac[a] : 1.0 - p.frac[a];
                q[a] = p.lo[a] + (extent[a] == 1 ? 0 : hi);
            }
            acc += wgt * image[detail::encode(dim, extent, q)];
        }
        out[v] = acc;
    }
}

void warp_backward(int dim, const int* extent, const double* image, const double* field,
                   const double* gout, double* gimage, double* gfield) {
    const std::int64_t n = voxels(dim, extent);
    const int corners = 1 << dim;

    if (gfield) {
#pragma omp parallel for schedule(static)
        for (std::int64_t v = 0; v < n; ++v) {
            int c[3];
            detail::decode(v, dim, extent, c);
            double pos[3];
            for (int a = 0; a < dim; ++a) pos[a] = c[a] + field[a * n + v];
            const InterpPoint p = interp_point(dim, extent, pos);
            const double g = gout[v];
            for (int m = 0; m < corners; ++m) {
                int q[3];
                for (int a = 0; a < dim; ++a)
                    q[a] = p.lo[a] + (extent[a] == 1 ? 0 : ((m >> a) & 1));
                const std::int64_t qi = detail::encode(dim, extent, q);
                for (int a = 0; a < dim; ++a) {
                    if (p.clamped[a]) continue;
                    double dw = 1.0;
                    for (int b = 0; b < dim; ++b) {
                        if (b == a) continue;
                        const int hb = (m >> b) & 1;
                        dw *= hb ? p.frac[b] : 1.0 - p.frac[b];
                    }
                    const int ha = (m >> a) & 1;
                    gfield[a * n + v] += (ha ? dw : -dw) * image[qi] * g;
                }
            }
        }
    }

    if (gimage) {
        // Scatter into the moving image; kept serial for determinism.
        for (std::int64_t v = 0; v < n; ++v) {
            int c[3];
            detail::decode(v, dim, extent, c);
            double pos[3];
            for (int a = 0; a < dim; ++a) pos[a] = c[a] + field[a * n + v];
            const InterpPoint p = interp_point(dim, extent, pos);
            const double g = gout[v];
            for (int m = 0; m < corners; ++m) {
                double wgt = 1.0;
                int q[3];
                for (int a = 0; a < dim; ++a) {
                    const int hi = (m >> a) & 1;
                    wgt *= hi ? p.frac[a] : 1.0 - p.frac[a];
                    q[a] = p.lo[a] + (extent[a] == 1 ? 0 : hi);
                }
                gimage[detail::encode(dim, extent, q)] += wgt * g;
            }
        }
    }
}

void shift_forward(int dim, const int* extent, const int* offset, const double* in, double* out) {
    const std::int64_t n = voxels(dim, extent);

#pragma omp parallel for schedule(static)
    for (std::int64_t v = 0; v < n; ++v) {
        int c[3], q[3];
        detail::decode(v, dim, extent, c);
        for (int a = 0; a < dim; ++a) q[a] = clampi(c[a] + offset[a], 0, extent[a] - 1);
        out[v] = in[detail::encode(dim, extent, q)];
    }
}

void shift_backward(int dim, const int* extent, const int* offset, const double* gout, double* gin) {
    const std::int64_t n = voxels(dim, extent);

#pragma omp parallel for schedule(static)
    for (std::int64_t v = 0; v < n; ++v) {
        int c[3];
        detail::decode(v, dim, extent, c);
        int lo[3], hi[3];
        bool empty = false;
        for (int a = 0; a < dim; ++a) {
            clamp_preimage(c[a], offset[a], extent[a], lo[a], hi[a]);
            if (lo[a] > hi[a]) {
                empty = true;
                break;
            }
        }
        if (empty) continue;
        double acc = 0.0;
        int x[3] = {lo[0], dim > 1 ? lo[1] : 0, dim > 2 ? lo[2] : 0};
        for (x[0] = lo[0]; x[0] <= hi[0]; ++x[0])
            for (x[1] = lo[1]; x[1] <= (dim > 1 ? hi[1] : lo[1]); ++x[1])
                for (x[2] = lo[2]; x[2] <= (dim > 2 ? hi[2] : lo[2]); ++x[2])
                    acc += gout[detail::encode(dim, extent, x)];
        gin[v] += acc;
    }
}

void patch_filter_forward(int dim, const int* extent, int radius, const double* w,
                          const double* in, double* out) {
    const std::int64_t n = voxels(dim, extent);
    const int k = 2 * radius + 1;
    const TapTable tt = make_taps(dim, k, radius);

#pragma omp parallel for schedule(static)
    for (std::int64_t v = 0; v < n; ++v) {
        int c[3], q[3];
        detail::decode(v, dim, extent, c);
        double acc = 0.0;
        for (int t = 0; t < tt.count; ++t) {
            for (int a = 0; a < dim; ++a)
                q[a] = clampi(c[a] + tt.delta[t * 3 + a], 0, extent[a] - 1);
            acc += w[t] * in[detail::encode(dim, extent, q)];
        }
        out[v] = acc;
    }
}

void patch_filter_backward(int dim, const int* extent, int radius, const double* w,
                           const double* gout, double* gin) {
    const std::int64_t n = voxels(dim, extent);
    const int k = 2 * radius + 1;
    const TapTable tt = make_taps(dim, k, radius);

#pragma omp parallel for schedule(static)
    for (std::int64_t v = 0; v < n; ++v) {
        int c[3];
        detail::decode(v, dim, extent, c);
        double acc = 0.0;
        for (int t = 0; t < tt.count; ++t) {
            int lo[3], hi[3];
            bool empty = false;
            for (int a = 0; a < dim; ++a) {
                clamp_preimage(c[a], tt.delta[t * 3 + a], extent[a], lo[a], hi[a]);
                if (lo[a] > hi[a]) {
                    empty = true;
                    break;
                }
            }
            if (empty) continue;
            double sub = 0.0;
            int x[3] = {lo[0], dim > 1 ? lo[1] : 0, dim > 2 ? lo[2] : 0};
            for (x[0] = lo[0]; x[0] <= hi[0]; ++x[0])
                for (x[1] = lo[1]; x[1] <= (dim > 1 ? hi[1] : lo[1]); ++x[1])
                    for (x[2] = lo[2]; x[2] <= (dim > 2 ? hi[2] : lo[2]); ++x[2])
                        sub += gout[detail::encode(dim, extent, x)];
            acc += w[t] * sub;
        }
        gin[v] += acc;
    }
}

void upsample2_forward(int dim, const int* in_extent, const double* in, double* out) {
    int out_extent[3] = {1, 1, 1};
    for (int a = 0; a < dim; ++a) out_extent[a] = 2 * in_extent[a];
    const std::int64_t n = voxels(dim, out_extent);

#pragma omp parallel for schedule(static)
    for (std::int64_t v = 0; v < n; ++v) {
        int c[3], q[3];
        detail::decode(v, dim, out_extent, c);
        for (int a = 0; a < dim; ++a) q[a] = c[a] / 2;
        out[v] = in[detail::encode(dim, in_extent, q)];
    }
}

void upsample2_backward(int dim, const int* in_extent, const double* gout, double* gin) {
    int out_extent[3] = {1, 1, 1};
    for (int a = 0; a < dim; ++a) out_extent[a] = 2 * in_extent[a];
    const std::int64_t n = voxels(dim, in_extent);
    const int blocks = 1 << dim;

#pragma omp parallel for schedule(static)
    for (std::int64_t v = 0; v < n; ++v) {
        int c[3];
        detail::decode(v, dim, in_extent, c);
        double acc = 0.0;
        for (int m = 0; m < blocks; ++m) {
            int q[3];
            for (int a = 0; a < dim; ++a) q[a] = 2 * c[a] + ((m >> a) & 1);
            acc += gout[detail::encode(dim, out_extent, q)];
        }
        gin[v] += acc;
    }
}

} // namespace vreg::kernels::openmp
