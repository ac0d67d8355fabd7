#include <cmath>

#include "kernels_common.hpp"

// Serial reference kernels. These are deliberately naive transcriptions of
// the math (scatter form for adjoints) and serve as the ground truth the
// OpenMP versions are tested against.
namespace vreg::kernels::serial {

using detail::clampi;
using detail::voxels;

void conv_forward(const ConvDims& d, const double* in, const double* w, double* out) {
    const std::int64_t nin = d.in_voxels();
    const std::int64_t nout = d.out_voxels();
    const std::int64_t taps = d.taps();
    const int kz = d.dim == 3 ? d.k : 1;
    const int oz = d.dim == 3 ? d.out[2] : 1;
    const int ez = d.dim == 3 ? d.in[2] : 1;
    for (int co = 0; co < d.cout; ++co) {
        for (int y0 = 0; y0 < d.out[0]; ++y0)
            for (int y1 = 0; y1 < d.out[1]; ++y1)
                for (int y2 = 0; y2 < oz; ++y2) {
                    double acc = 0.0;
                    for (int ci = 0; ci < d.cin; ++ci)
                        for (int t0 = 0; t0 < d.k; ++t0)
                            for (int t1 = 0; t1 < d.k; ++t1)
                                for (int t2 = 0; t2 < kz; ++t2) {
                                    const int x0 = y0 * d.stride + t0 - d.pad;
                                    const int x1 = y1 * d.stride + t1 - d.pad;
                                    const int x2 = d.dim == 3 ? y2 * d.stride + t2 - d.pad : 0;
                                    if (x0 < 0 || x0 >= d.in[0] || x1 < 0 || x1 >= d.in[1] ||
                                        x2 < 0 || x2 >= ez)
                                        continue;
                                    const std::int64_t xi =
                                        (static_cast<std::int64_t>(x0) * d.in[1] + x1) * ez + x2;
                                    const std::int64_t ti =
                                        (static_cast<std::int64_t>(t0) * d.k + t1) * kz + t2;
                                    acc += w[(static_cast<std::int64_t>(co) * d.cin + ci) * taps + ti] *
                                           in[ci * nin + xi];
                                }
                    const std::int64_t yi = (static_cast<std::int64_t>(y0) * d.out[1] + y1) * oz + y2;
                    out[co * nout + yi] = acc;
                }
    }
}

void conv_backward_input(const ConvDims& d, const double* w, const double* gout, double* gin) {
    const std::int64_t nin = d.in_voxels();
    const std::int64_t nout = d.out_voxels();
    const std::int64_t taps = d.taps();
    const int kz = d.dim == 3 ? d.k : 1;
    const int oz = d.dim == 3 ? d.out[2] : 1;
    const int ez = d.dim == 3 ? d.in[2] : 1;
    for (int co = 0; co < d.cout; ++co)
        for (int y0 = 0; y0 < d.out[0]; ++y0)
            for (int y1 = 0; y1 < d.out[1]; ++y1)
                for (int y2 = 0; y2 < oz; ++y2) {
                    const std::int64_t yi = (static_cast<std::int64_t>(y0) * d.out[1] + y1) * oz + y2;
                    const double g = gout[co * nout + yi];
                    for (int ci = 0; ci < d.cin; ++ci)
                        for (int t0 = 0; t0 < d.k; ++t0)
                            for (int t1 = 0; t1 < d.k; ++t1)
                                for (int t2 = 0; t2 < kz; ++t2) {
                                    const int x0 = y0 * d.stride + t0 - d.pad;
                                    const int x1 = y1 * d.stride + t1 - d.pad;
                                    const int x2 = d.dim == 3 ? y2 * d.stride + t2 - d.pad : 0;
                                    if (x0 < 0 || x0 >= d.in[0] || x1 < 0 || x1 >= d.in[1] ||
                                        x2 < 0 || x2 >= ez)
                                        continue;
                                    const std::int64_t xi =
                                        (static_cast<std::int64_t>(x0) * d.in[1] + x1) * ez + x2;
                                    const std::int64_t ti =
                                        (static_cast<std::int64_t>(t0) * d.k + t1) * kz + t2;
                                    gin[ci * nin + xi] +=
                                        w[(static_cast<std::int64_t>(co) * d.cin + ci) * taps + ti] * g;
                                }
                }
}

void conv_backward_kernels(const ConvDims& d, const double* in, const double* gout, double* gw) {
    const std::int64_t nin = d.in_voxels();
    const std::int64_t nout = d.out_voxels();
    const std::int64_t taps = d.taps();
    const int kz = d.dim == 3 ? d.k : 1;
    const int oz = d.dim == 3 ? d.out[2] : 1;
    const int ez = d.dim == 3 ? d.in[2] : 1;
    for (int co = 0; co < d.cout; ++co)
        for (int y0 = 0; y0 < d.out[0]; ++y0)
            for (int y1 = 0; y1 < d.out[1]; ++y1)
                for (int y2 = 0; y2 < oz; ++y2) {
                    const std::int64_t yi = (static_cast<std::int64_t>(y0) * d.out[1] + y1) * oz + y2;
                    const double g = gout[co * nout + yi];
                    for (int ci = 0; ci < d.cin; ++ci)
                        for (int t0 = 0; t0 < d.k; ++t0)
                            for (int t1 = 0; t1 < d.k; ++t1)
                                for (int t2 = 0; t2 < kz; ++t2) {
                                    const int x0 = y0 * d.stride + t0 - d.pad;
                                    const int x1 = y1 * d.stride + t1 - d.pad;
                                    const int x2 = d.dim == 3 ? y2 * d.stride + t2 - d.pad : 0;
                                    if (x0 < 0 || x0 >= d.in[0] || x1 < 0 || x1 >= d.in[1] ||
                                        x2 < 0 || x2 >= ez)
                                        continue;
                                    const std::int64_t xi =
                                        (static_cast<std::int64_t>(x0) * d.in[1] + x1) * ez + x2;
                                    const std::int64_t ti =
                                        (static_cast<std::int64_t>(t0) * d.k + t1) * kz + t2;
                                    gw[(static_cast<std::int64_t>(co) * d.cin + ci) * taps + ti] +=
                                        in[ci * nin + xi] * g;
                                }
                }
}

namespace {

// Multi-linear interpolation state at one sample position.
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
        if (i > n - 2) i = n - 2; // keeps i+1 valid; n==1 handled below
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
    int c[3];
    for (std::int64_t v = 0; v < n; ++v) {
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
    int c[3];
    for (std::int64_t v = 0; v < n; ++v) {
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
            const std::int64_t qi = detail::encode(dim, extent, q);
            if (gimage) gimage[qi] += wgt * g;
            if (gfield) {
                // d out / d pos_a: replace the factor for axis a by +-1.
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
}

void shift_forward(int dim, const int* extent, const int* offset, const double* in, double* out) {
    const std::int64_t n = voxels(dim, extent);
    int c[3], q[3];
    for (std::int64_t v = 0; v < n; ++v) {
        detail::decode(v, dim, extent, c);
        for (int a = 0; a < dim; ++a) q[a] = clampi(c[a] + offset[a], 0, extent[a] - 1);
        out[v] = in[detail::encode(dim, extent, q)];
    }
}

void shift_backward(int dim, const int* extent, const int* offset, const double* gout, double* gin) {
    const std::int64_t n = voxels(dim, extent);
    int c[3], q[3];
    for (std::int64_t v = 0; v < n; ++v) {
        detail::decode(v, dim, extent, c);
        for (int a = 0; a < dim; ++a) q[a] = clampi(c[a] + offset[a], 0, extent[a] - 1);
        gin[detail::encode(dim, extent, q)] += gout[v];
    }
}

void patch_filter_forward(int dim, const int* extent, int radius, const double* w,
                          const double* in, double* out) {
    const std::int64_t n = voxels(dim, extent);
    const int k = 2 * radius + 1;
    const int kz = dim == 3 ? k : 1;
    int c[3], q[3];
    for (std::int64_t v = 0; v < n; ++v) {
        detail::decode(v, dim, extent, c);
        double acc = 0.0;
        for (int t0 = 0; t0 < k; ++t0)
            for (int t1 = 0; t1 < k; ++t1)
                for (int t2 = 0; t2 < kz; ++t2) {
                    q[0] = clampi(c[0] + t0 - radius, 0, extent[0] - 1);
                    q[1] = clampi(c[1] + t1 - radius, 0, extent[1] - 1);
                    if (dim == 3) q[2] = clampi(c[2] + t2 - radius, 0, extent[2] - 1);
                    const std::int64_t ti = (static_cast<std::int64_t>(t0) * k + t1) * kz + t2;
                    acc += w[ti] * in[detail::encode(dim, extent, q)];
                }
        out[v] = acc;
    }
}

void patch_filter_backward(int dim, const int* extent, int radius, const double* w,
                           const double* gout, double* gin) {
    const std::int64_t n = voxels(dim, extent);
    const int k = 2 * radius + 1;
    const int kz = dim == 3 ? k : 1;
    int c[3], q[3];
    for (std::int64_t v = 0; v < n; ++v) {
        detail::decode(v, dim, extent, c);
        const double g = gout[v];
        for (int t0 = 0; t0 < k; ++t0)
            for (int t1 = 0; t1 < k; ++t1)
                for (int t2 = 0; t2 < kz; ++t2) {
                    q[0] = clampi(c[0] + t0 - radius, 0, extent[0] - 1);
                    q[1] = clampi(c[1] + t1 - radius, 0, extent[1] - 1);
                    if (dim == 3) q[2] = clampi(c[2] + t2 - radius, 0, extent[2] - 1);
                    const std::int64_t ti = (static_cast<std::int64_t>(t0) * k + t1) * kz + t2;
                    gin[detail::encode(dim, extent, q)] += w[ti] * g;
                }
    }
}

void upsample2_forward(int dim, const int* in_extent, const double* in, double* out) {
    int out_extent[3];
    for (int a = 0; a < dim; ++a) out_extent[a] = 2 * in_extent[a];
    const std::int64_t n = voxels(dim, out_extent);
    int c[3], q[3];
    for (std::int64_t v = 0; v < n; ++v) {
        detail::decode(v, dim, out_extent, c);
        for (int a = 0; a < dim; ++a) q[a] = c[a] / 2;
        out[v] = in[detail::encode(dim, in_extent, q)];
    }
}

void upsample2_backward(int dim, const int* in_extent, const double* gout, double* gin) {
    int out_extent[3];
    for (int a = 0; a < dim; ++a) out_extent[a] = 2 * in_extent[a];
    const std::int64_t n = voxels(dim, out_extent);
    int c[3], q[3];
    for (std::int64_t v = 0; v < n; ++v) {
        detail::decode(v, dim, out_extent, c);
        for (int a = 0; a < dim; ++a) q[a] = c[a] / 2;
        gin[detail::encode(dim, in_extent, q)] += gout[v];
    }
}

} // namespace vreg::kernels::serial
