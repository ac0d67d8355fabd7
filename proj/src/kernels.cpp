#include <atomic>

#include "kernels_common.hpp"

namespace vreg::kernels {

namespace {
std::atomic<Backend> g_backend{Backend::openmp};
}

Backend active_backend() { return g_backend.load(std::memory_order_relaxed); }
void set_backend(Backend b) { g_backend.store(b, std::memory_order_relaxed); }

bool openmp_compiled() {
#ifdef _OPENMP
    return true;
#else
    return false;
#endif
}

std::int64_t ConvDims::in_voxels() const { return detail::voxels(dim, in); }
std::int64_t ConvDims::out_voxels() const { return detail::voxels(dim, out); }
std::int64_t ConvDims::taps() const {
    std::int64_t t = 1;
    for (int a = 0; a < dim; ++a) t *= k;
    return t;
}

ConvDims conv_dims(int dim, int cin, int cout, int k, int stride, bool same, const int* in_extent) {
    if (dim != 2 && dim != 3) throw ShapeError("conv: spatial rank must be 2 or 3");
    if (cin < 1 || cout < 1) throw ShapeError("conv: channel counts must be positive");
    if (k < 1 || k % 2 == 0) throw ShapeError("conv: kernel extent must be odd");
    if (stride != 1 && stride != 2) throw ShapeError("conv: stride must be 1 or 2");
    ConvDims d;
    d.dim = dim;
    d.cin = cin;
    d.cout = cout;
    d.k = k;
    d.stride = stride;
    d.same = same;
    d.pad = same ? (k - 1) / 2 : 0;
    for (int a = 0; a < dim; ++a) {
        const int n = in_extent[a];
        if (n < 1) throw ShapeError("conv: input extents must be positive");
        d.in[a] = n;
        if (same) {
            d.out[a] = (n + stride - 1) / stride;
        } else {
            if (n < k) throw ShapeError("conv: input smaller than kernel with valid padding");
            d.out[a] = (n - k) / stride + 1;
        }
    }
    return d;
}

#define VREG_DISPATCH(fn, ...)                           \
    do {                                                 \
        if (active_backend() == Backend::serial)         \
            serial::fn(__VA_ARGS__);                     \
        else                                             \
            openmp::fn(__VA_ARGS__);                     \
    } while (0)

void conv_forward(const ConvDims& d, const double* in, const double* w, double* out) {
    VREG_DISPATCH(conv_forward, d, in, w, out);
}
void conv_backward_input(const ConvDims& d, const double* w, const double* gout, double* gin) {
    VREG_DISPATCH(conv_backward_input, d, w, gout, gin);
}
void conv_backward_kernels(const ConvDims& d, const double* in, const double* gout, double* gw) {
    VREG_DISPATCH(conv_backward_kernels, d, in, gout, gw);
}
void warp_forward(int dim, const int* extent, const double* image, const double* field, double* out) {
    VREG_DISPATCH(warp_forward, dim, extent, image, field, out);
}
void warp_backward(int dim, const int* extent, const double* image, const double* field,
                   const double* gout, double* gimage, double* gfield) {
    VREG_DISPATCH(warp_backward, dim, extent, image, field, gout, gimage, gfield);
}
void shift_forward(int dim, const int* extent, const int* offset, const double* in, double* out) {
    VREG_DISPATCH(shift_forward, dim, extent, offset, in, out);
}
void shift_backward(int dim, const int* extent, const int* offset, const double* gout, double* gin) {
    VREG_DISPATCH(shift_backward, dim, extent, offset, gout, gin);
}
void patch_filter_forward(int dim, const int* extent, int radius, const double* w,
                          const double* in, double* out) {
    VREG_DISPATCH(patch_filter_forward, dim, extent, radius, w, in, out);
}
void patch_filter_backward(int dim, const int* extent, int radius, const double* w,
                           const double* gout, double* gin) {
    VREG_DISPATCH(patch_filter_backward, dim, extent, radius, w, gout, gin);
}
void upsample2_forward(int dim, const int* in_extent, const double* in, double* out) {
    VREG_DISPATCH(upsample2_forward, dim, in_extent, in, out);
}
void upsample2_backward(int dim, const int* in_extent, const double* gout, double* gin) {
    VREG_DISPATCH(upsample2_backward, dim, in_extent, gout, gin);
}

#undef VREG_DISPATCH

} // namespace vreg::kernels
