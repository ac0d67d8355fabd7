#pragma once

#include <cstdint>

namespace vreg::kernels {

// The compute-heavy inner loops exist twice: an OpenMP-parallel version used
// by default and a plain serial reference kept for testing and benchmarking.
// Parallel loops only ever write disjoint output elements and keep the same
// per-element accumulation order as a fixed-order loop, so results do not
// depend on the thread count. Gradient kernels accumulate into their output
// buffers; callers zero them when that is what they want.
enum class Backend { serial, openmp };

Backend active_backend();
void set_backend(Backend b);
bool openmp_compiled();

struct ConvDims {
    int dim = 2;      // spatial rank, 2 or 3
    int cin = 1;
    int cout = 1;
    int k = 3;        // odd per-axis kernel extent
    int stride = 1;   // 1 or 2
    bool same = true; // zero 'same' padding, else valid
    int in[3] = {1, 1, 1};
    int out[3] = {1, 1, 1};
    int pad = 0;

    std::int64_t in_voxels() const;
    std::int64_t out_voxels() const;
    std::int64_t taps() const;
};

// Validates arguments and derives output extents:
// same padding: out = ceil(in / stride); valid: out = (in - k) / stride + 1.
ConvDims conv_dims(int dim, int cin, int cout, int k, int stride, bool same, const int* in_extent);

namespace serial {
void conv_forward(const ConvDims& d, const double* in, const double* w, double* out);
void conv_backward_input(const ConvDims& d, const double* w, const double* gout, double* gin);
void conv_backward_kernels(const ConvDims& d, const double* in, const double* gout, double* gw);

void warp_forward(int dim, const int* extent, const double* image, const double* field, double* out);
void warp_backward(int dim, const int* extent, const double* image, const double* field,
                   const double* gout, double* gimage, double* gfield);

void shift_forward(int dim, const int* extent, const int* offset, const double* in, double* out);
void shift_backward(int dim, const int* extent, const int* offset, const double* gout, double* gin);

void patch_filter_forward(int dim, const int* extent, int radius, const double* w,
                          const double* in, double* out);
void patch_filter_backward(int dim, const int* extent, int radius, const double* w,
                           const double* gout, double* gin);

void upsample2_forward(int dim, const int* in_extent, const double* in, double* out);
void upsample2_backward(int dim, const int* in_extent, const double* gout, double* gin);
} // namespace serial

namespace openmp {
void conv_forward(const ConvDims& d, const double* in, const double* w, double* out);
void conv_backward_input(const ConvDims& d, const double* w, const double* gout, double* gin);
void conv_backward_kernels(const ConvDims& d, const double* in, const double* gout, double* gw);

void warp_forward(int dim, const int* extent, const double* image, const double* field, double* out);
void warp_backward(int dim, const int* extent, const double* image, const double* field,
                   const double* gout, double* gimage, double* gfield);

void shift_forward(int dim, const int* extent, const int* offset, const double* in, double* out);
void shift_backward(int dim, const int* extent, const int* offset, const double* gout, double* gin);

void patch_filter_forward(int dim, const int* extent, int radius, const double* w,
                          const double* in, double* out);
void patch_filter_backward(int dim, const int* extent, int radius, const double* w,
                           const double* gout, double* gin);

void upsample2_forward(int dim, const int* in_extent, const double* in, double* out);
void upsample2_backward(int dim, const int* in_extent, const double* gout, double* gin);
} // namespace openmp

// Dispatching entry points used by the autodiff layer.
void conv_forward(const ConvDims& d, const double* in, const double* w, double* out);
void conv_backward_input(const ConvDims& d, const double* w, const double* gout, double* gin);
void conv_backward_kernels(const ConvDims& d, const double* in, const double* gout, double* gw);
void warp_forward(int dim, const int* extent, const double* image, const double* field, double* out);
void warp_backward(int dim, const int* extent, const double* image, const double* field,
                   const double* gout, double* gimage, double* gfield);
void shift_forward(int dim, const int* extent, const int* offset, const double* in, double* out);
void shift_backward(int dim, const int* extent, const int* offset, const double* gout, double* gin);
void patch_filter_forward(int dim, const int* extent, int radius, const double* w,
                          const double* in, double* out);
void patch_filter_backward(int dim, const int* extent, int radius, const double* w,
                           const double* gout, double* gin);
void upsample2_forward(int dim, const int* in_extent, const double* in, double* out);
void upsample2_backward(int dim, const int* in_extent, const double* gout, double* gin);

} // namespace vreg::kernels
