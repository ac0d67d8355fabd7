#pragma once

#include <cstdint>

#include "vreg/errors.hpp"
#include "vreg/kernels.hpp"

// Shared index helpers for the kernel implementations.
namespace vreg::kernels::detail {

inline std::int64_t voxels(int dim, const int* extent) {
    std::int64_t n = 1;
    for (int a = 0; a < dim; ++a) n *= extent[a];
    return n;
}

inline void decode(std::int64_t flat, int dim, const int* extent, int* c) {
    for (int a = dim - 1; a >= 0; --a) {
        c[a] = static_cast<int>(flat % extent[a]);
        flat /= extent[a];
    }
}

inline std::int64_t encode(int dim, const int* extent, const int* c) {
    std::int64_t flat = 0;
    for (int a = 0; a < dim; ++a) flat = flat * extent[a] + c[a];
    return flat;
}

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Preimage of a clamped shift along one axis: the set of source indices x
// with clamp(x + q, 0, n-1) == t is the interval returned here (possibly
// empty once clipped to [0, n-1]).
inline void clamp_preimage(int t, int q, int n, int& lo, int& hi) {
    lo = (t == 0) ? 0 : t - q;
    hi = (t == n - 1) ? n - 1 : t - q;
    if (lo < 0) lo = 0;
    if (hi > n - 1) hi = n - 1;
}

} // namespace vreg::kernels::detail
