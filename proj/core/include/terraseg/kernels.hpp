#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace terraseg::kernels {

/// c[M x N] (+)= a[M x K] * b[K x N], row-major with explicit leading
/// dimensions. Blocked so a handful of output rows and a slice of b stay in
/// cache; for fixed (i, j) the k contributions are always added in ascending
/// order, so results are bitwise reproducible regardless of block sizes.
template <class T>
void gemm(const T* a, std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc,
          std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
    constexpr std::size_t kRowBlock = 8;
    constexpr std::size_t kColBlock = 480;
    for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
        const std::size_t i1 = std::min(m, i0 + kRowBlock);
        for (std::size_t j0 = 0; j0 < n; j0 += kColBlock) {
            const std::size_t j1 = std::min(n, j0 + kColBlock);
            const std::size_t jn = j1 - j0;
            if (!accumulate) {
                for (std::size_t i = i0; i < i1; ++i) std::fill(c + i * ldc + j0, c + i * ldc + j1, T(0));
            }
            for (std::size_t kk = 0; kk < k; ++kk) {
                const T* brow = b + kk * ldb + j0;
                for (std::size_t i = i0; i < i1; ++i) {
                    const T aik = a[i * lda + kk];
                    T* crow = c + i * ldc + j0;
                    for (std::size_t j = 0; j < jn; ++j) crow[j] += aik * brow[j];
                }
            }
        }
    }
}

/// Dot product with a fixed 16-lane accumulator layout. The lane structure is
/// part of the algorithm (not left to the compiler), so the summation order --
/// and therefore the floating-point result -- is identical however the loop is
/// vectorised.
template <class T>
T dot(const T* a, const T* b, std::size_t n) {
    constexpr std::size_t kLanes = 16;
    T acc[kLanes] = {};
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        for (std::size_t l = 0; l < kLanes; ++l) acc[l] += a[i + l] * b[i + l];
    }
    for (std::size_t l = 0; i < n; ++i, ++l) acc[l] += a[i] * b[i];
    T total = T(0);
    for (std::size_t l = 0; l < kLanes; ++l) total += acc[l];
    return total;
}

/// dst[N x M] = transpose(src[M x N]), 32x32 blocked.
template <class T>
void transpose_2d(const T* src, T* dst, std::size_t m, std::size_t n) {
    constexpr std::size_t kB = 32;
    for (std::size_t i0 = 0; i0 < m; i0 += kB) {
        const std::size_t i1 = std::min(m, i0 + kB);
        for (std::size_t j0 = 0; j0 < n; j0 += kB) {
            const std::size_t j1 = std::min(n, j0 + kB);
            for (std::size_t i = i0; i < i1; ++i)
                for (std::size_t j = j0; j < j1; ++j) dst[j * m + i] = src[i * n + j];
        }
    }
}

/// Geometry shared by the image-to-column expansions below.
struct ConvGeom {
    std::size_t in_c, in_h, in_w;
    std::size_t kernel, stride, pad, dilation;
    std::size_t out_h, out_w;
};

/// Fills col[(in_c*kernel^2) x (rows*out_w)] for output rows [row0, row0+rows):
/// tap-major layout, one row per (channel, ky, kx) tap. Out-of-image taps are
/// zero.
template <class T>
void im2col_taps(const ConvGeom& g, const T* x, std::size_t row0, std::size_t rows, T* col) {
    const std::size_t pixels = rows * g.out_w;
    const long ih = static_cast<long>(g.in_h), iw = static_cast<long>(g.in_w);
    std::size_t t = 0;
    for (std::size_t ci = 0; ci < g.in_c; ++ci) {
        const T* plane = x + ci * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx, ++t) {
                T* dst = col + t * pixels;
                for (std::size_t r = 0; r < rows; ++r) {
                    const long iy = static_cast<long>((row0 + r) * g.stride + ky * g.dilation) -
                                    static_cast<long>(g.pad);
                    T* drow = dst + r * g.out_w;
                    if (iy < 0 || iy >= ih) {
                        std::fill(drow, drow + g.out_w, T(0));
                        continue;
                    }
                    const T* srow = plane + static_cast<std::size_t>(iy) * g.in_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) -
                                        static_cast<long>(g.pad);
                        drow[ox] = (ix < 0 || ix >= iw) ? T(0) : srow[ix];
                    }
                }
            }
        }
    }
}

/// Same expansion but pixel-major: col[(rows*out_w) x (in_c*kernel^2)].
template <class T>
void im2col_pixels(const ConvGeom& g, const T* x, std::size_t row0, std::size_t rows, T* col) {
    const std::size_t taps = g.in_c * g.kernel * g.kernel;
    const long ih = static_cast<long>(g.in_h), iw = static_cast<long>(g.in_w);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            T* drow = col + (r * g.out_w + ox) * taps;
            std::size_t t = 0;
            for (std::size_t ci = 0; ci < g.in_c; ++ci) {
                const T* plane = x + ci * g.in_h * g.in_w;
                for (std::size_t ky = 0; ky < g.kernel; ++ky) {
                    const long iy = static_cast<long>((row0 + r) * g.stride + ky * g.dilation) -
                                    static_cast<long>(g.pad);
                    for (std::size_t kx = 0; kx < g.kernel; ++kx, ++t) {
                        const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) -
                                        static_cast<long>(g.pad);
                        drow[t] = (iy < 0 || iy >= ih || ix < 0 || ix >= iw)
                                      ? T(0)
                                      : plane[static_cast<std::size_t>(iy) * g.in_w +
                                              static_cast<std::size_t>(ix)];
                    }
                }
            }
        }
    }
}

/// Scatter-add of a tap-major column gradient back into the input gradient.
template <class T>
void col2im_taps(const ConvGeom& g, const T* col, std::size_t row0, std::size_t rows, T* dx) {
    const std::size_t pixels = rows * g.out_w;
    const long ih = static_cast<long>(g.in_h), iw = static_cast<long>(g.in_w);
    std::size_t t = 0;
    for (std::size_t ci = 0; ci < g.in_c; ++ci) {
        T* plane = dx + ci * g.in_h * g.in_w;
        for (std::size_t ky = 0; ky < g.kernel; ++ky) {
            for (std::size_t kx = 0; kx < g.kernel; ++kx, ++t) {
                const T* src = col + t * pixels;
                for (std::size_t r = 0; r < rows; ++r) {
                    const long iy = static_cast<long>((row0 + r) * g.stride + ky * g.dilation) -
                                    static_cast<long>(g.pad);
                    if (iy < 0 || iy >= ih) continue;
                    T* prow = plane + static_cast<std::size_t>(iy) * g.in_w;
                    const T* srow = src + r * g.out_w;
                    for (std::size_t ox = 0; ox < g.out_w; ++ox) {
                        const long ix = static_cast<long>(ox * g.stride + kx * g.dilation) -
                                        static_cast<long>(g.pad);
                        if (ix >= 0 && ix < iw) prow[ix] += srow[ox];
                    }
                }
            }
        }
    }
}

/// Precomputed 1-D bilinear resampling weights: output index i reads source
/// elements lo[i] and hi[i] blended by frac[i].
template <class T>
struct ResizeTable {
    std::vector<std::size_t> lo, hi;
    std::vector<T> frac;
};

/// Half-pixel source coordinates (align_corners = false), clamped to the
/// valid range before splitting into floor index and fraction.
template <class T>
ResizeTable<T> resize_table(std::size_t in, std::size_t out) {
    ResizeTable<T> t;
    t.lo.resize(out);
    t.hi.resize(out);
    t.frac.resize(out);
    const double ratio = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
        double s = (static_cast<double>(i) + 0.5) * ratio - 0.5;
        s = std::min(std::max(s, 0.0), static_cast<double>(in - 1));
        const std::size_t lo = static_cast<std::size_t>(s);
        t.lo[i] = lo;
        t.hi[i] = std::min(lo + 1, in - 1);
        t.frac[i] = static_cast<T>(s - static_cast<double>(lo));
    }
    return t;
}

/// Number of output rows per strip so the column buffer stays within ~16 MB
/// of floats (respects the small-footprint target while keeping GEMM calls
/// large enough to run at full speed).
inline std::size_t strip_rows(const ConvGeom& g) {
    const std::size_t taps = g.in_c * g.kernel * g.kernel;
    const std::size_t budget = std::size_t(4) << 20;  // elements
    std::size_t rows = budget / std::max<std::size_t>(1, taps * g.out_w);
    return std::clamp<std::size_t>(rows, 1, g.out_h);
}

}  // namespace terraseg::kernels
