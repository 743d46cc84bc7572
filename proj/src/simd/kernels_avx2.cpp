// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

// AVX2 variants. Built with -mavx2 -mfma but written with separate multiply
// and add so every elementwise result matches the scalar reference bit for bit.

#include <immintrin.h>

#include <cmath>

#include "vedit/simd/kernels.hpp"
#include "warp_common.hpp"

namespace vedit::simd {
namespace {

constexpr std::size_t kLanes = 8;

void axpby(float a, const float* x, float b, const float* y, float* out, std::size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    const __m256 vb = _mm256_set1_ps(b);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const __m256 ax = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
        const __m256 by = _mm256_mul_ps(vb, _mm256_loadu_ps(y + i));
        _mm256_storeu_ps(out + i, _mm256_add_ps(ax, by));
    }
    scalar().axpby(a, x + i, b, y + i, out + i, n - i);
}

void blend(const float* m, const float* a, const float* b, float* out, std::size_t n) {
    const __m256 one = _mm256_set1_ps(1.0f);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const __m256 vm = _mm256_loadu_ps(m + i);
        const __m256 left = _mm256_mul_ps(_mm256_sub_ps(one, vm), _mm256_loadu_ps(a + i));
        const __m256 right = _mm256_mul_ps(vm, _mm256_loadu_ps(b + i));
        _mm256_storeu_ps(out + i, _mm256_add_ps(left, right));
    }
    scalar().blend(m + i, a + i, b + i, out + i, n - i);
}

void add_scalar(const float* x, float c, float* out, std::size_t n) {
    const __m256 vc = _mm256_set1_ps(c);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(x + i), vc));
    scalar().add_scalar(x + i, c, out + i, n - i);
}

double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot(const float* x, const float* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const __m256 vx = _mm256_loadu_ps(x + i);
        const __m256 vy = _mm256_loadu_ps(y + i);
        const __m256d xl = _mm256_cvtps_pd(_mm256_castps256_ps128(vx));
        const __m256d xh = _mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1));
        const __m256d yl = _mm256_cvtps_pd(_mm256_castps256_ps128(vy));
        const __m256d yh = _mm256_cvtps_pd(_mm256_extractf128_ps(vy, 1));
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(xl, yl));
        acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(xh, yh));
    }
    return hsum(_mm256_add_pd(acc0, acc1)) + scalar().dot(x + i, y + i, n - i);
}

double sq_diff_sum(const float* x, const float* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const __m256 vx = _mm256_loadu_ps(x + i);
        const __m256 vy = _mm256_loadu_ps(y + i);
        const __m256d dl = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_castps256_ps128(vx)),
                                         _mm256_cvtps_pd(_mm256_castps256_ps128(vy)));
        const __m256d dh = _mm256_sub_pd(_mm256_cvtps_pd(_mm256_extractf128_ps(vx, 1)),
                                         _mm256_cvtps_pd(_mm256_extractf128_ps(vy, 1)));
        acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(dl, dl));
        acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(dh, dh));
    }
    return hsum(_mm256_add_pd(acc0, acc1)) + scalar().sq_diff_sum(x + i, y + i, n - i);
}

void magnitude(const float* u, const float* v, float* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const __m256 vu = _mm256_loadu_ps(u + i);
        const __m256 vv = _mm256_loadu_ps(v + i);
        const __m256 s = _mm256_add_ps(_mm256_mul_ps(vu, vu), _mm256_mul_ps(vv, vv));
        _mm256_storeu_ps(out + i, _mm256_sqrt_ps(s));
    }
    scalar().magnitude(u + i, v + i, out + i, n - i);
}

void lk_products(const float* ix, const float* iy, const float* it, float* xx, float* xy, float* yy,
                 float* xt, float* yt, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const __m256 gx = _mm256_loadu_ps(ix + i);
        const __m256 gy = _mm256_loadu_ps(iy + i);
        const __m256 gt = _mm256_loadu_ps(it + i);
        _mm256_storeu_ps(xx + i, _mm256_mul_ps(gx, gx));
        _mm256_storeu_ps(xy + i, _mm256_mul_ps(gx, gy));
        _mm256_storeu_ps(yy + i, _mm256_mul_ps(gy, gy));
        _mm256_storeu_ps(xt + i, _mm256_mul_ps(gx, gt));
        _mm256_storeu_ps(yt + i, _mm256_mul_ps(gy, gt));
    }
    scalar().lk_products(ix + i, iy + i, it + i, xx + i, xy + i, yy + i, xt + i, yt + i, n - i);
}

void lk_solve(const float* sxx, const float* sxy, const float* syy, const float* sxt, const float* syt,
              float reg, float* u, float* v, std::size_t n) {
    const __m256 vreg = _mm256_set1_ps(reg);
    const __m256 min_det = _mm256_set1_ps(kMinDeterminant);
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const __m256 a = _mm256_add_ps(_mm256_loadu_ps(sxx + i), vreg);
        const __m256 c = _mm256_add_ps(_mm256_loadu_ps(syy + i), vreg);
        const __m256 b = _mm256_loadu_ps(sxy + i);
        const __m256 tx = _mm256_loadu_ps(sxt + i);
        const __m256 ty = _mm256_loadu_ps(syt + i);
        const __m256 det = _mm256_sub_ps(_mm256_mul_ps(a, c), _mm256_mul_ps(b, b));
        const __m256 ok = _mm256_cmp_ps(det, min_det, _CMP_GT_OQ);
        const __m256 du = _mm256_div_ps(_mm256_sub_ps(_mm256_mul_ps(b, ty), _mm256_mul_ps(c, tx)), det);
        const __m256 dv = _mm256_div_ps(_mm256_sub_ps(_mm256_mul_ps(b, tx), _mm256_mul_ps(a, ty)), det);
        const __m256 vu = _mm256_loadu_ps(u + i);
        const __m256 vv = _mm256_loadu_ps(v + i);
        _mm256_storeu_ps(u + i, _mm256_blendv_ps(vu, _mm256_add_ps(vu, du), ok));
        _mm256_storeu_ps(v + i, _mm256_blendv_ps(vv, _mm256_add_ps(vv, dv), ok));
    }
    scalar().lk_solve(sxx + i, sxy + i, syy + i, sxt + i, syt + i, reg, u + i, v + i, n - i);
}

void accumulate(float* acc, const float* add, const float* sub, std::size_t n) {
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
        const __m256 d = _mm256_sub_ps(_mm256_loadu_ps(add + i), _mm256_loadu_ps(sub + i));
        _mm256_storeu_ps(acc + i, _mm256_add_ps(_mm256_loadu_ps(acc + i), d));
    }
    scalar().accumulate(acc + i, add + i, sub + i, n - i);
}

void warp_row(const WarpRowArgs& a) {
    const __m256 zero = _mm256_setzero_ps();
    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 max_x = _mm256_set1_ps(static_cast<float>(a.width - 1));
    const __m256 max_y = _mm256_set1_ps(static_cast<float>(a.height - 1));
    const __m256 row = _mm256_set1_ps(static_cast<float>(a.y));
    const __m256i last_col = _mm256_set1_epi32(a.width - 1);
    const __m256i last_row = _mm256_set1_epi32(a.height - 1);
    const __m256i stride = _mm256_set1_epi32(a.width);
    const __m256i one_i = _mm256_set1_epi32(1);
    const __m256 lane = _mm256_setr_ps(0, 1, 2, 3, 4, 5, 6, 7);
    const __m256 lo = _mm256_set1_ps(-kEdgeSlack);
    const __m256 hi_x = _mm256_set1_ps(static_cast<float>(a.width - 1) + kEdgeSlack);
    const __m256 hi_y = _mm256_set1_ps(static_cast<float>(a.height - 1) + kEdgeSlack);
    const __m256 keep_all = a.clamp ? _mm256_castsi256_ps(_mm256_set1_epi32(-1)) : zero;

    int x = a.x_begin;
    for (; x + static_cast<int>(kLanes) <= a.width; x += kLanes) {
        const __m256 xs = _mm256_add_ps(_mm256_add_ps(_mm256_set1_ps(static_cast<float>(x)), lane),
                                        _mm256_loadu_ps(a.u + x));
        const __m256 ys = _mm256_add_ps(row, _mm256_loadu_ps(a.v + x));
        const __m256 inside = _mm256_and_ps(
            _mm256_and_ps(_mm256_cmp_ps(xs, lo, _CMP_GE_OQ), _mm256_cmp_ps(xs, hi_x, _CMP_LE_OQ)),
            _mm256_and_ps(_mm256_cmp_ps(ys, lo, _CMP_GE_OQ), _mm256_cmp_ps(ys, hi_y, _CMP_LE_OQ)));

        const __m256 sx = _mm256_min_ps(_mm256_max_ps(xs, zero), max_x);
        const __m256 sy = _mm256_min_ps(_mm256_max_ps(ys, zero), max_y);
        const __m256 x0f = _mm256_floor_ps(sx);
        const __m256 y0f = _mm256_floor_ps(sy);
        const __m256 fx = _mm256_sub_ps(sx, x0f);
        const __m256 fy = _mm256_sub_ps(sy, y0f);
        const __m256i x0 = _mm256_cvttps_epi32(x0f);
        const __m256i y0 = _mm256_cvttps_epi32(y0f);
        const __m256i x1 = _mm256_min_epi32(_mm256_add_epi32(x0, one_i), last_col);
        const __m256i y1 = _mm256_min_epi32(_mm256_add_epi32(y0, one_i), last_row);
        const __m256i r0 = _mm256_mullo_epi32(y0, stride);
        const __m256i r1 = _mm256_mullo_epi32(y1, stride);
        const __m256 p00 = _mm256_i32gather_ps(a.plane, _mm256_add_epi32(r0, x0), 4);
        const __m256 p01 = _mm256_i32gather_ps(a.plane, _mm256_add_epi32(r0, x1), 4);
        const __m256 p10 = _mm256_i32gather_ps(a.plane, _mm256_add_epi32(r1, x0), 4);
        const __m256 p11 = _mm256_i32gather_ps(a.plane, _mm256_add_epi32(r1, x1), 4);
        const __m256 wx = _mm256_sub_ps(one, fx);
        const __m256 top = _mm256_add_ps(_mm256_mul_ps(wx, p00), _mm256_mul_ps(fx, p01));
        const __m256 bottom = _mm256_add_ps(_mm256_mul_ps(wx, p10), _mm256_mul_ps(fx, p11));
        const __m256 value =
            _mm256_add_ps(_mm256_mul_ps(_mm256_sub_ps(one, fy), top), _mm256_mul_ps(fy, bottom));

        _mm256_storeu_ps(a.out + x, _mm256_and_ps(value, _mm256_or_ps(inside, keep_all)));
        const int bits = _mm256_movemask_ps(inside);
        for (int k = 0; k < static_cast<int>(kLanes); ++k) a.valid[x + k] = static_cast<std::uint8_t>((bits >> k) & 1);
    }
    if (x < a.width) {
        WarpRowArgs tail = a;
        tail.x_begin = x;
        scalar().warp_row(tail);
    }
}

constexpr Kernels kAvx2{
    "avx2", axpby, blend, add_scalar, dot, sq_diff_sum, magnitude, lk_products, lk_solve, accumulate, warp_row,
};

}  // namespace

const Kernels* avx2_table() noexcept { return &kAvx2; }

}  // namespace vedit::simd
