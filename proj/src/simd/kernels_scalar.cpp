// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vedit/simd/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "warp_common.hpp"

namespace vedit::simd {
namespace {

void axpby(float a, const float* x, float b, const float* y, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i] + b * y[i];
}

void blend(const float* m, const float* a, const float* b, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = (1.0f - m[i]) * a[i] + m[i] * b[i];
}

void add_scalar(const float* x, float c, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + c;
}

double dot(const float* x, const float* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(x[i]) * static_cast<double>(y[i]);
    return acc;
}

double sq_diff_sum(const float* x, const float* y, std::size_t n) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
        acc += d * d;
    }
    return acc;
}

void magnitude(const float* u, const float* v, float* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(u[i] * u[i] + v[i] * v[i]);
}

void lk_products(const float* ix, const float* iy, const float* it, float* xx, float* xy, float* yy,
                 float* xt, float* yt, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        xx[i] = ix[i] * ix[i];
        xy[i] = ix[i] * iy[i];
        yy[i] = iy[i] * iy[i];
        xt[i] = ix[i] * it[i];
        yt[i] = iy[i] * it[i];
    }
}

void lk_solve(const float* sxx, const float* sxy, const float* syy, const float* sxt, const float* syt,
              float reg, float* u, float* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const float a = sxx[i] + reg;
        const float c = syy[i] + reg;
        const float b = sxy[i];
        const float det = a * c - b * b;
        if (det > kMinDeterminant) {
            const float du = (b * syt[i] - c * sxt[i]) / det;
            const float dv = (b * sxt[i] - a * syt[i]) / det;
            u[i] = u[i] + du;
            v[i] = v[i] + dv;
        }
    }
}

void accumulate(float* acc, const float* add, const float* sub, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) acc[i] = acc[i] + (add[i] - sub[i]);
}

void warp_row(const WarpRowArgs& a) {
    const float max_x = static_cast<float>(a.width - 1);
    const float max_y = static_cast<float>(a.height - 1);
    const float fy_row = static_cast<float>(a.y);
    for (int x = a.x_begin; x < a.width; ++x) {
        float sx = static_cast<float>(x) + a.u[x];
        float sy = fy_row + a.v[x];
        const bool inside = sx >= -kEdgeSlack && sx <= max_x + kEdgeSlack && sy >= -kEdgeSlack && sy <= max_y + kEdgeSlack;
        a.valid[x] = inside ? 1 : 0;
        if (!inside && !a.clamp) {
            a.out[x] = 0.0f;
            continue;
        }
        sx = std::min(std::max(sx, 0.0f), max_x);
        sy = std::min(std::max(sy, 0.0f), max_y);
        a.out[x] = bilinear_at(a.plane, a.width, a.height, sx, sy);
    }
}

constexpr Kernels kScalar{
    "scalar", axpby, blend, add_scalar, dot, sq_diff_sum, magnitude, lk_products, lk_solve, accumulate, warp_row,
};

}  // namespace

const Kernels& scalar() noexcept { return kScalar; }

}  // namespace vedit::simd
