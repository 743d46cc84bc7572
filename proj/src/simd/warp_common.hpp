// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>

namespace vedit::simd {

inline constexpr float kMinDeterminant = 1e-9f;

// Samples within half a pixel of the frame (the edge pixels' footprint) are in range.
inline constexpr float kEdgeSlack = 0.5f;

// Bilinear sample at an in-range coordinate. The far neighbor collapses onto
// the near one on the last row/column so no read leaves the plane.
inline float bilinear_at(const float* plane, int width, int height, float sx, float sy) {
    const float x0f = std::floor(sx);
    const float y0f = std::floor(sy);
    const float fx = sx - x0f;
    const float fy = sy - y0f;
    const int x0 = static_cast<int>(x0f);
    const int y0 = static_cast<int>(y0f);
    const int x1 = x0 + 1 < width ? x0 + 1 : x0;
    const int y1 = y0 + 1 < height ? y0 + 1 : y0;
    const float p00 = plane[y0 * width + x0];
    const float p01 = plane[y0 * width + x1];
    const float p10 = plane[y1 * width + x0];
    const float p11 = plane[y1 * width + x1];
    const float top = (1.0f - fx) * p00 + fx * p01;
    const float bottom = (1.0f - fx) * p10 + fx * p11;
    return (1.0f - fy) * top + fy * bottom;
}

}  // namespace vedit::simd
