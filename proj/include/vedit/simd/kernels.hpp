// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

// Data-parallel inner loops shared by the flow engine, the conditioning
// kernel and the metrics. Every kernel has a scalar reference and, where the
// host supports it, a vector variant selected once at runtime. Elementwise
// kernels are required to be bit-identical across variants; reductions agree
// to accumulated rounding only.

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace vedit::simd {

struct WarpRowArgs {
    const float* plane;   // single channel, row-major, width*height
    int width;
    int height;
    int y;                // destination row
    const float* u;       // row of horizontal displacements (width)
    const float* v;       // row of vertical displacements (width)
    float* out;           // row of samples (width)
    std::uint8_t* valid;  // row of validity flags (width), 1 = inside the image
    bool clamp;           // sample at the clamped coordinate instead of writing 0
    int x_begin = 0;      // first column to produce
};

struct Kernels {
    const char* name;

    // out = a*x + b*y
    void (*axpby)(float a, const float* x, float b, const float* y, float* out, std::size_t n);
    // out = (1-m)*a + m*b
    void (*blend)(const float* m, const float* a, const float* b, float* out, std::size_t n);
    // out = x + c
    void (*add_scalar)(const float* x, float c, float* out, std::size_t n);
    double (*dot)(const float* x, const float* y, std::size_t n);
    double (*sq_diff_sum)(const float* x, const float* y, std::size_t n);
    // out = sqrt(u*u + v*v)
    void (*magnitude)(const float* u, const float* v, float* out, std::size_t n);
    // Gradient products for the local least-squares flow update.
    void (*lk_products)(const float* ix, const float* iy, const float* it, float* xx, float* xy,
                        float* yy, float* xt, float* yt, std::size_t n);
    // Solves the regularized 2x2 normal equations per pixel and adds the
    // increment to (u, v).
    void (*lk_solve)(const float* sxx, const float* sxy, const float* syy, const float* sxt,
                     const float* syt, float reg, float* u, float* v, std::size_t n);
    // acc += add - sub
    void (*accumulate)(float* acc, const float* add, const float* sub, std::size_t n);
    void (*warp_row)(const WarpRowArgs& args);
};

const Kernels& scalar() noexcept;

// Nullptr when the vector variant was not compiled in or the CPU lacks it.
const Kernels* avx2() noexcept;

// Best available table. VEDIT_SIMD=scalar in the environment pins the scalar path.
const Kernels& active() noexcept;

// Every variant usable on this host, scalar first.
std::vector<const Kernels*> available();

// Overrides the active table; returns false for an unknown or unavailable name.
bool select(std::string_view name) noexcept;

}  // namespace vedit::simd
