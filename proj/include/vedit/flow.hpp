// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "vedit/image.hpp"

namespace vedit {

/// Dense displacement field in pixels; (u, v) at p maps p toward its match.
struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> u;
    std::vector<float> v;

    FlowField() = default;
    FlowField(int w, int h, float fill_u = 0.0f, float fill_v = 0.0f);

    [[nodiscard]] std::size_t size() const noexcept { return u.size(); }
    [[nodiscard]] bool same_dims(const FlowField& o) const noexcept { return width == o.width && height == o.height; }
    /// Throws NonFiniteValue / DimensionMismatch.
    void validate() const;

    friend bool operator==(const FlowField&, const FlowField&) = default;
};

struct FlowStats {
    double mean_mag = 0.0;
    double p50_mag = 0.0;
    double p95_mag = 0.0;
    double valid_fraction = 1.0;
};

struct OcclusionMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> occluded;

    [[nodiscard]] std::size_t count() const;
};

struct FlowEstimatorParams {
    int levels = 4;
    int iterations = 5;
    int window_radius = 3;
    float regularization = 1e-5f;
    bool median_filter = true;
    // Largest neighbor offset (px) tried when sharpening motion boundaries; < 2 disables.
    int propagation_reach = 8;
    // Integer search range around the running estimate, in pixels of the
    // coarsest pyramid level that is at least 64 px; 0 disables.
    int search_radius = 6;
};

/// Coarse-to-fine dense local least-squares flow from `src` toward `tgt`.
FlowField estimate_flow(const Image& src, const Image& tgt, const FlowEstimatorParams& params = {});

/// Middlebury .flo: "PIEH", little-endian int32 width and height, then
/// row-major interleaved (u, v) float32.
FlowField load_flow(const std::filesystem::path& path);
FlowField decode_flow(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_flow(const FlowField& flow);
void write_flow(const FlowField& flow, const std::filesystem::path& path);

/// Per-pixel magnitude sqrt(u^2 + v^2).
std::vector<float> flow_magnitude(const FlowField& flow);

/// Mean / median / 95th percentile of the magnitude. Percentiles interpolate
/// linearly between order statistics. When `valid` is non-empty only flagged
/// pixels contribute and valid_fraction reports their share.
FlowStats flow_stats(const FlowField& flow, std::span<const std::uint8_t> valid = {});

struct WarpResult {
    Image image;
    std::vector<std::uint8_t> valid;
};

/// out(x, y) = bilinear sample of `tgt` at (x + u, y + v). A sample is in
/// range when it lies within half a pixel of the pixel grid, and is then
/// clamped to the edge; samples further out are zero and flagged invalid.
WarpResult backward_warp(const Image& tgt, const FlowField& flow);

/// Forward-backward consistency: p is occluded when
/// |fwd(p) + bwd(p + fwd(p))| > tau_abs + tau_rel * (|fwd(p)| + |bwd(p + fwd(p))|)
/// or when p + fwd(p) is out of range in the backward_warp sense.
OcclusionMask occlusion_mask(const FlowField& fwd, const FlowField& bwd, float tau_abs = 1.5f,
                             float tau_rel = 0.01f);

/// Alternative detector: p is occluded when the mean absolute difference
/// between src and the backward-warped tgt exceeds `threshold`, or the warp
/// sample is out of range.
OcclusionMask photometric_occlusion(const Image& src, const Image& tgt, const FlowField& fwd,
                                    float threshold = 0.1f);

/// Fraction of occluded pixels among background pixels (magnitude strictly
/// below `subject_mag_cutoff`); 0 when there is no background.
double occlusion_ratio(const OcclusionMask& mask, const FlowField& flow, double subject_mag_cutoff);

/// Default subject cutoff: twice the median magnitude, at least 1 px.
double default_subject_cutoff(const FlowField& flow);

}  // namespace vedit
