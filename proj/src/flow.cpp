// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vedit/flow.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <string>

#include "vedit/codec.hpp"
#include "vedit/error.hpp"
#include "vedit/simd/kernels.hpp"

namespace vedit {

FlowField::FlowField(int w, int h, float fill_u, float fill_v) : width(w), height(h) {
    if (w <= 0 || h <= 0) throw Error(Errc::InvalidArgument, "flow dimensions must be positive");
    const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    u.assign(n, fill_u);
    v.assign(n, fill_v);
}

void FlowField::validate() const {
    const auto n = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    if (width <= 0 || height <= 0 || u.size() != n || v.size() != n) {
        throw Error(Errc::DimensionMismatch, "flow planes do not match " + std::to_string(width) + "x" +
                                                 std::to_string(height));
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(u[i]) || !std::isfinite(v[i])) throw Error(Errc::NonFiniteValue, "flow value not finite");
    }
}

std::size_t OcclusionMask::count() const {
    return static_cast<std::size_t>(std::count_if(occluded.begin(), occluded.end(), [](auto b) { return b != 0; }));
}

namespace {

constexpr char kFloMagic[4] = {'P', 'I', 'E', 'H'};

static_assert(std::endian::native == std::endian::little, ".flo I/O assumes a little-endian host");

template <typename T>
T read_le(const std::uint8_t* p) {
    T value;
    std::memcpy(&value, p, sizeof(T));
    return value;
}

template <typename T>
void append_le(std::vector<std::uint8_t>& out, T value) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&value);
    out.insert(out.end(), p, p + sizeof(T));
}

}  // namespace

FlowField decode_flow(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw Error(Errc::TruncatedFile, ".flo shorter than its magic");
    if (std::memcmp(bytes.data(), kFloMagic, 4) != 0) throw Error(Errc::BadMagic, ".flo magic is not PIEH");
    if (bytes.size() < 12) throw Error(Errc::TruncatedFile, ".flo header truncated");
    const auto w = read_le<std::int32_t>(bytes.data() + 4);
    const auto h = read_le<std::int32_t>(bytes.data() + 8);
    if (w <= 0 || h <= 0) throw Error(Errc::TruncatedFile, ".flo has non-positive dimensions");
    const auto n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if (bytes.size() - 12 < n * 8) throw Error(Errc::TruncatedFile, ".flo payload truncated");
    FlowField flow(w, h);
    const std::uint8_t* p = bytes.data() + 12;
    for (std::size_t i = 0; i < n; ++i, p += 8) {
        flow.u[i] = read_le<float>(p);
        flow.v[i] = read_le<float>(p + 4);
        if (!std::isfinite(flow.u[i]) || !std::isfinite(flow.v[i])) {
            throw Error(Errc::NonFiniteValue, ".flo contains a non-finite value at pixel " + std::to_string(i));
        }
    }
    return flow;
}

FlowField load_flow(const std::filesystem::path& path) {
    const std::string raw = read_file(path);
    return decode_flow({reinterpret_cast<const std::uint8_t*>(raw.data()), raw.size()});
}

std::vector<std::uint8_t> encode_flow(const FlowField& flow) {
    flow.validate();
    std::vector<std::uint8_t> out(kFloMagic, kFloMagic + 4);
    out.reserve(12 + flow.size() * 8);
    append_le<std::int32_t>(out, flow.width);
    append_le<std::int32_t>(out, flow.height);
    for (std::size_t i = 0; i < flow.size(); ++i) {
        append_le<float>(out, flow.u[i]);
        append_le<float>(out, flow.v[i]);
    }
    return out;
}

void write_flow(const FlowField& flow, const std::filesystem::path& path) {
    const auto bytes = encode_flow(flow);
    write_file_atomic(path, {reinterpret_cast<const char*>(bytes.data()), bytes.size()});
}

std::vector<float> flow_magnitude(const FlowField& flow) {
    std::vector<float> mag(flow.size());
    simd::active().magnitude(flow.u.data(), flow.v.data(), mag.data(), mag.size());
    return mag;
}

namespace {

// Linear interpolation between order statistics; `values` is reordered.
double percentile(std::vector<float>& values, double q) {
    if (values.empty()) return 0.0;
    const double rank = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, values.size() - 1);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(lo), values.end());
    const double a = values[lo];
    double b = a;
    if (hi != lo) b = *std::min_element(values.begin() + static_cast<std::ptrdiff_t>(lo) + 1, values.end());
    return a + (rank - static_cast<double>(lo)) * (b - a);
}

}  // namespace

FlowStats flow_stats(const FlowField& flow, std::span<const std::uint8_t> valid) {
    const auto mag = flow_magnitude(flow);
    if (!valid.empty() && valid.size() != mag.size()) throw Error(Errc::DimensionMismatch, "validity mask size");
    std::vector<float> used;
    used.reserve(mag.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < mag.size(); ++i) {
        if (!valid.empty() && valid[i] == 0) continue;
        used.push_back(mag[i]);
        sum += mag[i];
    }
    FlowStats stats;
    stats.valid_fraction = mag.empty() ? 0.0 : static_cast<double>(used.size()) / static_cast<double>(mag.size());
    if (used.empty()) return stats;
    stats.mean_mag = sum / static_cast<double>(used.size());
    stats.p50_mag = percentile(used, 0.50);
    stats.p95_mag = percentile(used, 0.95);
    return stats;
}

WarpResult backward_warp(const Image& tgt, const FlowField& flow) {
    if (tgt.width() != flow.width || tgt.height() != flow.height) {
        throw Error(Errc::DimensionMismatch, "warp target and flow dimensions differ");
    }
    WarpResult result{Image(tgt.width(), tgt.height(), tgt.channels()), std::vector<std::uint8_t>(flow.size())};
    const auto& k = simd::active();
    std::vector<std::uint8_t> scratch(static_cast<std::size_t>(flow.width));
    for (int c = 0; c < tgt.channels(); ++c) {
        const float* plane = tgt.plane(c).data();
        float* out = result.image.plane(c).data();
        for (int y = 0; y < flow.height; ++y) {
            const std::size_t row = static_cast<std::size_t>(y) * flow.width;
            std::uint8_t* valid = c == 0 ? result.valid.data() + row : scratch.data();
            k.warp_row({plane, flow.width, flow.height, y, flow.u.data() + row, flow.v.data() + row, out + row, valid,
                        false});
        }
    }
    return result;
}

OcclusionMask occlusion_mask(const FlowField& fwd, const FlowField& bwd, float tau_abs, float tau_rel) {
    if (!fwd.same_dims(bwd)) throw Error(Errc::DimensionMismatch, "forward and backward flow dimensions differ");
    OcclusionMask mask{fwd.width, fwd.height, std::vector<std::uint8_t>(fwd.size())};
    const auto& k = simd::active();
    const auto w = static_cast<std::size_t>(fwd.width);
    std::vector<float> bu(w);
    std::vector<float> bv(w);
    std::vector<std::uint8_t> valid(w);
    std::vector<std::uint8_t> scratch(w);
    for (int y = 0; y < fwd.height; ++y) {
        const std::size_t row = static_cast<std::size_t>(y) * w;
        const float* fu = fwd.u.data() + row;
        const float* fv = fwd.v.data() + row;
        k.warp_row({bwd.u.data(), fwd.width, fwd.height, y, fu, fv, bu.data(), valid.data(), false});
        k.warp_row({bwd.v.data(), fwd.width, fwd.height, y, fu, fv, bv.data(), scratch.data(), false});
        for (std::size_t x = 0; x < w; ++x) {
            if (valid[x] == 0) {
                mask.occluded[row + x] = 1;
                continue;
            }
            const float ru = fu[x] + bu[x];
            const float rv = fv[x] + bv[x];
            const float residual = std::sqrt(ru * ru + rv * rv);
            const float norms = std::sqrt(fu[x] * fu[x] + fv[x] * fv[x]) + std::sqrt(bu[x] * bu[x] + bv[x] * bv[x]);
            mask.occluded[row + x] = residual > tau_abs + tau_rel * norms ? 1 : 0;
        }
    }
    return mask;
}

OcclusionMask photometric_occlusion(const Image& src, const Image& tgt, const FlowField& fwd, float threshold) {
    if (!src.same_shape(tgt)) throw Error(Errc::DimensionMismatch, "source and target images differ in shape");
    auto warped = backward_warp(tgt, fwd);
    OcclusionMask mask{fwd.width, fwd.height, std::vector<std::uint8_t>(fwd.size())};
    const float inv_channels = 1.0f / static_cast<float>(src.channels());
    for (std::size_t i = 0; i < fwd.size(); ++i) {
        if (warped.valid[i] == 0) {
            mask.occluded[i] = 1;
            continue;
        }
        float diff = 0.0f;
        for (int c = 0; c < src.channels(); ++c) diff += std::fabs(src.plane(c)[i] - warped.image.plane(c)[i]);
        mask.occluded[i] = diff * inv_channels > threshold ? 1 : 0;
    }
    return mask;
}

double occlusion_ratio(const OcclusionMask& mask, const FlowField& flow, double subject_mag_cutoff) {
    if (mask.width != flow.width || mask.height != flow.height || mask.occluded.size() != flow.size()) {
        throw Error(Errc::DimensionMismatch, "mask and flow dimensions differ");
    }
    const auto mag = flow_magnitude(flow);
    std::size_t background = 0;
    std::size_t occluded = 0;
    for (std::size_t i = 0; i < mag.size(); ++i) {
        if (static_cast<double>(mag[i]) < subject_mag_cutoff) {
            ++background;
            occluded += mask.occluded[i] != 0 ? 1 : 0;
        }
    }
    return background == 0 ? 0.0 : static_cast<double>(occluded) / static_cast<double>(background);
}

double default_subject_cutoff(const FlowField& flow) {
    auto mag = flow_magnitude(flow);
    constexpr double kFloorPx = 1.0;
    return std::max(2.0 * percentile(mag, 0.5), kFloorPx);
}

}  // namespace vedit
