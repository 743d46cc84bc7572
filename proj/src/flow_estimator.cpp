// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

// Coarse-to-fine dense flow: a Gaussian pyramid of luma planes, and at each
// level a few rounds of warp / linearize / windowed least-squares solve,
// followed by a 3x3 median on the field before it is upsampled.

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "vedit/error.hpp"
#include "vedit/flow.hpp"
#include "vedit/simd/kernels.hpp"

namespace vedit {
namespace {

constexpr int kSearchMinSize = 64;

struct Plane {
    int width = 0;
    int height = 0;
    std::vector<float> px;

    Plane() = default;
    Plane(int w, int h) : width(w), height(h), px(static_cast<std::size_t>(w) * h, 0.0f) {}
    float* row(int y) { return px.data() + static_cast<std::size_t>(y) * width; }
    [[nodiscard]] const float* row(int y) const { return px.data() + static_cast<std::size_t>(y) * width; }
    [[nodiscard]] float at(int x, int y) const {
        x = std::clamp(x, 0, width - 1);
        y = std::clamp(y, 0, height - 1);
        return px[static_cast<std::size_t>(y) * width + x];
    }
};

// Separable binomial [1 4 6 4 1] / 16 with replicated borders.
Plane blur5(const Plane& in) {
    Plane tmp(in.width, in.height);
    Plane out(in.width, in.height);
    for (int y = 0; y < in.height; ++y) {
        float* dst = tmp.row(y);
        for (int x = 0; x < in.width; ++x) {
            dst[x] = (in.at(x - 2, y) + 4.0f * in.at(x - 1, y) + 6.0f * in.at(x, y) + 4.0f * in.at(x + 1, y) +
                      in.at(x + 2, y)) *
                     (1.0f / 16.0f);
        }
    }
    for (int y = 0; y < in.height; ++y) {
        float* dst = out.row(y);
        for (int x = 0; x < in.width; ++x) {
            dst[x] = (tmp.at(x, y - 2) + 4.0f * tmp.at(x, y - 1) + 6.0f * tmp.at(x, y) + 4.0f * tmp.at(x, y + 1) +
                      tmp.at(x, y + 2)) *
                     (1.0f / 16.0f);
        }
    }
    return out;
}

Plane downsample(const Plane& in) {
    const Plane blurred = blur5(in);
    Plane out((in.width + 1) / 2, (in.height + 1) / 2);
    for (int y = 0; y < out.height; ++y) {
        float* dst = out.row(y);
        for (int x = 0; x < out.width; ++x) dst[x] = blurred.at(2 * x, 2 * y);
    }
    return out;
}

// Central differences, one-sided at the border.
void gradients(const Plane& in, Plane& gx, Plane& gy) {
    gx = Plane(in.width, in.height);
    gy = Plane(in.width, in.height);
    for (int y = 0; y < in.height; ++y) {
        for (int x = 0; x < in.width; ++x) {
            gx.row(y)[x] = 0.5f * (in.at(x + 1, y) - in.at(x - 1, y));
            gy.row(y)[x] = 0.5f * (in.at(x, y + 1) - in.at(x, y - 1));
        }
    }
}

// Box sum over a (2r+1)^2 window with replicated borders. The vertical pass
// keeps a running row sum updated through the accumulate kernel.
void box_sum(const Plane& in, int r, Plane& out, Plane& scratch, const simd::Kernels& k) {
    scratch = Plane(in.width, in.height);
    for (int y = 0; y < in.height; ++y) {
        const float* src = in.row(y);
        float* dst = scratch.row(y);
        float acc = 0.0f;
        for (int dx = -r; dx <= r; ++dx) acc += src[std::clamp(dx, 0, in.width - 1)];
        dst[0] = acc;
        for (int x = 1; x < in.width; ++x) {
            acc += src[std::min(x + r, in.width - 1)] - src[std::max(x - r - 1, 0)];
            dst[x] = acc;
        }
    }
    out = Plane(in.width, in.height);
    const auto w = static_cast<std::size_t>(in.width);
    std::vector<float> acc(w, 0.0f);
    for (int dy = -r; dy <= r; ++dy) {
        const float* src = scratch.row(std::clamp(dy, 0, in.height - 1));
        for (std::size_t x = 0; x < w; ++x) acc[x] += src[x];
    }
    std::copy(acc.begin(), acc.end(), out.row(0));
    for (int y = 1; y < in.height; ++y) {
        k.accumulate(acc.data(), scratch.row(std::min(y + r, in.height - 1)), scratch.row(std::max(y - r - 1, 0)), w);
        std::copy(acc.begin(), acc.end(), out.row(y));
    }
}

void median3(Plane& p) {
    Plane out(p.width, p.height);
    std::array<float, 9> win{};
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            int n = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) win[n++] = p.at(x + dx, y + dy);
            }
            std::nth_element(win.begin(), win.begin() + 4, win.end());
            out.row(y)[x] = win[4];
        }
    }
    p = std::move(out);
}

// Bilinear upsample to (w, h) on the decimation grid, displacement scaled by 2.
Plane upsample_flow(const Plane& in, int w, int h) {
    Plane out(w, h);
    for (int y = 0; y < h; ++y) {
        const float sy = std::min(static_cast<float>(y) * 0.5f, static_cast<float>(in.height - 1));
        const int y0 = static_cast<int>(std::floor(sy));
        const float fy = sy - static_cast<float>(y0);
        for (int x = 0; x < w; ++x) {
            const float sx = std::min(static_cast<float>(x) * 0.5f, static_cast<float>(in.width - 1));
            const int x0 = static_cast<int>(std::floor(sx));
            const float fx = sx - static_cast<float>(x0);
            const float top = (1.0f - fx) * in.at(x0, y0) + fx * in.at(x0 + 1, y0);
            const float bottom = (1.0f - fx) * in.at(x0, y0 + 1) + fx * in.at(x0 + 1, y0 + 1);
            out.row(y)[x] = 2.0f * ((1.0f - fy) * top + fy * bottom);
        }
    }
    return out;
}

Plane luma(const Image& img) {
    const Image gray = img.to_gray();
    Plane p(gray.width(), gray.height());
    auto src = gray.plane(0);
    std::copy(src.begin(), src.end(), p.px.begin());
    return p;
}

// Absolute intensity difference between src and the warped tgt summed over a
// 3x3 window; out-of-frame samples cost 1.
void sad_cost(const Plane& src, const Plane& tgt, const Plane& u, const Plane& v, Plane& cost, Plane& scratch,
              std::vector<std::uint8_t>& valid, const simd::Kernels& k) {
    const int w = src.width;
    Plane diff(w, src.height);
    for (int y = 0; y < src.height; ++y) {
        k.warp_row({tgt.px.data(), w, src.height, y, u.row(y), v.row(y), diff.row(y),
                    valid.data() + static_cast<std::size_t>(y) * w, false});
    }
    for (std::size_t i = 0; i < diff.px.size(); ++i) {
        diff.px[i] = valid[i] ? std::fabs(diff.px[i] - src.px[i]) : 1.0f;
    }
    box_sum(diff, 1, cost, scratch, k);
}

void refine_level(const Plane& src, const Plane& tgt, Plane& u, Plane& v, const FlowEstimatorParams& params,
                  const simd::Kernels& k) {
    const int w = src.width;
    const int h = src.height;
    const std::size_t n = src.px.size();
    Plane sx;
    Plane sy;
    gradients(src, sx, sy);
    Plane warped(w, h);
    std::vector<std::uint8_t> valid(n);
    Plane wx;
    Plane wy;
    Plane ix(w, h);
    Plane iy(w, h);
    Plane it(w, h);
    std::array<Plane, 5> prod;
    for (auto& p : prod) p = Plane(w, h);
    std::array<Plane, 5> sums;
    Plane scratch;
    const Plane u_in = u;
    const Plane v_in = v;
    Plane cost_in;
    sad_cost(src, tgt, u, v, cost_in, scratch, valid, k);

    const float inv_area = 1.0f / static_cast<float>((2 * params.window_radius + 1) * (2 * params.window_radius + 1));
    for (int iter = 0; iter < params.iterations; ++iter) {
        // Linearize around the window-averaged field; the solve then adds its
        // increment to that average.
        box_sum(u, params.window_radius, u, scratch, k);
        box_sum(v, params.window_radius, v, scratch, k);
        for (std::size_t i = 0; i < n; ++i) {
            u.px[i] *= inv_area;
            v.px[i] *= inv_area;
        }
        for (int y = 0; y < h; ++y) {
            k.warp_row({tgt.px.data(), w, h, y, u.row(y), v.row(y), warped.row(y),
                        valid.data() + static_cast<std::size_t>(y) * w, false});
        }
        gradients(warped, wx, wy);
        // Samples that left the frame carry no evidence.
        for (std::size_t i = 0; i < n; ++i) {
            const float keep = valid[i] ? 1.0f : 0.0f;
            ix.px[i] = keep * 0.5f * (sx.px[i] + wx.px[i]);
            iy.px[i] = keep * 0.5f * (sy.px[i] + wy.px[i]);
            it.px[i] = keep * (warped.px[i] - src.px[i]);
        }
        k.lk_products(ix.px.data(), iy.px.data(), it.px.data(), prod[0].px.data(), prod[1].px.data(),
                      prod[2].px.data(), prod[3].px.data(), prod[4].px.data(), n);
        for (std::size_t j = 0; j < prod.size(); ++j) box_sum(prod[j], params.window_radius, sums[j], scratch, k);
        k.lk_solve(sums[0].px.data(), sums[1].px.data(), sums[2].px.data(), sums[3].px.data(), sums[4].px.data(),
                   params.regularization, u.px.data(), v.px.data(), n);
    }
    if (params.median_filter) {
        median3(u);
        median3(v);
    }
    // Keep the refined vector only where it matches at least as well.
    Plane cost_out;
    sad_cost(src, tgt, u, v, cost_out, scratch, valid, k);
    for (std::size_t i = 0; i < n; ++i) {
        if (cost_out.px[i] > cost_in.px[i]) {
            u.px[i] = u_in.px[i];
            v.px[i] = v_in.px[i];
        }
    }
}

// 8-bit census signature: one bit per 3x3 neighbor brighter than the center.
std::vector<std::uint8_t> census(const Plane& p) {
    std::vector<std::uint8_t> out(p.px.size());
    for (int y = 0; y < p.height; ++y) {
        for (int x = 0; x < p.width; ++x) {
            const float c = p.at(x, y);
            std::uint8_t bits = 0;
            int b = 0;
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    if (p.at(x + dx, y + dy) > c) bits |= static_cast<std::uint8_t>(1u << b);
                    ++b;
                }
            }
            out[static_cast<std::size_t>(y) * p.width + x] = bits;
        }
    }
    return out;
}

// Per-pixel matching cost of a field: census Hamming distance between src and
// the warped tgt, summed over a 3x3 window. Out-of-frame samples cost 8.
void match_cost(const Plane& tgt, const std::vector<std::uint8_t>& src_census, const Plane& u, const Plane& v,
                Plane& cost, Plane& scratch, std::vector<std::uint8_t>& valid, const simd::Kernels& k) {
    const int w = tgt.width;
    Plane warped(w, tgt.height);
    for (int y = 0; y < tgt.height; ++y) {
        k.warp_row({tgt.px.data(), w, tgt.height, y, u.row(y), v.row(y), warped.row(y),
                    valid.data() + static_cast<std::size_t>(y) * w, true});
    }
    const auto tc = census(warped);
    Plane dist(w, tgt.height);
    for (std::size_t i = 0; i < dist.px.size(); ++i) {
        dist.px[i] = valid[i] ? static_cast<float>(std::popcount(static_cast<unsigned>(src_census[i] ^ tc[i]))) : 8.0f;
    }
    box_sum(dist, 1, cost, scratch, k);
}

// Integer search over [-radius, radius]^2 around both the current field and
// zero, scored by census cost; the current vector wins ties.
void local_search(const Plane& src, const Plane& tgt, Plane& u, Plane& v, int radius, const simd::Kernels& k) {
    std::vector<std::uint8_t> valid(src.px.size());
    const auto sc = census(src);
    Plane scratch;
    Plane best;
    match_cost(tgt, sc, u, v, best, scratch, valid, k);
    const Plane u0 = u;
    const Plane v0 = v;
    const Plane zero(src.width, src.height);
    Plane cost;
    Plane cu(src.width, src.height);
    Plane cv(src.width, src.height);
    for (const auto& [bu, bv] : {std::pair<const Plane*, const Plane*>{&u0, &v0}, {&zero, &zero}}) {
        for (int dy = -radius; dy <= radius; ++dy) {
            for (int dx = -radius; dx <= radius; ++dx) {
                if (bu == &u0 && dx == 0 && dy == 0) continue;
                for (std::size_t i = 0; i < cu.px.size(); ++i) {
                    cu.px[i] = bu->px[i] + static_cast<float>(dx);
                    cv.px[i] = bv->px[i] + static_cast<float>(dy);
                }
                match_cost(tgt, sc, cu, cv, cost, scratch, valid, k);
                const float bias = 1e-3f * static_cast<float>(dx * dx + dy * dy);
                for (std::size_t i = 0; i < cost.px.size(); ++i) {
                    if (cost.px[i] + bias < best.px[i]) {
                        best.px[i] = cost.px[i] + bias;
                        u.px[i] = cu.px[i];
                        v.px[i] = cv.px[i];
                    }
                }
            }
        }
    }
}

// Replaces each vector by a neighbor's when that neighbor's displacement
// matches the pixel better; sharpens motion boundaries the window solve blurs.
void propagate_candidates(const Plane& src, const Plane& tgt, Plane& u, Plane& v, int reach, const simd::Kernels& k) {
    const int w = src.width;
    const int h = src.height;
    std::vector<std::uint8_t> valid(src.px.size());
    const auto sc = census(src);
    Plane scratch;
    Plane best;
    match_cost(tgt, sc, u, v, best, scratch, valid, k);
    const Plane u0 = u;
    const Plane v0 = v;
    Plane cu(w, h);
    Plane cv(w, h);
    Plane cost;
    for (int step = 2; step <= reach; step *= 2) {
        for (const auto [ox, oy] : std::array<std::array<int, 2>, 4>{{{step, 0}, {-step, 0}, {0, step}, {0, -step}}}) {
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    cu.row(y)[x] = u0.at(x + ox, y + oy);
                    cv.row(y)[x] = v0.at(x + ox, y + oy);
                }
            }
            match_cost(tgt, sc, cu, cv, cost, scratch, valid, k);
            for (std::size_t i = 0; i < cost.px.size(); ++i) {
                if (cost.px[i] < best.px[i]) {
                    best.px[i] = cost.px[i];
                    u.px[i] = cu.px[i];
                    v.px[i] = cv.px[i];
                }
            }
        }
    }
}

// Pixel-wise choice among the 8 neighbors' vectors by single-pixel intensity
// error, applied at full resolution to settle one-pixel boundary ambiguity.
void snap_boundaries(const Plane& src, const Plane& tgt, Plane& u, Plane& v, const simd::Kernels& k) {
    const int w = src.width;
    const int h = src.height;
    std::vector<std::uint8_t> valid(src.px.size());
    Plane warped(w, h);
    auto errors = [&](const Plane& fu, const Plane& fv, std::vector<float>& err) {
        for (int y = 0; y < h; ++y) {
            k.warp_row({tgt.px.data(), w, h, y, fu.row(y), fv.row(y), warped.row(y),
                        valid.data() + static_cast<std::size_t>(y) * w, false});
        }
        for (std::size_t i = 0; i < err.size(); ++i) {
            err[i] = valid[i] ? std::fabs(warped.px[i] - src.px[i]) : 1.0f;
        }
    };
    std::vector<float> best(src.px.size());
    std::vector<float> err(src.px.size());
    errors(u, v, best);
    const Plane u0 = u;
    const Plane v0 = v;
    Plane cu(w, h);
    Plane cv(w, h);
    for (int oy = -1; oy <= 1; ++oy) {
        for (int ox = -1; ox <= 1; ++ox) {
            if (ox == 0 && oy == 0) continue;
            for (int y = 0; y < h; ++y) {
                for (int x = 0; x < w; ++x) {
                    cu.row(y)[x] = u0.at(x + ox, y + oy);
                    cv.row(y)[x] = v0.at(x + ox, y + oy);
                }
            }
            errors(cu, cv, err);
            for (std::size_t i = 0; i < err.size(); ++i) {
                if (err[i] < best[i]) {
                    best[i] = err[i];
                    u.px[i] = cu.px[i];
                    v.px[i] = cv.px[i];
                }
            }
        }
    }
}

}  // namespace

FlowField estimate_flow(const Image& src, const Image& tgt, const FlowEstimatorParams& params) {
    if (!src.same_shape(tgt)) throw Error(Errc::DimensionMismatch, "estimate_flow: source and target shapes differ");
    if (params.levels < 1 || params.iterations < 0 || params.window_radius < 0) {
        throw Error(Errc::InvalidArgument, "estimate_flow: invalid estimator parameters");
    }
    const auto& k = simd::active();

    std::vector<Plane> src_pyr{luma(src)};
    std::vector<Plane> tgt_pyr{luma(tgt)};
    for (int l = 1; l < params.levels; ++l) {
        if (src_pyr.back().width < 16 || src_pyr.back().height < 16) break;
        src_pyr.push_back(downsample(src_pyr.back()));
        tgt_pyr.push_back(downsample(tgt_pyr.back()));
    }

    Plane u(src_pyr.back().width, src_pyr.back().height);
    Plane v(u.width, u.height);
    // Coarsest level still at least kSearchMinSize on its short side.
    std::size_t search_level = 0;
    while (search_level + 1 < src_pyr.size() &&
           std::min(src_pyr[search_level + 1].width, src_pyr[search_level + 1].height) >= kSearchMinSize) {
        ++search_level;
    }
    for (auto l = static_cast<int>(src_pyr.size()) - 1; l >= 0; --l) {
        const auto& s = src_pyr[static_cast<std::size_t>(l)];
        if (u.width != s.width || u.height != s.height) {
            u = upsample_flow(u, s.width, s.height);
            v = upsample_flow(v, s.width, s.height);
        }
        if (params.search_radius > 0 && static_cast<std::size_t>(l) == search_level) {
            local_search(s, tgt_pyr[static_cast<std::size_t>(l)], u, v, params.search_radius, k);
        }
        refine_level(s, tgt_pyr[static_cast<std::size_t>(l)], u, v, params, k);
        if (params.propagation_reach >= 2) {
            propagate_candidates(s, tgt_pyr[static_cast<std::size_t>(l)], u, v, params.propagation_reach, k);
        }
    }

    if (params.propagation_reach >= 2) snap_boundaries(src_pyr.front(), tgt_pyr.front(), u, v, k);

    FlowField flow(src.width(), src.height());
    flow.u = std::move(u.px);
    flow.v = std::move(v.px);
    return flow;
}

}  // namespace vedit
