// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "test_util.hpp"
#include "vedit/codec.hpp"
#include "vedit/flow.hpp"
#include "vedit/simd/kernels.hpp"
#include "vedit/synth.hpp"

using namespace vedit;
using vedit::testing::error_of;
using vedit::testing::random_floats;
using vedit::testing::TempDir;

namespace {

std::vector<std::uint8_t> flo_bytes(const char magic[4], std::int32_t w, std::int32_t h, const std::vector<float>& uv) {
    std::vector<std::uint8_t> out(12 + uv.size() * 4);
    std::memcpy(out.data(), magic, 4);
    for (int i = 0; i < 4; ++i) {
        out[4 + i] = static_cast<std::uint8_t>((static_cast<std::uint32_t>(w) >> (8 * i)) & 0xff);
        out[8 + i] = static_cast<std::uint8_t>((static_cast<std::uint32_t>(h) >> (8 * i)) & 0xff);
    }
    for (std::size_t k = 0; k < uv.size(); ++k) {
        std::uint32_t bits = 0;
        std::memcpy(&bits, &uv[k], 4);
        for (int i = 0; i < 4; ++i) out[12 + 4 * k + i] = static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff);
    }
    return out;
}

double interior_mean(const std::vector<float>& f, int w, int h, int border) {
    double s = 0.0;
    std::size_t n = 0;
    for (int y = border; y < h - border; ++y) {
        for (int x = border; x < w - border; ++x) {
            s += f[static_cast<std::size_t>(y) * w + x];
            ++n;
        }
    }
    return s / static_cast<double>(n);
}

}  // namespace

TEST_CASE(".flo decoding") {
    const auto one = flo_bytes("PIEH", 1, 1, {2.0f, 0.0f});
    const auto f = decode_flow(one);
    CHECK(f == FlowField(1, 1, 2.0f, 0.0f));

    CHECK(error_of([&] { (void)decode_flow(flo_bytes("XXXX", 1, 1, {2.0f, 0.0f})); }) == Errc::BadMagic);
    auto cut = one;
    cut.pop_back();
    CHECK(error_of([&] { (void)decode_flow(cut); }) == Errc::TruncatedFile);
    CHECK(error_of([&] { (void)decode_flow(std::vector<std::uint8_t>(one.begin(), one.begin() + 6)); }) ==
          Errc::TruncatedFile);
    const float nan = std::numeric_limits<float>::quiet_NaN();
    CHECK(error_of([&] { (void)decode_flow(flo_bytes("PIEH", 1, 1, {nan, 0.0f})); }) == Errc::NonFiniteValue);
}

TEST_CASE(".flo interleaving is row-major (u, v)") {
    const auto f = decode_flow(flo_bytes("PIEH", 2, 1, {1.0f, 2.0f, 3.0f, 4.0f}));
    CHECK(f.u == std::vector<float>{1.0f, 3.0f});
    CHECK(f.v == std::vector<float>{2.0f, 4.0f});
}

TEST_CASE(".flo write/load round trip is bit-identical") {
    TempDir dir("flo");
    FlowField f(8, 8);
    f.u = random_floats(64, 1, -20, 20);
    f.v = random_floats(64, 2, -20, 20);
    write_flow(f, dir / "a.flo");
    const auto g = load_flow(dir / "a.flo");
    CHECK(std::memcmp(f.u.data(), g.u.data(), 64 * sizeof(float)) == 0);
    CHECK(std::memcmp(f.v.data(), g.v.data(), 64 * sizeof(float)) == 0);
    CHECK(read_file(dir / "a.flo").size() == 12 + 64 * 8);
}

TEST_CASE("flow_stats examples") {
    const auto s = flow_stats(FlowField(5, 4, 3.0f, 4.0f));
    CHECK(s.mean_mag == doctest::Approx(5.0));
    CHECK(s.p50_mag == doctest::Approx(5.0));
    CHECK(s.p95_mag == doctest::Approx(5.0));

    const auto z = flow_stats(FlowField(3, 3));
    CHECK(z.mean_mag == 0.0);
    CHECK(z.p50_mag == 0.0);
    CHECK(z.p95_mag == 0.0);

    FlowField half(4, 4);
    for (std::size_t i = 8; i < 16; ++i) half.v[i] = 2.0f;
    CHECK(flow_stats(half).mean_mag == doctest::Approx(1.0));
}

TEST_CASE("flow_stats percentiles interpolate order statistics") {
    FlowField f(5, 1);
    f.u = {0, 1, 2, 3, 4};
    const auto s = flow_stats(f);
    CHECK(s.p50_mag == doctest::Approx(2.0));
    CHECK(s.p95_mag == doctest::Approx(3.8));
    const std::vector<std::uint8_t> valid = {1, 1, 0, 0, 0};
    const auto sv = flow_stats(f, valid);
    CHECK(sv.mean_mag == doctest::Approx(0.5));
    CHECK(sv.valid_fraction == doctest::Approx(0.4));
}

TEST_CASE("flow_stats is invariant under negating the field") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        FlowField f(9, 7);
        f.u = random_floats(63, seed, -10, 10);
        f.v = random_floats(63, seed + 100, -10, 10);
        FlowField g = f;
        for (auto& x : g.u) x = -x;
        for (auto& x : g.v) x = -x;
        const auto a = flow_stats(f);
        const auto b = flow_stats(g);
        CHECK(a.mean_mag == b.mean_mag);
        CHECK(a.p50_mag == b.p50_mag);
        CHECK(a.p95_mag == b.p95_mag);
        CHECK(a.p50_mag <= a.p95_mag);
    }
}

TEST_CASE("backward_warp examples") {
    const auto img = vedit::testing::random_image(11, 9, 3, 4);
    const auto id = backward_warp(img, FlowField(11, 9));
    CHECK(id.image == img);
    CHECK(std::all_of(id.valid.begin(), id.valid.end(), [](auto v) { return v == 1; }));

    Image row(2, 1, 1);
    row.at(0, 0, 0) = 0.0f;
    row.at(0, 0, 1) = 1.0f;
    FlowField half(2, 1, 0.5f, 0.0f);
    CHECK(backward_warp(row, half).image.at(0, 0, 0) == 0.5f);

    CHECK(error_of([&] { (void)backward_warp(img, FlowField(3, 3)); }) == Errc::DimensionMismatch);
}

TEST_CASE("backward_warp undoes a (2, 0) shift on the interior") {
    const auto pair = synth::translated_pair(64, 64, 2, 0, 5);
    const auto w = backward_warp(pair.tgt, FlowField(64, 64, 2.0f, 0.0f));
    CHECK(psnr(w.image, pair.src, w.valid, 4) > 30.0);
    // Columns whose sample lands beyond the last pixel centre by more than half a pixel.
    CHECK(w.valid[63] == 0);
    CHECK(w.valid[62] == 0);
    CHECK(w.valid[61] == 1);
}

TEST_CASE("occlusion_mask examples") {
    const int w = 20, h = 10;
    const auto ok = occlusion_mask(FlowField(w, h, 5, 0), FlowField(w, h, -5, 0));
    const auto bad = occlusion_mask(FlowField(w, h, 5, 0), FlowField(w, h, 0, 0), 1.5f, 0.01f);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const auto i = static_cast<std::size_t>(y) * w + x;
            const bool inside = x + 5 <= w - 1;
            if (inside) CHECK(ok.occluded[i] == 0);
            if (!inside) CHECK(ok.occluded[i] == 1);
            CHECK(bad.occluded[i] == 1);
        }
    }
    CHECK(error_of([&] { (void)occlusion_mask(FlowField(2, 2), FlowField(3, 2)); }) == Errc::DimensionMismatch);
}

TEST_CASE("occlusion_mask threshold is additive in magnitude") {
    // |fwd + bwd| = 1.6 against 1.5 + 0.01 * (|fwd| + |bwd|).
    CHECK(occlusion_mask(FlowField(8, 8, 1.0f, 0), FlowField(8, 8, 0.6f, 0)).occluded[9] == 1);
    CHECK(occlusion_mask(FlowField(8, 8, 10.0f, 0), FlowField(8, 8, -8.4f, 0)).occluded[0] == 1);
    CHECK(occlusion_mask(FlowField(20, 2, 10.0f, 0), FlowField(20, 2, -8.6f, 0)).occluded[0] == 0);
}

TEST_CASE("occlusion_mask is symmetric for globally consistent constant fields") {
    std::mt19937 rng(2);
    for (int t = 0; t < 50; ++t) {
        const int a = static_cast<int>(rng() % 9) - 4;
        const int b = static_cast<int>(rng() % 9) - 4;
        const int w = 16, h = 12;
        const auto m1 = occlusion_mask(FlowField(w, h, a, b), FlowField(w, h, -a, -b));
        const auto m2 = occlusion_mask(FlowField(w, h, -a, -b), FlowField(w, h, a, b));
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const int qx = x + a, qy = y + b;
                if (qx < 0 || qy < 0 || qx >= w || qy >= h) continue;
                CHECK(m1.occluded[static_cast<std::size_t>(y) * w + x] ==
                      m2.occluded[static_cast<std::size_t>(qy) * w + qx]);
            }
        }
    }
}

TEST_CASE("occlusion_ratio examples") {
    OcclusionMask m{10, 10, std::vector<std::uint8_t>(100, 0)};
    FlowField f(10, 10);
    for (int i = 0; i < 25; ++i) m.occluded[static_cast<std::size_t>(i) * 4] = 1;
    CHECK(occlusion_ratio(m, f, 1.0) == 0.25);

    OcclusionMask empty{10, 10, std::vector<std::uint8_t>(100, 0)};
    CHECK(occlusion_ratio(empty, f, 1.0) == 0.0);

    // Occluded pixels all belong to the fast subject.
    FlowField g(10, 10);
    OcclusionMask sm{10, 10, std::vector<std::uint8_t>(100, 0)};
    for (std::size_t i = 0; i < 30; ++i) {
        g.u[i] = 6.0f;
        sm.occluded[i] = 1;
    }
    CHECK(occlusion_ratio(sm, g, 3.0) == 0.0);
    CHECK(occlusion_ratio(sm, FlowField(10, 10, 9.0f, 0.0f), 3.0) == 0.0);
}

TEST_CASE("occlusion_ratio never decreases as background pixels become occluded") {
    std::mt19937 rng(8);
    FlowField f(12, 12);
    f.u = random_floats(144, 3, 0, 4);
    OcclusionMask m{12, 12, std::vector<std::uint8_t>(144, 0)};
    double prev = occlusion_ratio(m, f, 2.0);
    std::vector<std::size_t> order(144);
    for (std::size_t i = 0; i < 144; ++i) order[i] = i;
    std::shuffle(order.begin(), order.end(), rng);
    for (const auto i : order) {
        m.occluded[i] = 1;
        const double r = occlusion_ratio(m, f, 2.0);
        CHECK(r >= prev);
        CHECK(r <= 1.0);
        prev = r;
    }
    CHECK(prev == 1.0);
}

TEST_CASE("default subject cutoff") {
    CHECK(default_subject_cutoff(FlowField(4, 4, 3.0f, 4.0f)) == doctest::Approx(10.0));
    CHECK(default_subject_cutoff(FlowField(4, 4)) == 1.0);
}

TEST_CASE("photometric occlusion flags mismatched pixels") {
    const auto pair = synth::translated_pair(32, 32, 3, 0, 9);
    const auto good = photometric_occlusion(pair.src, pair.tgt, FlowField(32, 32, 3, 0));
    std::size_t interior = 0;
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 28; ++x) interior += good.occluded[static_cast<std::size_t>(y) * 32 + x];
    }
    CHECK(interior == 0);
    CHECK(good.occluded[31] == 1);
    const auto off = photometric_occlusion(pair.src, pair.tgt, FlowField(32, 32, -6, 0), 0.02f);
    CHECK(off.count() > 32 * 16);
}

TEST_CASE("estimate_flow on the documented translations") {
    struct Case {
        int du, dv;
    };
    for (const auto c : {Case{3, 0}, Case{0, -5}}) {
        const auto p = synth::translated_pair(256, 256, c.du, c.dv, 21);
        const auto f = estimate_flow(p.src, p.tgt);
        CHECK(std::abs(interior_mean(f.u, 256, 256, 16) - c.du) < 0.5);
        CHECK(std::abs(interior_mean(f.v, 256, 256, 16) - c.dv) < 0.5);
    }
    const auto img = synth::textured_image(256, 256, 4);
    const auto z = estimate_flow(img, img);
    CHECK(interior_mean(flow_magnitude(z), 256, 256, 0) < 0.05);
}

TEST_CASE("estimate_flow is deterministic and checks shapes") {
    const auto p = synth::translated_pair(64, 64, 1, 2, 3);
    CHECK(estimate_flow(p.src, p.tgt) == estimate_flow(p.src, p.tgt));
    const Image other(32, 64, 3);
    CHECK(error_of([&] { (void)estimate_flow(p.src, other); }) == Errc::DimensionMismatch);
}

TEST_CASE("estimated flow is identical on the scalar and vector kernel tables") {
    const auto p = synth::translated_pair(96, 80, -2, 3, 13);
    std::vector<std::string> names;
    for (const auto* k : simd::available()) names.push_back(k->name);
    std::vector<FlowField> results;
    for (const auto& n : names) {
        REQUIRE(simd::select(n));
        results.push_back(estimate_flow(p.src, p.tgt));
    }
    simd::select(names.back());
    for (std::size_t i = 1; i < results.size(); ++i) {
        double worst = 0.0;
        for (std::size_t k = 0; k < results[0].size(); ++k) {
            worst = std::max(worst, static_cast<double>(std::abs(results[i].u[k] - results[0].u[k])));
            worst = std::max(worst, static_cast<double>(std::abs(results[i].v[k] - results[0].v[k])));
        }
        CHECK(worst < 1e-3);
    }
}
