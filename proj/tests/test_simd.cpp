// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "test_util.hpp"
#include "vedit/simd/kernels.hpp"

using namespace vedit;
using vedit::testing::random_floats;

namespace {

// Odd lengths exercise the vector tails.
constexpr std::size_t kSizes[] = {0, 1, 7, 8, 9, 31, 64, 1003};

bool bit_equal(const std::vector<float>& a, const std::vector<float>& b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0;
}

}  // namespace

TEST_CASE("scalar table is always available and listed first") {
    const auto all = simd::available();
    REQUIRE(!all.empty());
    CHECK(std::string(all.front()->name) == "scalar");
    CHECK(simd::select("scalar"));
    CHECK(std::string(simd::active().name) == "scalar");
    CHECK_FALSE(simd::select("no-such-isa"));
}

TEST_CASE("elementwise kernels are bit-identical across variants") {
    const auto& ref = simd::scalar();
    for (const auto* k : simd::available()) {
        CAPTURE(k->name);
        for (const auto n : kSizes) {
            CAPTURE(n);
            const auto x = random_floats(n, 1);
            const auto y = random_floats(n, 2);
            const auto m = random_floats(n, 3, 0.0f, 1.0f);
            std::vector<float> a(n), b(n);

            ref.axpby(0.7f, x.data(), -1.3f, y.data(), a.data(), n);
            k->axpby(0.7f, x.data(), -1.3f, y.data(), b.data(), n);
            CHECK(bit_equal(a, b));

            ref.blend(m.data(), x.data(), y.data(), a.data(), n);
            k->blend(m.data(), x.data(), y.data(), b.data(), n);
            CHECK(bit_equal(a, b));

            ref.add_scalar(x.data(), 0.25f, a.data(), n);
            k->add_scalar(x.data(), 0.25f, b.data(), n);
            CHECK(bit_equal(a, b));

            ref.magnitude(x.data(), y.data(), a.data(), n);
            k->magnitude(x.data(), y.data(), b.data(), n);
            CHECK(bit_equal(a, b));

            std::vector<float> acc_a = x, acc_b = x;
            ref.accumulate(acc_a.data(), y.data(), m.data(), n);
            k->accumulate(acc_b.data(), y.data(), m.data(), n);
            CHECK(bit_equal(acc_a, acc_b));

            std::vector<std::vector<float>> pa(5, std::vector<float>(n)), pb(5, std::vector<float>(n));
            ref.lk_products(x.data(), y.data(), m.data(), pa[0].data(), pa[1].data(), pa[2].data(), pa[3].data(),
                            pa[4].data(), n);
            k->lk_products(x.data(), y.data(), m.data(), pb[0].data(), pb[1].data(), pb[2].data(), pb[3].data(),
                           pb[4].data(), n);
            for (int i = 0; i < 5; ++i) CHECK(bit_equal(pa[i], pb[i]));

            std::vector<float> ua = y, va = m, ub = y, vb = m;
            ref.lk_solve(pa[0].data(), pa[1].data(), pa[2].data(), pa[3].data(), pa[4].data(), 1e-3f, ua.data(),
                         va.data(), n);
            k->lk_solve(pa[0].data(), pa[1].data(), pa[2].data(), pa[3].data(), pa[4].data(), 1e-3f, ub.data(),
                        vb.data(), n);
            CHECK(bit_equal(ua, ub));
            CHECK(bit_equal(va, vb));
        }
    }
}

TEST_CASE("reductions agree across variants to accumulated rounding") {
    const auto& ref = simd::scalar();
    for (const auto* k : simd::available()) {
        for (const auto n : kSizes) {
            const auto x = random_floats(n, 10 + n);
            const auto y = random_floats(n, 20 + n);
            const double tol = 1e-5 * static_cast<double>(n + 1);
            CHECK(k->dot(x.data(), y.data(), n) == doctest::Approx(ref.dot(x.data(), y.data(), n)).epsilon(tol));
            CHECK(k->sq_diff_sum(x.data(), y.data(), n) ==
                  doctest::Approx(ref.sq_diff_sum(x.data(), y.data(), n)).epsilon(tol));
        }
    }
}

TEST_CASE("dot and sq_diff_sum against a double-precision loop") {
    const std::size_t n = 1003;
    const auto x = random_floats(n, 5);
    const auto y = random_floats(n, 6);
    double dot = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        dot += static_cast<double>(x[i]) * y[i];
        const double d = static_cast<double>(x[i]) - y[i];
        sq += d * d;
    }
    for (const auto* k : simd::available()) {
        CHECK(k->dot(x.data(), y.data(), n) == doctest::Approx(dot).epsilon(1e-6));
        CHECK(k->sq_diff_sum(x.data(), y.data(), n) == doctest::Approx(sq).epsilon(1e-6));
    }
}

TEST_CASE("warp_row variants agree bit for bit, including out-of-range samples") {
    const int w = 37, h = 23;
    const auto plane = random_floats(static_cast<std::size_t>(w) * h, 9, 0.0f, 1.0f);
    const auto u = random_floats(static_cast<std::size_t>(w), 11, -6.0f, 6.0f);
    const auto v = random_floats(static_cast<std::size_t>(w), 12, -6.0f, 6.0f);
    for (const auto* k : simd::available()) {
        for (const bool clamp : {false, true}) {
            for (int y = 0; y < h; y += 5) {
                std::vector<float> oa(w), ob(w);
                std::vector<std::uint8_t> va(w), vb(w);
                simd::scalar().warp_row({plane.data(), w, h, y, u.data(), v.data(), oa.data(), va.data(), clamp, 0});
                k->warp_row({plane.data(), w, h, y, u.data(), v.data(), ob.data(), vb.data(), clamp, 0});
                CHECK(bit_equal(oa, ob));
                CHECK(va == vb);
            }
        }
    }
}

TEST_CASE("warp_row samples bilinearly and flags samples beyond half a pixel") {
    // 2x1 plane: values 0 and 1.
    const float plane[2] = {0.0f, 1.0f};
    const float u[2] = {0.5f, 0.75f};
    const float v[2] = {0.0f, 0.0f};
    for (const auto* k : simd::available()) {
        float out[2];
        std::uint8_t valid[2];
        k->warp_row({plane, 2, 1, 0, u, v, out, valid, false, 0});
        CHECK(out[0] == 0.5f);
        CHECK(valid[0] == 1);
        CHECK(valid[1] == 0);
        CHECK(out[1] == 0.0f);
    }
}
