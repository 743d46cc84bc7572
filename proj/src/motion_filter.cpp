// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vedit/motion_filter.hpp"

#include <cmath>

#include "vedit/error.hpp"

namespace vedit {

std::string_view to_string(MagnitudeStat s) noexcept {
    switch (s) {
        case MagnitudeStat::Mean: return "mean";
        case MagnitudeStat::P50: return "p50";
        case MagnitudeStat::P95: return "p95";
    }
    return "mean";
}

std::optional<MagnitudeStat> parse_magnitude_stat(std::string_view s) noexcept {
    if (s == "mean") return MagnitudeStat::Mean;
    if (s == "p50") return MagnitudeStat::P50;
    if (s == "p95") return MagnitudeStat::P95;
    return std::nullopt;
}

std::string_view to_string(Decision d) noexcept {
    switch (d) {
        case Decision::Pass: return "pass";
        case Decision::TooStatic: return "too_static";
        case Decision::TooDynamic: return "too_dynamic";
        case Decision::BackgroundChanged: return "background_changed";
    }
    return "pass";
}

std::optional<Decision> parse_decision(std::string_view s) noexcept {
    for (auto d : {Decision::Pass, Decision::TooStatic, Decision::TooDynamic, Decision::BackgroundChanged}) {
        if (s == to_string(d)) return d;
    }
    return std::nullopt;
}

void MotionThresholds::validate() const {
    if (!(mag_min >= 0.0) || !(mag_min < mag_max)) throw Error(Errc::InvalidArgument, "need 0 <= mag_min < mag_max");
    if (!(occl_max >= 0.0 && occl_max <= 1.0)) throw Error(Errc::InvalidArgument, "occl_max must lie in [0,1]");
}

MotionThresholds MotionThresholds::scaled_for(int width, int height) const {
    const double diag = std::hypot(static_cast<double>(width), static_cast<double>(height));
    const double scale = diag / std::hypot(512.0, 512.0);
    MotionThresholds out = *this;
    out.mag_min *= scale;
    out.mag_max *= scale;
    return out;
}

double select_stat(const FlowStats& stats, MagnitudeStat which) noexcept {
    switch (which) {
        case MagnitudeStat::Mean: return stats.mean_mag;
        case MagnitudeStat::P50: return stats.p50_mag;
        case MagnitudeStat::P95: return stats.p95_mag;
    }
    return stats.mean_mag;
}

FilterVerdict evaluate(const FlowStats& stats, double occl, const MotionThresholds& th) {
    FilterVerdict verdict{Decision::Pass, stats, occl};
    const double m = select_stat(stats, th.stat);
    if (m < th.mag_min) {
        verdict.decision = Decision::TooStatic;
    } else if (m > th.mag_max) {
        verdict.decision = Decision::TooDynamic;
    } else if (occl > th.occl_max) {
        verdict.decision = Decision::BackgroundChanged;
    }
    return verdict;
}

}  // namespace vedit
