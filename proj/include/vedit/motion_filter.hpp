// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string_view>

#include "vedit/flow.hpp"

namespace vedit {

enum class MagnitudeStat { Mean, P50, P95 };

std::string_view to_string(MagnitudeStat s) noexcept;
std::optional<MagnitudeStat> parse_magnitude_stat(std::string_view s) noexcept;

/// Keep/discard bounds. Defaults are engineering values for 512-px frames.
struct MotionThresholds {
    double mag_min = 2.0;
    double mag_max = 40.0;
    double occl_max = 0.3;
    MagnitudeStat stat = MagnitudeStat::Mean;

    /// Throws InvalidArgument unless 0 <= mag_min < mag_max and occl_max in [0,1].
    void validate() const;

    /// Magnitude bounds scaled by the frame diagonal relative to a 512x512 frame.
    [[nodiscard]] MotionThresholds scaled_for(int width, int height) const;
};

enum class Decision { Pass, TooStatic, TooDynamic, BackgroundChanged };

std::string_view to_string(Decision d) noexcept;
std::optional<Decision> parse_decision(std::string_view s) noexcept;

struct FilterVerdict {
    Decision decision = Decision::Pass;
    FlowStats measured;
    double occlusion_ratio = 0.0;
};

double select_stat(const FlowStats& stats, MagnitudeStat which) noexcept;

/// Checks run in order: TooStatic (stat < mag_min), TooDynamic (stat > mag_max),
/// BackgroundChanged (occl > occl_max), otherwise Pass.
FilterVerdict evaluate(const FlowStats& stats, double occl, const MotionThresholds& th);

}  // namespace vedit
