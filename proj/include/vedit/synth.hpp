// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>

#include "vedit/flow.hpp"
#include "vedit/image.hpp"

namespace vedit::synth {

/// Smooth multi-scale random texture in [0, 1].
Image textured_image(int width, int height, std::uint64_t seed, int channels = 3);

struct TranslatedPair {
    Image src;
    Image tgt;
    // tgt(p + shift) == src(p) wherever both are inside the frame.
    int du = 0;
    int dv = 0;
};

/// Both frames are crops of one larger texture.
TranslatedPair translated_pair(int width, int height, int du, int dv, std::uint64_t seed, int channels = 3);

/// Square occluder moving across a static textured background, with its
/// exact forward and backward flows.
struct OccluderScene {
    Image src;
    Image tgt;
    FlowField fwd;
    FlowField bwd;
    // Area (px^2) of background visible in src and hidden by the occluder in tgt.
    double covered_area = 0.0;
};

/// The occluder covers [x0, x0 + size) x [y0, y0 + size) in src and is moved by
/// (du, dv) in tgt, resampled bilinearly for fractional shifts. Both
/// placements must lie inside the frame.
OccluderScene occluder_scene(int width, int height, int size, int x0, int y0, double du, double dv,
                             std::uint64_t seed);

/// Writes `clips` short frame sequences (static, moving subject, camera pan,
/// excessive motion, background change, keyword-blocked, too short) plus a
/// corpus.jsonl under `dir`. Returns the manifest path.
std::filesystem::path write_corpus(const std::filesystem::path& dir, int clips = 20, std::uint64_t seed = 7,
                                   int size = 128);

}  // namespace vedit::synth
