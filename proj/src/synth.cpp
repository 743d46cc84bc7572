// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vedit/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vedit/error.hpp"
#include "vedit/rng.hpp"

namespace vedit::synth {

namespace {

// Value noise on a coarse lattice, bilinearly interpolated to full size.
void add_octave(std::vector<float>& acc, int width, int height, int cell, float amplitude, GaussianStream& rng) {
    const int gw = width / cell + 2;
    const int gh = height / cell + 2;
    std::vector<float> lattice(static_cast<std::size_t>(gw) * gh);
    for (auto& v : lattice) v = static_cast<float>(rng.uniform());
    const float inv = 1.0f / static_cast<float>(cell);
    for (int y = 0; y < height; ++y) {
        const float fy = static_cast<float>(y) * inv;
        const int iy = static_cast<int>(fy);
        const float ty = fy - static_cast<float>(iy);
        for (int x = 0; x < width; ++x) {
            const float fx = static_cast<float>(x) * inv;
            const int ix = static_cast<int>(fx);
            const float tx = fx - static_cast<float>(ix);
            const float* r0 = &lattice[static_cast<std::size_t>(iy) * gw + ix];
            const float* r1 = r0 + gw;
            const float top = (1.0f - tx) * r0[0] + tx * r0[1];
            const float bottom = (1.0f - tx) * r1[0] + tx * r1[1];
            acc[static_cast<std::size_t>(y) * width + x] += amplitude * ((1.0f - ty) * top + ty * bottom);
        }
    }
}

void normalize(std::span<float> plane) {
    const auto [lo, hi] = std::minmax_element(plane.begin(), plane.end());
    const float a = *lo;
    const float span = std::max(*hi - a, 1e-6f);
    for (auto& v : plane) v = 0.05f + 0.9f * (v - a) / span;
}

Image crop(const Image& canvas, int x0, int y0, int width, int height) {
    Image out(width, height, canvas.channels());
    for (int c = 0; c < canvas.channels(); ++c) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) out.at(c, y, x) = canvas.at(c, y0 + y, x0 + x);
        }
    }
    return out;
}

void paste(Image& dst, const Image& patch, int x0, int y0) {
    for (int c = 0; c < dst.channels(); ++c) {
        for (int y = 0; y < patch.height(); ++y) {
            const int yy = y0 + y;
            if (yy < 0 || yy >= dst.height()) continue;
            for (int x = 0; x < patch.width(); ++x) {
                const int xx = x0 + x;
                if (xx < 0 || xx >= dst.width()) continue;
                dst.at(c, yy, xx) = patch.at(std::min(c, patch.channels() - 1), y, x);
            }
        }
    }
}

}  // namespace

Image textured_image(int width, int height, std::uint64_t seed, int channels) {
    if (width <= 0 || height <= 0 || (channels != 1 && channels != 3)) {
        throw Error(Errc::InvalidArgument, "bad texture shape");
    }
    Image out(width, height, channels);
    for (int c = 0; c < channels; ++c) {
        GaussianStream rng(seed, static_cast<std::uint64_t>(c));
        std::vector<float> acc(out.plane_size(), 0.0f);
        add_octave(acc, width, height, 16, 0.35f, rng);
        add_octave(acc, width, height, 8, 0.3f, rng);
        add_octave(acc, width, height, 4, 0.25f, rng);
        add_octave(acc, width, height, 2, 0.1f, rng);
        auto plane = out.plane(c);
        std::copy(acc.begin(), acc.end(), plane.begin());
        normalize(plane);
    }
    return out;
}

TranslatedPair translated_pair(int width, int height, int du, int dv, std::uint64_t seed, int channels) {
    const int pad = std::max(std::abs(du), std::abs(dv)) + 1;
    const Image canvas = textured_image(width + 2 * pad, height + 2 * pad, seed, channels);
    return {crop(canvas, pad, pad, width, height), crop(canvas, pad - du, pad - dv, width, height), du, dv};
}

OccluderScene occluder_scene(int width, int height, int size, int x0, int y0, double du, double dv,
                             std::uint64_t seed) {
    const double x1 = x0 + du;
    const double y1 = y0 + dv;
    if (size <= 0 || x0 < 0 || y0 < 0 || x0 + size > width || y0 + size > height || x1 < 0 || y1 < 0 ||
        x1 + size > width || y1 + size > height) {
        throw Error(Errc::InvalidArgument, "occluder must stay inside the frame");
    }
    const Image background = textured_image(width, height, seed);
    const Image occluder = textured_image(size + 1, size + 1, seed ^ 0x5bd1e995ULL);
    OccluderScene scene;
    scene.src = background;
    scene.tgt = background;
    scene.fwd = FlowField(width, height);
    scene.bwd = FlowField(width, height);
    const auto fdu = static_cast<float>(du);
    const auto fdv = static_cast<float>(dv);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const auto i = static_cast<std::size_t>(y) * width + x;
            if (x >= x0 && x < x0 + size && y >= y0 && y < y0 + size) {
                for (int c = 0; c < 3; ++c) scene.src.at(c, y, x) = occluder.at(c, y - y0, x - x0);
                scene.fwd.u[i] = fdu;
                scene.fwd.v[i] = fdv;
            }
            const double ox = x - x1;
            const double oy = y - y1;
            if (ox >= 0.0 && ox < size && oy >= 0.0 && oy < size) {
                const int ix = static_cast<int>(ox);
                const int iy = static_cast<int>(oy);
                const auto fx = static_cast<float>(ox - ix);
                const auto fy = static_cast<float>(oy - iy);
                for (int c = 0; c < 3; ++c) {
                    const float top = (1.0f - fx) * occluder.at(c, iy, ix) + fx * occluder.at(c, iy, ix + 1);
                    const float bottom =
                        (1.0f - fx) * occluder.at(c, iy + 1, ix) + fx * occluder.at(c, iy + 1, ix + 1);
                    scene.tgt.at(c, y, x) = (1.0f - fy) * top + fy * bottom;
                }
                scene.bwd.u[i] = -fdu;
                scene.bwd.v[i] = -fdv;
            }
        }
    }
    const double overlap_w = std::max(0.0, size - std::fabs(du));
    const double overlap_h = std::max(0.0, size - std::fabs(dv));
    scene.covered_area = static_cast<double>(size) * size - overlap_w * overlap_h;
    return scene;
}

namespace {

enum class ClipKind { Static, Subject, Pan, Excessive, BackgroundChange, Blocked, TooShort };

constexpr std::array<ClipKind, 7> kKinds = {ClipKind::Static,    ClipKind::Subject,          ClipKind::Pan,
                                            ClipKind::Excessive, ClipKind::BackgroundChange, ClipKind::Blocked,
                                            ClipKind::TooShort};

constexpr std::array<const char*, 7> kCaptions = {
    "a quiet room with a patterned wall",
    "a tile slides across a mottled floor",
    "the camera drifts over a textured surface",
    "a fast whip pan across a busy pattern",
    "a window shows a flickering scene outside",
    "a still landscape at dusk",
    "a brief glimpse of a patterned rug",
};

std::vector<Image> clip_frames(ClipKind kind, int size, std::uint64_t seed) {
    const int n = kind == ClipKind::TooShort ? 2 : 7;
    std::vector<Image> frames;
    frames.reserve(static_cast<std::size_t>(n));
    switch (kind) {
        case ClipKind::Static:
        case ClipKind::TooShort: {
            const Image still = textured_image(size, size, seed);
            for (int i = 0; i < n; ++i) frames.push_back(still);
            break;
        }
        case ClipKind::Subject: {
            const Image bg = textured_image(size, size, seed);
            const int side = size * 3 / 8;
            const Image tile = textured_image(side, side, seed + 1);
            for (int i = 0; i < n; ++i) {
                Image f = bg;
                paste(f, tile, size / 8 + 3 * i, size / 3);
                frames.push_back(std::move(f));
            }
            break;
        }
        case ClipKind::Pan:
        case ClipKind::Blocked:
        case ClipKind::Excessive: {
            const int step = kind == ClipKind::Excessive ? 6 : 1;
            const int pad = step * n + 2;
            const Image canvas = textured_image(size + 2 * pad, size + 2 * pad, seed);
            for (int i = 0; i < n; ++i) frames.push_back(crop(canvas, pad - step * i, pad - (step * i) / 2, size, size));
            break;
        }
        case ClipKind::BackgroundChange: {
            const Image bg = textured_image(size, size, seed);
            for (int i = 0; i < n; ++i) {
                Image f = bg;
                const Image fresh = textured_image(size - size / 4, size, seed + 100 + static_cast<std::uint64_t>(i));
                paste(f, fresh, size / 4, 0);
                frames.push_back(std::move(f));
            }
            break;
        }
    }
    return frames;
}

}  // namespace

std::filesystem::path write_corpus(const std::filesystem::path& dir, int clips, std::uint64_t seed, int size) {
    if (clips < 0 || size < 32) throw Error(Errc::InvalidArgument, "bad synthetic corpus parameters");
    std::filesystem::create_directories(dir);
    const auto manifest = dir / "corpus.jsonl";
    std::ofstream out(manifest, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + manifest.string());
    for (int i = 0; i < clips; ++i) {
        const auto kind = kKinds[static_cast<std::size_t>(i) % kKinds.size()];
        char id[32];
        std::snprintf(id, sizeof id, "clip%03d", i);
        const auto frames_dir = dir / id;
        std::filesystem::create_directories(frames_dir);
        const auto frames = clip_frames(kind, size, seed * 1000 + static_cast<std::uint64_t>(i));
        for (std::size_t f = 0; f < frames.size(); ++f) {
            char name[32];
            std::snprintf(name, sizeof name, "%06zu.png", f);
            save_png(frames[f], frames_dir / name);
        }
        nlohmann::json line = {{"id", id}, {"frames_dir", id}, {"fps", 1.0}};
        // Every other clip leaves its caption to the captioning model.
        if (kind == ClipKind::Blocked || i % 2 == 0) line["caption"] = kCaptions[static_cast<std::size_t>(kind)];
        out << line.dump() << '\n';
    }
    if (!out) throw Error(Errc::IoError, "cannot write " + manifest.string());
    return manifest;
}

}  // namespace vedit::synth
