// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "vedit/error.hpp"

namespace vedit {

struct FrameRef {
    int index = 0;
    std::filesystem::path path;
};

/// One decoded clip: index-ordered frame files plus an optional caption.
struct FrameSequence {
    std::string id;
    double fps = 0.0;
    std::vector<FrameRef> frames;
    std::optional<std::string> caption;

    /// Seconds from the first frame to the last.
    [[nodiscard]] double duration() const;
    /// Throws InvalidArgument when fps <= 0, no frames, or indices not strictly increasing.
    void validate() const;
};

struct FramePairCandidate {
    std::string sequence_id;
    int src_index = 0;
    int tgt_index = 0;
    double interval_s = 0.0;
    // Edit direction runs from the later frame to the earlier one.
    bool reversed = false;

    friend bool operator==(const FramePairCandidate&, const FramePairCandidate&) = default;
};

struct KeywordFilterConfig {
    std::set<std::string> blocklist{"landscape", "abstract", "still"};
    bool enabled = true;
};

/// True keeps the video. A blocklisted keyword matching a whole word
/// (case-insensitive) rejects it; an empty caption is kept.
bool keyword_filter(std::string_view caption, const KeywordFilterConfig& cfg);

struct SampleOptions {
    double interval_s = 3.0;
    double stride_s = 3.0;
    // Also emit each pair in the reverse edit direction.
    bool include_reversed = false;
};

struct SampleResult {
    std::vector<FramePairCandidate> pairs;
    // Set to SequenceTooShort when the clip is shorter than the interval.
    std::optional<Errc> skipped;
};

SampleResult sample_pairs(const FrameSequence& seq, const SampleOptions& opts = {});

/// Reads the JSONL corpus manifest ({id, frames_dir, fps, caption?} per line).
/// frames_dir is resolved relative to the manifest's directory; frame files
/// are the PNG/JPEG files with purely numeric stems. When an entry carries
/// `video` instead of `frames_dir`, `decoder_command` is run with {input} and
/// {output} substituted to decode into a cache directory first.
std::vector<FrameSequence> load_corpus_manifest(const std::filesystem::path& manifest,
                                                const std::string& decoder_command = {});

/// Frame files of one directory, sorted by numeric index.
std::vector<FrameRef> scan_frames_dir(const std::filesystem::path& dir);

}  // namespace vedit
