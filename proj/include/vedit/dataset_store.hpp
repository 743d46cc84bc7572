// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "vedit/flow.hpp"
#include "vedit/instruction.hpp"
#include "vedit/pair_sampler.hpp"

namespace vedit {

struct Provenance {
    std::string pipeline_version;
    std::string template_version;
    std::string provider_id;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

/// One accepted (source, target, instruction) example. Image paths are
/// relative to the dataset root when copied, as given otherwise.
struct TripletRecord {
    std::string id;
    FramePairCandidate pair;
    std::string src_image;
    std::string tgt_image;
    Instruction instruction;
    std::string src_caption;
    std::string tgt_caption;
    FlowStats flow_stats;
    double occl_ratio = 0.0;
    Provenance provenance;

    [[nodiscard]] nlohmann::json to_json() const;
    static TripletRecord from_json(const nlohmann::json& j);

    friend bool operator==(const TripletRecord& a, const TripletRecord& b);
};

enum class ImageMode { Copy, Reference };

struct StoreOptions {
    std::size_t capacity = 1000;
    ImageMode image_mode = ImageMode::Copy;
};

struct ShardEntry {
    std::string file;  // relative to the dataset root
    std::size_t count = 0;
    std::string sha256;
};

/// Candidate accounting carried in the manifest.
struct Totals {
    std::size_t videos = 0;
    std::size_t videos_keyword_filtered = 0;
    std::size_t videos_too_short = 0;
    std::size_t candidates = 0;
    std::size_t too_static = 0;
    std::size_t too_dynamic = 0;
    std::size_t background_changed = 0;
    std::size_t rejected = 0;
    std::size_t failed = 0;
    std::size_t accepted = 0;

    [[nodiscard]] std::size_t dropped() const noexcept {
        return too_static + too_dynamic + background_changed + rejected + failed;
    }
    Totals& operator+=(const Totals& o);
    friend bool operator==(const Totals&, const Totals&) = default;
};

inline constexpr std::array<double, 10> kMagnitudeBinEdges = {0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0};
inline constexpr std::size_t kOcclusionBins = 10;

/// Magnitude histogram (bins between kMagnitudeBinEdges plus an overflow bin)
/// and occlusion-ratio histogram over [0, 1] in tenths.
struct Histograms {
    std::array<std::size_t, kMagnitudeBinEdges.size()> magnitude{};
    std::array<std::size_t, kOcclusionBins> occlusion{};

    void add(double mag, double occl);
    Histograms& operator+=(const Histograms& o);
    friend bool operator==(const Histograms&, const Histograms&) = default;
};

struct ShardManifest {
    std::string format = "vedit-shards/1";
    std::string created = "1970-01-01T00:00:00Z";
    std::string pipeline_version;
    std::size_t capacity = 1000;
    std::vector<ShardEntry> shards;
    Totals totals;
    Histograms histograms;

    [[nodiscard]] nlohmann::json to_json() const;
    static ShardManifest from_json(const nlohmann::json& j);
    /// Canonical serialization (two-space indent, sorted keys, trailing newline).
    [[nodiscard]] std::string serialize() const;
};

/// Writes `records` (in order) to shard-NNNNN.jsonl under `root`, copying the
/// images next to it when requested. Throws CapacityExceeded / IoError.
ShardEntry write_shard(const std::vector<TripletRecord>& records, std::size_t shard_id,
                       const std::filesystem::path& root, const StoreOptions& opts = {});

/// Parses a shard. When `expected_sha256` is given the file must hash to it
/// (HashMismatch). Empty or unparsable content is CorruptRecord.
std::vector<TripletRecord> read_shard(const std::filesystem::path& path,
                                      const std::optional<std::string>& expected_sha256 = std::nullopt);

/// Splits `records` into capacity-sized shards, writes them and manifest.json.
ShardManifest write_dataset(const std::vector<TripletRecord>& records, const std::filesystem::path& root,
                            const Totals& totals, const Histograms& histograms, const std::string& pipeline_version,
                            const std::string& created, const StoreOptions& opts = {});

ShardManifest read_manifest(const std::filesystem::path& path);

/// All records of a dataset, verifying every shard against the manifest.
std::vector<TripletRecord> read_dataset(const std::filesystem::path& root);

struct StatsReport {
    Totals totals;
    Histograms histograms;
    std::map<std::string, std::size_t> verbs;

    [[nodiscard]] nlohmann::json to_json() const;
    [[nodiscard]] std::string to_table() const;
};

/// Aggregates manifests (and the verbs of their shards).
StatsReport stats(const std::vector<std::filesystem::path>& manifests);

std::string shard_file_name(std::size_t shard_id);
std::string record_id(std::size_t sequence);

}  // namespace vedit
