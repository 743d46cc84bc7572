// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "vedit/dataset_store.hpp"
#include "vedit/flow.hpp"
#include "vedit/mllm_client.hpp"
#include "vedit/motion_filter.hpp"
#include "vedit/pair_sampler.hpp"

namespace vedit {

inline constexpr std::string_view kPipelineVersion = "vedit-pipeline/1";

enum class OcclusionMethod { ForwardBackward, Photometric };
enum class ProviderKind { Mock, OpenAi };

struct FlowConfig {
    // Empty means the builtin estimator; otherwise .flo files are read from
    // <dir>/<sequence_id>/<from>_<to>.flo with six-digit frame indices.
    std::filesystem::path precomputed_dir;
    FlowEstimatorParams estimator;
    OcclusionMethod occlusion = OcclusionMethod::ForwardBackward;
    float tau_abs = 1.5f;
    float tau_rel = 0.01f;
    float photometric_threshold = 0.1f;
    // Fixed background/subject split in px; per-pair default when unset.
    std::optional<double> subject_cutoff;

    /// Accepts "builtin" or "precomputed:<dir>". Throws ConfigError.
    void set_backend(std::string_view spec);
    [[nodiscard]] std::string backend() const;
};

struct MllmConfig {
    ProviderKind provider = ProviderKind::Mock;
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-4o";
    double temperature = 0.2;
    int max_in_flight = 4;
    int max_retries = 4;
    std::filesystem::path instruction_template;  // built-in when empty
    std::filesystem::path caption_template;
    // Caption videos that arrive without one, from their first frame.
    bool caption_videos = true;
    // Caption the two frames of every instructed pair.
    bool caption_frames = true;
};

struct PipelineConfig {
    std::filesystem::path corpus;
    std::filesystem::path output;
    std::filesystem::path work_dir;  // defaults to "<output>-work"
    std::string decoder_command;
    std::string created = "1970-01-01T00:00:00Z";
    int workers = 1;
    std::uint64_t seed = 0;
    SampleOptions sampling;
    KeywordFilterConfig keywords;
    FlowConfig flow;
    MotionThresholds thresholds;
    bool scale_thresholds = true;
    MllmConfig mllm;
    StoreOptions store;
    // Test hook: SIGKILL the process instead of issuing MLLM call N + 1.
    long halt_after_mllm_calls = 0;

    /// Relative paths resolve against `base_dir`. Unknown keys and malformed
    /// values throw ConfigError.
    static PipelineConfig from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);
    static PipelineConfig load(const std::filesystem::path& path);
    [[nodiscard]] nlohmann::json to_json() const;

    /// Throws ConfigError on missing paths or out-of-range values.
    void validate() const;
    [[nodiscard]] std::filesystem::path journal_path() const;
};

enum class CandidateStatus { Pending, Passed, Instructed, Packed, Dropped };

std::string_view to_string(CandidateStatus s) noexcept;
std::optional<CandidateStatus> parse_status(std::string_view s) noexcept;

struct JournalEntry {
    CandidateStatus status = CandidateStatus::Pending;
    // Accumulated payload; later records overwrite keys of earlier ones.
    nlohmann::json fields = nlohmann::json::object();
};

/// Append-only JSONL log of candidate progress and captions. Each record is a
/// single write(2) on an O_APPEND descriptor; a torn trailing line is ignored
/// on load.
class Journal {
  public:
    explicit Journal(std::filesystem::path path);
    ~Journal();
    Journal(const Journal&) = delete;
    Journal& operator=(const Journal&) = delete;

    /// Advances `id` to `status`, merging `fields`. Pending < Passed <
    /// Instructed < Packed; Dropped is reachable from any state but Packed and
    /// is final. Repeating the current status merges fields. Throws
    /// StageFailure on a backward move.
    void advance(const std::string& id, CandidateStatus status, const nlohmann::json& fields = nlohmann::json::object());

    [[nodiscard]] std::optional<JournalEntry> find(const std::string& id) const;
    [[nodiscard]] std::map<std::string, JournalEntry> entries() const;

    [[nodiscard]] std::optional<std::string> caption(const std::string& key) const;
    void put_caption(const std::string& key, const std::string& text);

    [[nodiscard]] const std::filesystem::path& path() const noexcept { return path_; }

  private:
    void append(const nlohmann::json& line);
    void apply(const nlohmann::json& line);

    std::filesystem::path path_;
    int fd_ = -1;
    mutable std::mutex mu_;
    std::map<std::string, JournalEntry> entries_;
    std::map<std::string, std::string> captions_;
};

/// First 16 hex digits of sha256("seq|src|tgt|reversed|version").
std::string candidate_id(const FramePairCandidate& pair, std::string_view version = kPipelineVersion);

/// Runs fn(i) for i in [0, n) on `workers` threads pulling from a shared
/// counter. Exceptions are collected per index.
std::map<std::size_t, std::string> parallel_for(std::size_t n, int workers,
                                                const std::function<void(std::size_t)>& fn);

struct PairAnalysis {
    FlowStats stats;
    double occlusion_ratio = 0.0;
    FilterVerdict verdict;
};

/// Flow, occlusion and motion verdict for one pair. `fwd`/`bwd` replace the
/// builtin estimate when given; `bwd` is only needed for forward-backward
/// occlusion.
PairAnalysis analyze_pair(const Image& src, const Image& tgt, const FlowConfig& flow, const MotionThresholds& th,
                          bool scale_thresholds, const FlowField* fwd = nullptr, const FlowField* bwd = nullptr);

struct Candidate {
    std::string id;
    FramePairCandidate pair;
};

struct ScanSummary {
    std::size_t videos = 0;
    std::size_t keyword_filtered = 0;
    std::size_t too_short = 0;
    std::size_t kept = 0;
    std::size_t candidates = 0;
};

struct StageCounts {
    std::size_t pending = 0;
    std::size_t passed = 0;
    std::size_t instructed = 0;
    std::size_t packed = 0;
    std::map<std::string, std::size_t> dropped;

    [[nodiscard]] nlohmann::json to_json() const;
};

struct RunResult {
    ShardManifest manifest;
    std::string manifest_sha256;
    StatsReport stats;
    long mllm_calls = 0;
};

/// Stage driver over one config. Every stage first runs the ones before it;
/// work already recorded in the journal is skipped, so stages are idempotent
/// and an interrupted run resumes where it stopped.
class Pipeline {
  public:
    /// Uses the configured provider; validates the config.
    explicit Pipeline(PipelineConfig cfg);
    /// Uses an externally owned provider (the config's provider kind is ignored).
    Pipeline(PipelineConfig cfg, MllmProvider& provider);
    ~Pipeline();

    ScanSummary scan();
    ScanSummary sample();
    StageCounts filter();
    StageCounts instruct();
    ShardManifest pack();
    RunResult run();

    [[nodiscard]] StageCounts counts() const;
    [[nodiscard]] const std::vector<Candidate>& candidates() const noexcept { return candidates_; }
    [[nodiscard]] long mllm_calls() const noexcept;
    [[nodiscard]] const PipelineConfig& config() const noexcept { return cfg_; }
    [[nodiscard]] Journal& journal() noexcept { return *journal_; }

  private:
    class CallGate;
    struct CaptionSlot;

    std::string caption_once(const std::string& key, const std::function<Image()>& load);
    const FrameSequence& sequence(const std::string& id) const;
    Image load_frame(const FrameSequence& seq, int index) const;

    PipelineConfig cfg_;
    std::unique_ptr<MllmProvider> owned_provider_;
    std::unique_ptr<CallGate> gate_;
    std::unique_ptr<Journal> journal_;
    PromptTemplate instruct_tmpl_;
    PromptTemplate caption_tmpl_;
    std::vector<FrameSequence> sequences_;
    std::map<std::string, std::size_t, std::less<>> sequence_index_;
    std::vector<Candidate> candidates_;
    ScanSummary summary_;
    bool scanned_ = false;
    bool sampled_ = false;
    std::mutex caption_mu_;
    std::map<std::string, std::shared_ptr<CaptionSlot>> caption_slots_;
};

struct BenchStage {
    double seconds = 0.0;
    double pairs_per_s = 0.0;
};

struct BenchRow {
    int workers = 0;
    BenchStage flow_filter;
    BenchStage instruct;
};

struct BenchReport {
    std::size_t n_pairs = 0;
    int width = 0;
    int height = 0;
    unsigned hardware_threads = 0;
    std::vector<BenchRow> rows;

    [[nodiscard]] nlohmann::json to_json() const;
    static BenchReport from_json(const nlohmann::json& j);
    /// flow_filter pairs/s of the `workers` row over the 1-worker row; 0 if absent.
    [[nodiscard]] double flow_speedup(int workers) const;
};

/// Times the flow/filter and instruct stages on `n_pairs` synthetic pairs
/// (mock MLLM) at each worker count. Zero pairs give an empty report.
BenchReport bench(const PipelineConfig& cfg, std::size_t n_pairs, int size = 256,
                  const std::vector<int>& worker_counts = {1, 2, 4});

}  // namespace vedit
