// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vedit/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <atomic>
#include <cerrno>
#include <csignal>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include "vedit/codec.hpp"
#include "vedit/image.hpp"
#include "vedit/instruction.hpp"

namespace vedit {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Config

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(Errc::ConfigError, msg); }

void check_keys(const json& j, std::string_view section, std::initializer_list<std::string_view> allowed) {
    if (!j.is_object()) config_error(std::string(section) + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
            config_error(std::string(section) + ": unknown key '" + key + "'");
        }
    }
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
    if (!j.contains(key) || j.at(key).is_null()) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        config_error(std::string("'") + key + "': " + e.what());
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    const fs::path path(p);
    return path.is_absolute() ? path : (base / path).lexically_normal();
}

void read_path(const json& j, const char* key, const fs::path& base, fs::path& out) {
    std::string s;
    read_opt(j, key, s);
    if (!s.empty()) out = resolve(base, s);
}

std::string_view occlusion_name(OcclusionMethod m) { return m == OcclusionMethod::Photometric ? "photometric" : "fb"; }

}  // namespace

void FlowConfig::set_backend(std::string_view spec) {
    constexpr std::string_view prefix = "precomputed:";
    if (spec == "builtin") {
        precomputed_dir.clear();
    } else if (spec.starts_with(prefix) && spec.size() > prefix.size()) {
        precomputed_dir = fs::path(std::string(spec.substr(prefix.size())));
    } else {
        config_error("flow backend must be 'builtin' or 'precomputed:<dir>', got '" + std::string(spec) + "'");
    }
}

std::string FlowConfig::backend() const {
    return precomputed_dir.empty() ? "builtin" : "precomputed:" + precomputed_dir.string();
}

PipelineConfig PipelineConfig::from_json(const json& j, const fs::path& base_dir) {
    check_keys(j, "config",
               {"corpus", "output", "work_dir", "decoder_command", "created", "workers", "seed", "sampling", "keywords",
                "flow", "thresholds", "mllm", "store", "halt_after_mllm_calls"});
    PipelineConfig c;
    read_path(j, "corpus", base_dir, c.corpus);
    read_path(j, "output", base_dir, c.output);
    read_path(j, "work_dir", base_dir, c.work_dir);
    read_opt(j, "decoder_command", c.decoder_command);
    read_opt(j, "created", c.created);
    read_opt(j, "workers", c.workers);
    read_opt(j, "seed", c.seed);
    read_opt(j, "halt_after_mllm_calls", c.halt_after_mllm_calls);

    if (j.contains("sampling")) {
        const auto& s = j.at("sampling");
        check_keys(s, "sampling", {"interval_s", "stride_s", "include_reversed"});
        read_opt(s, "interval_s", c.sampling.interval_s);
        read_opt(s, "stride_s", c.sampling.stride_s);
        read_opt(s, "include_reversed", c.sampling.include_reversed);
    }
    if (j.contains("keywords")) {
        const auto& k = j.at("keywords");
        check_keys(k, "keywords", {"enabled", "blocklist"});
        read_opt(k, "enabled", c.keywords.enabled);
        if (k.contains("blocklist")) {
            std::vector<std::string> words;
            read_opt(k, "blocklist", words);
            c.keywords.blocklist.clear();
            for (auto& w : words) {
                std::transform(w.begin(), w.end(), w.begin(), [](unsigned char ch) { return std::tolower(ch); });
                c.keywords.blocklist.insert(w);
            }
        }
    }
    if (j.contains("flow")) {
        const auto& f = j.at("flow");
        check_keys(f, "flow",
                   {"backend", "levels", "iterations", "window_radius", "regularization", "median_filter",
                    "propagation_reach", "search_radius", "occlusion", "tau_abs", "tau_rel", "photometric_threshold",
                    "subject_cutoff"});
        std::string backend = "builtin";
        read_opt(f, "backend", backend);
        c.flow.set_backend(backend);
        if (!c.flow.precomputed_dir.empty()) c.flow.precomputed_dir = resolve(base_dir, c.flow.precomputed_dir.string());
        auto& e = c.flow.estimator;
        read_opt(f, "levels", e.levels);
        read_opt(f, "iterations", e.iterations);
        read_opt(f, "window_radius", e.window_radius);
        read_opt(f, "regularization", e.regularization);
        read_opt(f, "median_filter", e.median_filter);
        read_opt(f, "propagation_reach", e.propagation_reach);
        read_opt(f, "search_radius", e.search_radius);
        std::string occl = "fb";
        read_opt(f, "occlusion", occl);
        if (occl == "fb") {
            c.flow.occlusion = OcclusionMethod::ForwardBackward;
        } else if (occl == "photometric") {
            c.flow.occlusion = OcclusionMethod::Photometric;
        } else {
            config_error("flow.occlusion must be 'fb' or 'photometric'");
        }
        read_opt(f, "tau_abs", c.flow.tau_abs);
        read_opt(f, "tau_rel", c.flow.tau_rel);
        read_opt(f, "photometric_threshold", c.flow.photometric_threshold);
        if (f.contains("subject_cutoff") && !f.at("subject_cutoff").is_null()) {
            double v = 0.0;
            read_opt(f, "subject_cutoff", v);
            c.flow.subject_cutoff = v;
        }
    }
    if (j.contains("thresholds")) {
        const auto& t = j.at("thresholds");
        check_keys(t, "thresholds", {"mag_min", "mag_max", "occl_max", "stat", "scale_with_resolution"});
        read_opt(t, "mag_min", c.thresholds.mag_min);
        read_opt(t, "mag_max", c.thresholds.mag_max);
        read_opt(t, "occl_max", c.thresholds.occl_max);
        read_opt(t, "scale_with_resolution", c.scale_thresholds);
        if (t.contains("stat")) {
            std::string s;
            read_opt(t, "stat", s);
            const auto stat = parse_magnitude_stat(s);
            if (!stat) config_error("thresholds.stat must be mean, p50 or p95");
            c.thresholds.stat = *stat;
        }
    }
    if (j.contains("mllm")) {
        const auto& m = j.at("mllm");
        check_keys(m, "mllm",
                   {"provider", "base_url", "model", "temperature", "max_in_flight", "max_retries",
                    "instruction_template", "caption_template", "caption_videos", "caption_frames"});
        std::string provider = "mock";
        read_opt(m, "provider", provider);
        if (provider == "mock") {
            c.mllm.provider = ProviderKind::Mock;
        } else if (provider == "openai") {
            c.mllm.provider = ProviderKind::OpenAi;
        } else {
            config_error("mllm.provider must be 'mock' or 'openai'");
        }
        read_opt(m, "base_url", c.mllm.base_url);
        read_opt(m, "model", c.mllm.model);
        read_opt(m, "temperature", c.mllm.temperature);
        read_opt(m, "max_in_flight", c.mllm.max_in_flight);
        read_opt(m, "max_retries", c.mllm.max_retries);
        read_path(m, "instruction_template", base_dir, c.mllm.instruction_template);
        read_path(m, "caption_template", base_dir, c.mllm.caption_template);
        read_opt(m, "caption_videos", c.mllm.caption_videos);
        read_opt(m, "caption_frames", c.mllm.caption_frames);
    }
    if (j.contains("store")) {
        const auto& s = j.at("store");
        check_keys(s, "store", {"shard_capacity", "image_mode"});
        read_opt(s, "shard_capacity", c.store.capacity);
        std::string mode = "copy";
        read_opt(s, "image_mode", mode);
        if (mode == "copy") {
            c.store.image_mode = ImageMode::Copy;
        } else if (mode == "reference") {
            c.store.image_mode = ImageMode::Reference;
        } else {
            config_error("store.image_mode must be 'copy' or 'reference'");
        }
    }
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    std::string text;
    try {
        text = read_file(path);
    } catch (const Error& e) {
        config_error("cannot read config " + path.string() + ": " + e.what());
    }
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        config_error("config " + path.string() + " is not valid JSON: " + e.what());
    }
    return from_json(j, fs::absolute(path).parent_path());
}

json PipelineConfig::to_json() const {
    const auto& e = flow.estimator;
    json j = {
        {"corpus", corpus.string()},
        {"output", output.string()},
        {"work_dir", work_dir.string()},
        {"decoder_command", decoder_command},
        {"created", created},
        {"workers", workers},
        {"seed", seed},
        {"halt_after_mllm_calls", halt_after_mllm_calls},
        {"sampling",
         {{"interval_s", sampling.interval_s},
          {"stride_s", sampling.stride_s},
          {"include_reversed", sampling.include_reversed}}},
        {"keywords", {{"enabled", keywords.enabled}, {"blocklist", keywords.blocklist}}},
        {"flow",
         {{"backend", flow.backend()},
          {"levels", e.levels},
          {"iterations", e.iterations},
          {"window_radius", e.window_radius},
          {"regularization", e.regularization},
          {"median_filter", e.median_filter},
          {"propagation_reach", e.propagation_reach},
          {"search_radius", e.search_radius},
          {"occlusion", occlusion_name(flow.occlusion)},
          {"tau_abs", flow.tau_abs},
          {"tau_rel", flow.tau_rel},
          {"photometric_threshold", flow.photometric_threshold},
          {"subject_cutoff", flow.subject_cutoff ? json(*flow.subject_cutoff) : json(nullptr)}}},
        {"thresholds",
         {{"mag_min", thresholds.mag_min},
          {"mag_max", thresholds.mag_max},
          {"occl_max", thresholds.occl_max},
          {"stat", to_string(thresholds.stat)},
          {"scale_with_resolution", scale_thresholds}}},
        {"mllm",
         {{"provider", mllm.provider == ProviderKind::Mock ? "mock" : "openai"},
          {"base_url", mllm.base_url},
          {"model", mllm.model},
          {"temperature", mllm.temperature},
          {"max_in_flight", mllm.max_in_flight},
          {"max_retries", mllm.max_retries},
          {"instruction_template", mllm.instruction_template.string()},
          {"caption_template", mllm.caption_template.string()},
          {"caption_videos", mllm.caption_videos},
          {"caption_frames", mllm.caption_frames}}},
        {"store",
         {{"shard_capacity", store.capacity},
          {"image_mode", store.image_mode == ImageMode::Copy ? "copy" : "reference"}}},
    };
    return j;
}

void PipelineConfig::validate() const {
    if (workers < 1) config_error("workers must be at least 1");
    if (corpus.empty()) config_error("corpus is required");
    if (!fs::is_regular_file(corpus)) config_error("corpus manifest not found: " + corpus.string());
    if (output.empty()) config_error("output is required");
    if (!flow.precomputed_dir.empty() && !fs::is_directory(flow.precomputed_dir)) {
        config_error("precomputed flow directory not found: " + flow.precomputed_dir.string());
    }
    for (const auto& t : {mllm.instruction_template, mllm.caption_template}) {
        if (!t.empty() && !fs::is_regular_file(t)) config_error("template not found: " + t.string());
    }
    if (!(sampling.interval_s > 0.0)) config_error("sampling.interval_s must be positive");
    if (!(sampling.stride_s > 0.0)) config_error("sampling.stride_s must be positive");
    if (keywords.enabled && keywords.blocklist.empty()) config_error("keywords.blocklist is empty");
    const auto& e = flow.estimator;
    if (e.levels < 1 || e.iterations < 0 || e.window_radius < 1 || e.search_radius < 0 || !(e.regularization > 0.0f)) {
        config_error("flow estimator parameters out of range");
    }
    if (flow.tau_abs < 0.0f || flow.tau_rel < 0.0f || flow.photometric_threshold < 0.0f) {
        config_error("occlusion thresholds must be non-negative");
    }
    if (flow.subject_cutoff && !(*flow.subject_cutoff > 0.0)) config_error("flow.subject_cutoff must be positive");
    try {
        thresholds.validate();
    } catch (const Error& err) {
        config_error(err.what());
    }
    if (mllm.max_in_flight < 1) config_error("mllm.max_in_flight must be at least 1");
    if (mllm.max_retries < 0) config_error("mllm.max_retries must be non-negative");
    if (!(mllm.temperature >= 0.0 && mllm.temperature <= 2.0)) config_error("mllm.temperature must lie in [0, 2]");
    if (mllm.provider == ProviderKind::OpenAi && mllm.base_url.empty()) config_error("mllm.base_url is required");
    if (store.capacity == 0) config_error("store.shard_capacity must be positive");
    if (halt_after_mllm_calls < 0) config_error("halt_after_mllm_calls must be non-negative");
}

fs::path PipelineConfig::journal_path() const {
    fs::path dir = work_dir;
    if (dir.empty()) {
        fs::path out = output.lexically_normal();
        if (!out.has_filename()) out = out.parent_path();
        dir = out.parent_path() / (out.filename().string() + "-work");
    }
    return dir / "journal.jsonl";
}

// ---------------------------------------------------------------------------
// Journal

namespace {

constexpr std::array<std::string_view, 5> kStatusNames = {"pending", "passed", "instructed", "packed", "dropped"};

bool merge_changes(json& into, const json& fields) {
    bool changed = false;
    for (const auto& [k, v] : fields.items()) {
        if (!into.contains(k) || into.at(k) != v) {
            into[k] = v;
            changed = true;
        }
    }
    return changed;
}

}  // namespace

std::string_view to_string(CandidateStatus s) noexcept { return kStatusNames[static_cast<std::size_t>(s)]; }

std::optional<CandidateStatus> parse_status(std::string_view s) noexcept {
    for (std::size_t i = 0; i < kStatusNames.size(); ++i) {
        if (kStatusNames[i] == s) return static_cast<CandidateStatus>(i);
    }
    return std::nullopt;
}

Journal::Journal(fs::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) fs::create_directories(path_.parent_path());
    if (fs::exists(path_)) {
        std::string text = read_file(path_);
        const auto last_nl = text.rfind('\n');
        const std::size_t keep = last_nl == std::string::npos ? 0 : last_nl + 1;
        if (keep != text.size()) {
            fs::resize_file(path_, keep);
            text.resize(keep);
        }
        std::istringstream in(text);
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                apply(json::parse(line));
            } catch (const json::exception& e) {
                throw Error(Errc::CorruptRecord,
                            path_.string() + ":" + std::to_string(lineno) + ": unreadable journal line: " + e.what());
            }
        }
    }
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(Errc::IoError, "cannot open journal " + path_.string() + ": " + std::strerror(errno));
}

Journal::~Journal() {
    if (fd_ >= 0) ::close(fd_);
}

void Journal::apply(const json& line) {
    if (line.contains("caption")) {
        captions_[line.at("caption").get<std::string>()] = line.at("text").get<std::string>();
        return;
    }
    const auto status = parse_status(line.at("status").get<std::string>());
    if (!status) throw Error(Errc::CorruptRecord, "unknown journal status in " + path_.string());
    auto& entry = entries_[line.at("id").get<std::string>()];
    entry.status = *status;
    for (const auto& [k, v] : line.items()) {
        if (k != "id" && k != "status") entry.fields[k] = v;
    }
}

void Journal::append(const json& line) {
    const std::string text = line.dump() + "\n";
    const ssize_t n = ::write(fd_, text.data(), text.size());
    if (n != static_cast<ssize_t>(text.size())) {
        throw Error(Errc::IoError, "journal write failed: " + path_.string());
    }
}

void Journal::advance(const std::string& id, CandidateStatus status, const json& fields) {
    if (!fields.is_object() || fields.contains("id") || fields.contains("status")) {
        throw Error(Errc::InvalidArgument, "journal fields must be an object without id/status");
    }
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(id); it != entries_.end()) {
        const auto cur = it->second.status;
        const bool same = cur == status;
        const bool forward = status == CandidateStatus::Dropped
                                 ? cur != CandidateStatus::Packed
                                 : cur != CandidateStatus::Dropped && status > cur;
        if (!same && !forward) {
            throw Error(Errc::StageFailure, "candidate " + id + ": cannot move from " + std::string(to_string(cur)) +
                                                " to " + std::string(to_string(status)));
        }
        if (same) {
            json probe = it->second.fields;
            if (!merge_changes(probe, fields)) return;
        }
    }
    json line = fields;
    line["id"] = id;
    line["status"] = to_string(status);
    append(line);
    apply(line);
}

std::optional<JournalEntry> Journal::find(const std::string& id) const {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(id); it != entries_.end()) return it->second;
    return std::nullopt;
}

std::map<std::string, JournalEntry> Journal::entries() const {
    std::lock_guard lock(mu_);
    return entries_;
}

std::optional<std::string> Journal::caption(const std::string& key) const {
    std::lock_guard lock(mu_);
    if (auto it = captions_.find(key); it != captions_.end()) return it->second;
    return std::nullopt;
}

void Journal::put_caption(const std::string& key, const std::string& text) {
    std::lock_guard lock(mu_);
    if (auto it = captions_.find(key); it != captions_.end() && it->second == text) return;
    const json line = {{"caption", key}, {"text", text}};
    append(line);
    apply(line);
}

// ---------------------------------------------------------------------------
// Helpers

std::string candidate_id(const FramePairCandidate& pair, std::string_view version) {
    const std::string key = pair.sequence_id + "|" + std::to_string(pair.src_index) + "|" +
                            std::to_string(pair.tgt_index) + "|" + (pair.reversed ? "1" : "0") + "|" +
                            std::string(version);
    return sha256_hex(key).substr(0, 16);
}

std::map<std::size_t, std::string> parallel_for(std::size_t n, int workers,
                                                const std::function<void(std::size_t)>& fn) {
    std::map<std::size_t, std::string> errors;
    std::mutex err_mu;
    std::atomic<std::size_t> next{0};
    auto body = [&] {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
                fn(i);
            } catch (const std::exception& e) {
                std::lock_guard lock(err_mu);
                errors.emplace(i, e.what());
            }
        }
    };
    const auto threads = static_cast<std::size_t>(std::max(1, workers));
    if (threads == 1 || n <= 1) {
        body();
        return errors;
    }
    std::vector<std::jthread> pool;
    pool.reserve(std::min(threads, n));
    for (std::size_t t = 0; t < std::min(threads, n); ++t) pool.emplace_back(body);
    pool.clear();
    return errors;
}

PairAnalysis analyze_pair(const Image& src, const Image& tgt, const FlowConfig& flow, const MotionThresholds& th,
                          bool scale_thresholds, const FlowField* fwd, const FlowField* bwd) {
    if (!src.same_shape(tgt)) throw Error(Errc::DimensionMismatch, "source and target frames differ in shape");
    const FlowField f = fwd ? *fwd : estimate_flow(src, tgt, flow.estimator);
    if (f.width != src.width() || f.height != src.height()) {
        throw Error(Errc::DimensionMismatch, "flow field does not match the frame size");
    }
    OcclusionMask mask;
    if (flow.occlusion == OcclusionMethod::ForwardBackward) {
        const FlowField b = bwd ? *bwd : estimate_flow(tgt, src, flow.estimator);
        mask = occlusion_mask(f, b, flow.tau_abs, flow.tau_rel);
    } else {
        mask = photometric_occlusion(src, tgt, f, flow.photometric_threshold);
    }
    PairAnalysis out;
    const auto warp = backward_warp(tgt, f);
    out.stats = flow_stats(f, warp.valid);
    const double cutoff = flow.subject_cutoff ? *flow.subject_cutoff : default_subject_cutoff(f);
    out.occlusion_ratio = occlusion_ratio(mask, f, cutoff);
    const MotionThresholds eff = scale_thresholds ? th.scaled_for(src.width(), src.height()) : th;
    out.verdict = evaluate(out.stats, out.occlusion_ratio, eff);
    return out;
}

json StageCounts::to_json() const {
    return {{"pending", pending}, {"passed", passed}, {"instructed", instructed}, {"packed", packed},
            {"dropped", dropped}};
}

namespace {

json stats_json(const FlowStats& s) {
    return {{"mean_mag", s.mean_mag}, {"p50_mag", s.p50_mag}, {"p95_mag", s.p95_mag},
            {"valid_fraction", s.valid_fraction}};
}

FlowStats stats_from(const json& j) {
    FlowStats s;
    s.mean_mag = j.at("mean_mag").get<double>();
    s.p50_mag = j.at("p50_mag").get<double>();
    s.p95_mag = j.at("p95_mag").get<double>();
    s.valid_fraction = j.at("valid_fraction").get<double>();
    return s;
}

std::string drop_reason(Decision d) {
    switch (d) {
        case Decision::TooStatic: return "too_static";
        case Decision::TooDynamic: return "too_dynamic";
        case Decision::BackgroundChanged: return "background_changed";
        case Decision::Pass: break;
    }
    return "failed";
}

std::string flow_file(int from, int to) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%06d_%06d.flo", from, to);
    return buf;
}

[[noreturn]] void stage_failure(std::string_view stage, const std::vector<Candidate>& cands,
                                const std::vector<std::size_t>& todo, const std::map<std::size_t, std::string>& errs) {
    std::string msg = std::string(stage) + " failed for " + std::to_string(errs.size()) + " candidate(s):";
    std::size_t shown = 0;
    for (const auto& [i, what] : errs) {
        if (shown++ == 8) {
            msg += " ...";
            break;
        }
        msg += " [" + cands[todo[i]].id + "] " + what + ";";
    }
    throw Error(Errc::StageFailure, msg);
}

// Edit-direction frame indices of a candidate.
std::pair<int, int> edit_frames(const FramePairCandidate& p) {
    return p.reversed ? std::pair{p.tgt_index, p.src_index} : std::pair{p.src_index, p.tgt_index};
}

}  // namespace

// ---------------------------------------------------------------------------
// Pipeline

class Pipeline::CallGate final : public MllmProvider {
  public:
    CallGate(MllmProvider& inner, long halt_after) : inner_(inner), halt_after_(halt_after) {}

    [[nodiscard]] std::string id() const override { return inner_.id(); }

    ChatResult complete(const json& payload) override {
        const long n = calls_.fetch_add(1) + 1;
        if (halt_after_ > 0 && n > halt_after_) {
            std::raise(SIGKILL);
        }
        return inner_.complete(payload);
    }

    [[nodiscard]] long calls() const noexcept { return calls_.load(); }

  private:
    MllmProvider& inner_;
    long halt_after_;
    std::atomic<long> calls_{0};
};

struct Pipeline::CaptionSlot {
    std::mutex mu;
};

namespace {

std::unique_ptr<MllmProvider> make_provider(const MllmConfig& m) {
    if (m.provider == ProviderKind::Mock) return std::make_unique<MockMllmProvider>();
    ClientConfig cc;
    cc.base_url = m.base_url;
    cc.model = m.model;
    cc.max_in_flight = m.max_in_flight;
    cc.retry.max_retries = m.max_retries;
    return std::make_unique<OpenAiCompatibleClient>(cc);
}

PromptTemplate load_template(const fs::path& path, PromptTemplate fallback) {
    PromptTemplate t = path.empty() ? std::move(fallback) : PromptTemplate::load(path);
    return t;
}

}  // namespace

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    owned_provider_ = make_provider(cfg_.mllm);
    gate_ = std::make_unique<CallGate>(*owned_provider_, cfg_.halt_after_mllm_calls);
    journal_ = std::make_unique<Journal>(cfg_.journal_path());
    instruct_tmpl_ = load_template(cfg_.mllm.instruction_template, PromptTemplate::instruction_default());
    caption_tmpl_ = load_template(cfg_.mllm.caption_template, PromptTemplate::caption_default());
    instruct_tmpl_.validate();
}

Pipeline::Pipeline(PipelineConfig cfg, MllmProvider& provider) : cfg_(std::move(cfg)) {
    cfg_.validate();
    gate_ = std::make_unique<CallGate>(provider, cfg_.halt_after_mllm_calls);
    journal_ = std::make_unique<Journal>(cfg_.journal_path());
    instruct_tmpl_ = load_template(cfg_.mllm.instruction_template, PromptTemplate::instruction_default());
    caption_tmpl_ = load_template(cfg_.mllm.caption_template, PromptTemplate::caption_default());
    instruct_tmpl_.validate();
}

Pipeline::~Pipeline() = default;

long Pipeline::mllm_calls() const noexcept { return gate_->calls(); }

const FrameSequence& Pipeline::sequence(const std::string& id) const {
    const auto it = sequence_index_.find(id);
    if (it == sequence_index_.end()) throw Error(Errc::StageFailure, "unknown sequence " + id);
    return sequences_[it->second];
}

Image Pipeline::load_frame(const FrameSequence& seq, int index) const {
    for (const auto& f : seq.frames) {
        if (f.index == index) return load_image(f.path);
    }
    throw Error(Errc::IoError, "sequence " + seq.id + " has no frame " + std::to_string(index));
}

std::string Pipeline::caption_once(const std::string& key, const std::function<Image()>& load) {
    if (auto cached = journal_->caption(key)) return *cached;
    std::shared_ptr<CaptionSlot> slot;
    {
        std::lock_guard lock(caption_mu_);
        auto& s = caption_slots_[key];
        if (!s) s = std::make_shared<CaptionSlot>();
        slot = s;
    }
    std::lock_guard lock(slot->mu);
    if (auto cached = journal_->caption(key)) return *cached;
    const std::string text = caption(load(), *gate_, cfg_.mllm.model, caption_tmpl_);
    journal_->put_caption(key, text);
    return text;
}

ScanSummary Pipeline::scan() {
    if (scanned_) return summary_;
    auto all = load_corpus_manifest(cfg_.corpus, cfg_.decoder_command);
    summary_ = {};
    summary_.videos = all.size();

    if (cfg_.mllm.caption_videos) {
        std::vector<std::size_t> todo;
        for (std::size_t i = 0; i < all.size(); ++i) {
            if (!all[i].caption && !all[i].frames.empty()) todo.push_back(i);
        }
        std::vector<std::string> texts(todo.size());
        const auto errs = parallel_for(todo.size(), cfg_.workers, [&](std::size_t k) {
            const auto& seq = all[todo[k]];
            texts[k] = caption_once("video:" + seq.id, [&] { return load_image(seq.frames.front().path); });
        });
        if (!errs.empty()) {
            std::string msg = "scan failed for " + std::to_string(errs.size()) + " video(s):";
            for (const auto& [k, what] : errs) msg += " [" + all[todo[k]].id + "] " + what + ";";
            throw Error(Errc::StageFailure, msg);
        }
        for (std::size_t k = 0; k < todo.size(); ++k) all[todo[k]].caption = texts[k];
    }

    sequences_.clear();
    sequence_index_.clear();
    for (auto& seq : all) {
        if (!keyword_filter(seq.caption.value_or(""), cfg_.keywords)) {
            ++summary_.keyword_filtered;
            continue;
        }
        if (sequence_index_.contains(seq.id)) throw Error(Errc::StageFailure, "duplicate sequence id " + seq.id);
        sequence_index_.emplace(seq.id, sequences_.size());
        sequences_.push_back(std::move(seq));
    }
    summary_.kept = sequences_.size();
    scanned_ = true;
    return summary_;
}

ScanSummary Pipeline::sample() {
    scan();
    if (sampled_) return summary_;
    candidates_.clear();
    summary_.too_short = 0;
    std::set<std::string> seen;
    for (const auto& seq : sequences_) {
        const auto res = sample_pairs(seq, cfg_.sampling);
        if (res.skipped) {
            ++summary_.too_short;
            continue;
        }
        for (const auto& p : res.pairs) {
            Candidate c{candidate_id(p), p};
            if (!seen.insert(c.id).second) throw Error(Errc::StageFailure, "candidate id collision " + c.id);
            if (!journal_->find(c.id)) {
                journal_->advance(c.id, CandidateStatus::Pending,
                                  {{"sequence_id", p.sequence_id},
                                   {"src_index", p.src_index},
                                   {"tgt_index", p.tgt_index},
                                   {"interval_s", p.interval_s},
                                   {"reversed", p.reversed}});
            }
            candidates_.push_back(std::move(c));
        }
    }
    summary_.candidates = candidates_.size();
    sampled_ = true;
    return summary_;
}

StageCounts Pipeline::filter() {
    sample();
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
        const auto e = journal_->find(candidates_[i].id);
        if (!e || e->status == CandidateStatus::Pending) todo.push_back(i);
    }
    const auto errs = parallel_for(todo.size(), cfg_.workers, [&](std::size_t k) {
        const auto& c = candidates_[todo[k]];
        const auto& seq = sequence(c.pair.sequence_id);
        const auto [a, b] = edit_frames(c.pair);
        const Image src = load_frame(seq, a);
        const Image tgt = load_frame(seq, b);
        std::optional<FlowField> fwd;
        std::optional<FlowField> bwd;
        if (!cfg_.flow.precomputed_dir.empty()) {
            const fs::path dir = cfg_.flow.precomputed_dir / seq.id;
            fwd = load_flow(dir / flow_file(a, b));
            if (cfg_.flow.occlusion == OcclusionMethod::ForwardBackward) bwd = load_flow(dir / flow_file(b, a));
        }
        const auto res = analyze_pair(src, tgt, cfg_.flow, cfg_.thresholds, cfg_.scale_thresholds,
                                      fwd ? &*fwd : nullptr, bwd ? &*bwd : nullptr);
        json fields = {{"flow_stats", stats_json(res.stats)},
                       {"occl_ratio", res.occlusion_ratio},
                       {"decision", to_string(res.verdict.decision)}};
        if (res.verdict.decision == Decision::Pass) {
            journal_->advance(c.id, CandidateStatus::Passed, fields);
        } else {
            fields["reason"] = drop_reason(res.verdict.decision);
            journal_->advance(c.id, CandidateStatus::Dropped, fields);
        }
    });
    if (!errs.empty()) stage_failure("filter", candidates_, todo, errs);
    return counts();
}

StageCounts Pipeline::instruct() {
    filter();
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
        const auto e = journal_->find(candidates_[i].id);
        if (e && e->status == CandidateStatus::Passed) todo.push_back(i);
    }
    const ValidationRules rules;
    const InstructionSource source{cfg_.mllm.model, instruct_tmpl_.version};
    const auto errs = parallel_for(todo.size(), cfg_.workers, [&](std::size_t k) {
        const auto& c = candidates_[todo[k]];
        const auto& seq = sequence(c.pair.sequence_id);
        const auto [a, b] = edit_frames(c.pair);
        const Image src = load_frame(seq, a);
        const Image tgt = load_frame(seq, b);
        std::string src_caption;
        std::string tgt_caption;
        if (cfg_.mllm.caption_frames) {
            const std::string prefix = "frame:" + seq.id + ":";
            src_caption = caption_once(prefix + std::to_string(a), [&] { return src; });
            tgt_caption = caption_once(prefix + std::to_string(b), [&] { return tgt; });
        }
        const std::string prompt_caption = cfg_.mllm.caption_frames ? src_caption : seq.caption.value_or("");
        json payload = build_prompt(src, tgt,
                                    prompt_caption.empty() ? std::nullopt : std::optional<std::string>(prompt_caption),
                                    instruct_tmpl_, cfg_.mllm.model, cfg_.mllm.temperature);
        payload["seed"] = cfg_.seed;
        const auto reply = gate_->complete(payload);
        GenOutcome outcome;
        try {
            outcome = parse_response(reply.content, instruct_tmpl_, rules, source);
        } catch (const Error& e) {
            if (e.code() != Errc::EmptyResponse) throw;
            outcome = Rejected{"empty response"};
        }
        if (const auto* inst = std::get_if<Instruction>(&outcome)) {
            journal_->advance(c.id, CandidateStatus::Instructed,
                              {{"instruction", inst->text},
                               {"verb", inst->verb},
                               {"model", inst->source.model},
                               {"prompt_version", inst->source.prompt_version},
                               {"provider_id", gate_->id()},
                               {"src_caption", src_caption},
                               {"tgt_caption", tgt_caption}});
        } else {
            journal_->advance(c.id, CandidateStatus::Dropped,
                              {{"reason", "rejected"}, {"rejection", std::get<Rejected>(outcome).reason}});
        }
    });
    if (!errs.empty()) stage_failure("instruct", candidates_, todo, errs);
    return counts();
}

ShardManifest Pipeline::pack() {
    instruct();
    std::vector<std::size_t> order(candidates_.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
        const auto& p = candidates_[x].pair;
        const auto& q = candidates_[y].pair;
        return std::tie(p.sequence_id, p.src_index, p.tgt_index, p.reversed) <
               std::tie(q.sequence_id, q.src_index, q.tgt_index, q.reversed);
    });

    std::vector<std::size_t> ready;
    std::vector<std::string> stuck;
    for (const auto i : order) {
        const auto e = journal_->find(candidates_[i].id);
        if (!e) {
            stuck.push_back(candidates_[i].id);
        } else if (e->status == CandidateStatus::Instructed || e->status == CandidateStatus::Packed) {
            ready.push_back(i);
        } else if (e->status != CandidateStatus::Dropped) {
            stuck.push_back(candidates_[i].id);
        }
    }
    if (!stuck.empty()) {
        std::string msg = "pack: candidates not processed:";
        for (const auto& id : stuck) msg += " " + id;
        throw Error(Errc::StageFailure, msg);
    }

    // Verify the frames still decode before committing them to shards.
    std::vector<std::string> load_error(ready.size());
    parallel_for(ready.size(), cfg_.workers, [&](std::size_t k) {
        const auto& c = candidates_[ready[k]];
        const auto& seq = sequence(c.pair.sequence_id);
        const auto [a, b] = edit_frames(c.pair);
        try {
            (void)load_frame(seq, a);
            (void)load_frame(seq, b);
        } catch (const std::exception& e) {
            load_error[k] = e.what();
        }
    });

    std::vector<TripletRecord> records;
    std::vector<std::string> record_candidates;
    Histograms hist;
    for (std::size_t k = 0; k < ready.size(); ++k) {
        const auto& c = candidates_[ready[k]];
        if (!load_error[k].empty()) {
            journal_->advance(c.id, CandidateStatus::Dropped, {{"reason", "failed"}, {"error", load_error[k]}});
            continue;
        }
        const auto e = *journal_->find(c.id);
        const auto& f = e.fields;
        const auto& seq = sequence(c.pair.sequence_id);
        const auto [a, b] = edit_frames(c.pair);
        auto frame_path = [&](int idx) {
            for (const auto& fr : seq.frames) {
                if (fr.index == idx) return fr.path.string();
            }
            return std::string();
        };
        TripletRecord r;
        r.id = record_id(records.size());
        r.pair = c.pair;
        r.src_image = frame_path(a);
        r.tgt_image = frame_path(b);
        r.instruction.text = f.at("instruction").get<std::string>();
        r.instruction.verb = f.at("verb").get<std::string>();
        r.instruction.source = {f.at("model").get<std::string>(), f.at("prompt_version").get<std::string>()};
        r.src_caption = f.value("src_caption", "");
        r.tgt_caption = f.value("tgt_caption", "");
        r.flow_stats = stats_from(f.at("flow_stats"));
        r.occl_ratio = f.at("occl_ratio").get<double>();
        r.provenance = {std::string(kPipelineVersion), f.at("prompt_version").get<std::string>(),
                        f.at("provider_id").get<std::string>()};
        hist.add(r.flow_stats.mean_mag, r.occl_ratio);
        records.push_back(std::move(r));
        record_candidates.push_back(c.id);
    }

    Totals totals;
    totals.videos = summary_.videos;
    totals.videos_keyword_filtered = summary_.keyword_filtered;
    totals.videos_too_short = summary_.too_short;
    totals.candidates = candidates_.size();
    for (const auto& c : candidates_) {
        const auto e = *journal_->find(c.id);
        if (e.status != CandidateStatus::Dropped) continue;
        const std::string reason = e.fields.value("reason", "failed");
        if (reason == "too_static") {
            ++totals.too_static;
        } else if (reason == "too_dynamic") {
            ++totals.too_dynamic;
        } else if (reason == "background_changed") {
            ++totals.background_changed;
        } else if (reason == "rejected") {
            ++totals.rejected;
        } else {
            ++totals.failed;
        }
    }
    totals.accepted = records.size();
    if (totals.candidates != totals.accepted + totals.dropped()) {
        throw Error(Errc::StageFailure, "pack: candidate accounting does not reconcile");
    }

    auto manifest = write_dataset(records, cfg_.output, totals, hist, std::string(kPipelineVersion), cfg_.created,
                                  cfg_.store);
    for (std::size_t k = 0; k < records.size(); ++k) {
        journal_->advance(record_candidates[k], CandidateStatus::Packed, {{"record_id", records[k].id}});
    }
    return manifest;
}

StageCounts Pipeline::counts() const {
    StageCounts out;
    for (const auto& c : candidates_) {
        const auto e = journal_->find(c.id);
        switch (e ? e->status : CandidateStatus::Pending) {
            case CandidateStatus::Pending: ++out.pending; break;
            case CandidateStatus::Passed: ++out.passed; break;
            case CandidateStatus::Instructed: ++out.instructed; break;
            case CandidateStatus::Packed: ++out.packed; break;
            case CandidateStatus::Dropped: ++out.dropped[e->fields.value("reason", "failed")]; break;
        }
    }
    return out;
}

RunResult Pipeline::run() {
    RunResult out;
    out.manifest = pack();
    const fs::path manifest_path = cfg_.output / "manifest.json";
    out.manifest_sha256 = sha256_file_hex(manifest_path);
    out.stats = stats({manifest_path});
    out.mllm_calls = mllm_calls();
    return out;
}

}  // namespace vedit
