// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vedit/pair_sampler.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>

#include <json.hpp>

namespace vedit {

double FrameSequence::duration() const {
    if (frames.empty() || fps <= 0.0) return 0.0;
    return static_cast<double>(frames.back().index - frames.front().index) / fps;
}

void FrameSequence::validate() const {
    if (!(fps > 0.0)) throw Error(Errc::InvalidArgument, "sequence " + id + ": fps must be positive");
    if (frames.empty()) throw Error(Errc::InvalidArgument, "sequence " + id + ": no frames");
    for (std::size_t i = 1; i < frames.size(); ++i) {
        if (frames[i].index <= frames[i - 1].index) {
            throw Error(Errc::InvalidArgument, "sequence " + id + ": frame indices not strictly increasing");
        }
    }
}

bool keyword_filter(std::string_view caption, const KeywordFilterConfig& cfg) {
    if (!cfg.enabled || caption.empty()) return true;
    std::string word;
    auto flush = [&]() {
        const bool hit = !word.empty() && cfg.blocklist.contains(word);
        word.clear();
        return hit;
    };
    for (const char ch : caption) {
        const auto uc = static_cast<unsigned char>(ch);
        if (std::isalnum(uc) != 0 || ch == '_') {
            word.push_back(static_cast<char>(std::tolower(uc)));
        } else if (flush()) {
            return false;
        }
    }
    return !flush();
}

namespace {

// Position in `frames` of the frame nearest to `t` seconds after the first frame.
std::size_t nearest_frame(const FrameSequence& seq, double t) {
    const double target = static_cast<double>(seq.frames.front().index) + t * seq.fps;
    auto it = std::lower_bound(seq.frames.begin(), seq.frames.end(), target,
                               [](const FrameRef& f, double v) { return static_cast<double>(f.index) < v; });
    if (it == seq.frames.end()) return seq.frames.size() - 1;
    const auto pos = static_cast<std::size_t>(it - seq.frames.begin());
    if (pos == 0) return 0;
    const double above = static_cast<double>(it->index) - target;
    const double below = target - static_cast<double>(std::prev(it)->index);
    // Ties go to the earlier frame.
    return below <= above ? pos - 1 : pos;
}

}  // namespace

SampleResult sample_pairs(const FrameSequence& seq, const SampleOptions& opts) {
    if (!(opts.interval_s > 0.0) || !(opts.stride_s > 0.0)) {
        throw Error(Errc::InvalidArgument, "interval and stride must be positive");
    }
    seq.validate();
    SampleResult result;
    const double duration = seq.duration();
    constexpr double kSlack = 1e-9;
    if (duration + kSlack < opts.interval_s) {
        result.skipped = Errc::SequenceTooShort;
        return result;
    }
    const auto count = static_cast<long>(std::floor((duration - opts.interval_s) / opts.stride_s + kSlack)) + 1;
    for (long k = 0; k < count; ++k) {
        const double t = static_cast<double>(k) * opts.stride_s;
        const auto& src = seq.frames[nearest_frame(seq, t)];
        const auto& tgt = seq.frames[nearest_frame(seq, t + opts.interval_s)];
        if (tgt.index <= src.index) continue;
        FramePairCandidate pair{seq.id, src.index, tgt.index, static_cast<double>(tgt.index - src.index) / seq.fps,
                                false};
        result.pairs.push_back(pair);
        if (opts.include_reversed) {
            pair.reversed = true;
            result.pairs.push_back(pair);
        }
    }
    return result;
}

std::vector<FrameRef> scan_frames_dir(const std::filesystem::path& dir) {
    std::vector<FrameRef> frames;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(dir, ec)) {
        if (!entry.is_regular_file()) continue;
        std::string ext = entry.path().extension().string();
        std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
        if (ext != ".png" && ext != ".jpg" && ext != ".jpeg") continue;
        const std::string stem = entry.path().stem().string();
        if (stem.empty() || !std::all_of(stem.begin(), stem.end(), [](unsigned char c) { return std::isdigit(c); })) {
            continue;
        }
        frames.push_back({std::stoi(stem), entry.path()});
    }
    if (ec) throw Error(Errc::IoError, "cannot list " + dir.string() + ": " + ec.message());
    std::sort(frames.begin(), frames.end(), [](const FrameRef& a, const FrameRef& b) { return a.index < b.index; });
    return frames;
}

namespace {

std::string substitute(std::string text, const std::string& key, const std::string& value) {
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
        text.replace(pos, key.size(), value);
    }
    return text;
}

}  // namespace

std::vector<FrameSequence> load_corpus_manifest(const std::filesystem::path& manifest,
                                                const std::string& decoder_command) {
    std::ifstream in(manifest);
    if (!in) throw Error(Errc::IoError, "cannot open corpus manifest " + manifest.string());
    const auto base = manifest.parent_path();
    std::vector<FrameSequence> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::ConfigError, manifest.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        FrameSequence seq;
        seq.id = j.at("id").get<std::string>();
        seq.fps = j.at("fps").get<double>();
        if (j.contains("caption") && j["caption"].is_string()) seq.caption = j["caption"].get<std::string>();
        std::filesystem::path dir;
        if (j.contains("frames_dir")) {
            dir = base / j["frames_dir"].get<std::string>();
        } else if (j.contains("video") && !decoder_command.empty()) {
            dir = base / ".decoded" / seq.id;
            std::filesystem::create_directories(dir);
            const std::string cmd = substitute(substitute(decoder_command, "{input}", (base / j["video"].get<std::string>()).string()),
                                               "{output}", dir.string());
            if (std::system(cmd.c_str()) != 0) throw Error(Errc::IoError, "decoder failed for " + seq.id);
        } else {
            throw Error(Errc::ConfigError, "entry " + seq.id + " has neither frames_dir nor a decodable video");
        }
        seq.frames = scan_frames_dir(dir);
        seq.validate();
        out.push_back(std::move(seq));
    }
    return out;
}

}  // namespace vedit
