// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vedit/dataset_store.hpp"

#include <algorithm>
#include <cstdio>
#include <iomanip>
#include <sstream>

#include "vedit/codec.hpp"
#include "vedit/error.hpp"
#include "vedit/image.hpp"

namespace vedit {

namespace {

nlohmann::json stats_to_json(const FlowStats& s) {
    return {{"mean_mag", s.mean_mag}, {"p50_mag", s.p50_mag}, {"p95_mag", s.p95_mag}, {"valid_fraction", s.valid_fraction}};
}

FlowStats stats_from_json(const nlohmann::json& j) {
    return {j.at("mean_mag").get<double>(), j.at("p50_mag").get<double>(), j.at("p95_mag").get<double>(),
            j.at("valid_fraction").get<double>()};
}

}  // namespace

nlohmann::json TripletRecord::to_json() const {
    return {
        {"id", id},
        {"pair",
         {{"sequence_id", pair.sequence_id},
          {"src_index", pair.src_index},
          {"tgt_index", pair.tgt_index},
          {"interval_s", pair.interval_s},
          {"reversed", pair.reversed}}},
        {"src_image", src_image},
        {"tgt_image", tgt_image},
        {"instruction",
         {{"text", instruction.text},
          {"verb", instruction.verb},
          {"model", instruction.source.model},
          {"prompt_version", instruction.source.prompt_version}}},
        {"src_caption", src_caption},
        {"tgt_caption", tgt_caption},
        {"flow_stats", stats_to_json(flow_stats)},
        {"occl_ratio", occl_ratio},
        {"provenance",
         {{"pipeline_version", provenance.pipeline_version},
          {"template_version", provenance.template_version},
          {"provider_id", provenance.provider_id}}},
    };
}

TripletRecord TripletRecord::from_json(const nlohmann::json& j) {
    TripletRecord r;
    r.id = j.at("id").get<std::string>();
    const auto& p = j.at("pair");
    r.pair = {p.at("sequence_id").get<std::string>(), p.at("src_index").get<int>(), p.at("tgt_index").get<int>(),
              p.at("interval_s").get<double>(), p.at("reversed").get<bool>()};
    r.src_image = j.at("src_image").get<std::string>();
    r.tgt_image = j.at("tgt_image").get<std::string>();
    const auto& in = j.at("instruction");
    r.instruction = {in.at("text").get<std::string>(), in.at("verb").get<std::string>(),
                     {in.at("model").get<std::string>(), in.at("prompt_version").get<std::string>()}};
    r.src_caption = j.at("src_caption").get<std::string>();
    r.tgt_caption = j.at("tgt_caption").get<std::string>();
    r.flow_stats = stats_from_json(j.at("flow_stats"));
    r.occl_ratio = j.at("occl_ratio").get<double>();
    const auto& pv = j.at("provenance");
    r.provenance = {pv.at("pipeline_version").get<std::string>(), pv.at("template_version").get<std::string>(),
                    pv.at("provider_id").get<std::string>()};
    return r;
}

bool operator==(const TripletRecord& a, const TripletRecord& b) {
    return a.id == b.id && a.pair == b.pair && a.src_image == b.src_image && a.tgt_image == b.tgt_image &&
           a.instruction == b.instruction && a.src_caption == b.src_caption && a.tgt_caption == b.tgt_caption &&
           a.flow_stats.mean_mag == b.flow_stats.mean_mag && a.flow_stats.p50_mag == b.flow_stats.p50_mag &&
           a.flow_stats.p95_mag == b.flow_stats.p95_mag && a.flow_stats.valid_fraction == b.flow_stats.valid_fraction &&
           a.occl_ratio == b.occl_ratio && a.provenance == b.provenance;
}

Totals& Totals::operator+=(const Totals& o) {
    videos += o.videos;
    videos_keyword_filtered += o.videos_keyword_filtered;
    videos_too_short += o.videos_too_short;
    candidates += o.candidates;
    too_static += o.too_static;
    too_dynamic += o.too_dynamic;
    background_changed += o.background_changed;
    rejected += o.rejected;
    failed += o.failed;
    accepted += o.accepted;
    return *this;
}

void Histograms::add(double mag, double occl) {
    std::size_t bin = kMagnitudeBinEdges.size() - 1;
    for (std::size_t i = 1; i < kMagnitudeBinEdges.size(); ++i) {
        if (mag < kMagnitudeBinEdges[i]) {
            bin = i - 1;
            break;
        }
    }
    ++magnitude[bin];
    const auto ob = static_cast<std::size_t>(std::clamp(occl, 0.0, 1.0) * kOcclusionBins);
    ++occlusion[std::min(ob, kOcclusionBins - 1)];
}

Histograms& Histograms::operator+=(const Histograms& o) {
    for (std::size_t i = 0; i < magnitude.size(); ++i) magnitude[i] += o.magnitude[i];
    for (std::size_t i = 0; i < occlusion.size(); ++i) occlusion[i] += o.occlusion[i];
    return *this;
}

namespace {

nlohmann::json totals_to_json(const Totals& t) {
    return {{"videos", t.videos},
            {"videos_keyword_filtered", t.videos_keyword_filtered},
            {"videos_too_short", t.videos_too_short},
            {"candidates", t.candidates},
            {"too_static", t.too_static},
            {"too_dynamic", t.too_dynamic},
            {"background_changed", t.background_changed},
            {"rejected", t.rejected},
            {"failed", t.failed},
            {"accepted", t.accepted}};
}

Totals totals_from_json(const nlohmann::json& j) {
    Totals t;
    t.videos = j.value("videos", std::size_t{0});
    t.videos_keyword_filtered = j.value("videos_keyword_filtered", std::size_t{0});
    t.videos_too_short = j.value("videos_too_short", std::size_t{0});
    t.candidates = j.value("candidates", std::size_t{0});
    t.too_static = j.value("too_static", std::size_t{0});
    t.too_dynamic = j.value("too_dynamic", std::size_t{0});
    t.background_changed = j.value("background_changed", std::size_t{0});
    t.rejected = j.value("rejected", std::size_t{0});
    t.failed = j.value("failed", std::size_t{0});
    t.accepted = j.value("accepted", std::size_t{0});
    return t;
}

nlohmann::json histograms_to_json(const Histograms& h) {
    return {{"magnitude_edges", kMagnitudeBinEdges}, {"magnitude", h.magnitude}, {"occlusion", h.occlusion}};
}

Histograms histograms_from_json(const nlohmann::json& j) {
    Histograms h;
    if (j.contains("magnitude")) h.magnitude = j["magnitude"].get<decltype(h.magnitude)>();
    if (j.contains("occlusion")) h.occlusion = j["occlusion"].get<decltype(h.occlusion)>();
    return h;
}

}  // namespace

nlohmann::json ShardManifest::to_json() const {
    nlohmann::json shard_list = nlohmann::json::array();
    for (const auto& s : shards) shard_list.push_back({{"file", s.file}, {"count", s.count}, {"sha256", s.sha256}});
    return {{"format", format},         {"created", created},
            {"pipeline_version", pipeline_version},
            {"capacity", capacity},     {"shards", shard_list},
            {"totals", totals_to_json(totals)},
            {"histograms", histograms_to_json(histograms)}};
}

ShardManifest ShardManifest::from_json(const nlohmann::json& j) {
    ShardManifest m;
    m.format = j.at("format").get<std::string>();
    m.created = j.value("created", std::string());
    m.pipeline_version = j.value("pipeline_version", std::string());
    m.capacity = j.value("capacity", std::size_t{1000});
    for (const auto& s : j.at("shards")) {
        m.shards.push_back({s.at("file").get<std::string>(), s.at("count").get<std::size_t>(), s.at("sha256").get<std::string>()});
    }
    m.totals = totals_from_json(j.at("totals"));
    if (j.contains("histograms")) m.histograms = histograms_from_json(j["histograms"]);
    return m;
}

std::string ShardManifest::serialize() const { return to_json().dump(2) + "\n"; }

std::string shard_file_name(std::size_t shard_id) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "shard-%05zu.jsonl", shard_id);
    return buf;
}

std::string record_id(std::size_t sequence) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%08zu", sequence);
    return buf;
}

namespace {

// Copies (or transcodes to PNG) a frame into the shard's image directory and
// returns its dataset-relative path.
std::string place_image(const std::string& source, const std::filesystem::path& root, const std::string& rel_dir,
                        const std::string& name) {
    const std::filesystem::path src(source);
    if (!std::filesystem::exists(src)) throw Error(Errc::IoError, "missing image " + source);
    const std::string rel = rel_dir + "/" + name;
    const auto dst = root / rel;
    std::string ext = src.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") {
        write_file_atomic(dst, read_file(src));
    } else {
        save_png(load_image(src), dst);
    }
    return rel;
}

}  // namespace

ShardEntry write_shard(const std::vector<TripletRecord>& records, std::size_t shard_id,
                       const std::filesystem::path& root, const StoreOptions& opts) {
    if (records.empty()) throw Error(Errc::InvalidArgument, "write_shard needs at least one record");
    if (records.size() > opts.capacity) {
        throw Error(Errc::CapacityExceeded, std::to_string(records.size()) + " records exceed shard capacity " +
                                                std::to_string(opts.capacity));
    }
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) throw Error(Errc::IoError, "cannot create " + root.string() + ": " + ec.message());
    const std::string file = shard_file_name(shard_id);
    const std::string image_dir = file.substr(0, file.size() - std::string(".jsonl").size());
    if (opts.image_mode == ImageMode::Copy) std::filesystem::create_directories(root / image_dir);

    std::string body;
    for (const auto& rec : records) {
        TripletRecord out = rec;
        if (opts.image_mode == ImageMode::Copy) {
            out.src_image = place_image(rec.src_image, root, image_dir, rec.id + "_src.png");
            out.tgt_image = place_image(rec.tgt_image, root, image_dir, rec.id + "_tgt.png");
        } else if (!std::filesystem::exists(rec.src_image) || !std::filesystem::exists(rec.tgt_image)) {
            throw Error(Errc::IoError, "record " + rec.id + " references a missing image");
        }
        body += out.to_json().dump();
        body += '\n';
    }
    write_file_atomic(root / file, body);
    return {file, records.size(), sha256_hex(body)};
}

std::vector<TripletRecord> read_shard(const std::filesystem::path& path, const std::optional<std::string>& expected_sha256) {
    const std::string body = read_file(path);
    if (expected_sha256 && sha256_hex(body) != *expected_sha256) {
        throw Error(Errc::HashMismatch, path.string() + " does not match its manifest hash");
    }
    if (body.empty()) throw Error(Errc::CorruptRecord, path.string() + " is empty");
    std::vector<TripletRecord> out;
    std::istringstream in(body);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            out.push_back(TripletRecord::from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::CorruptRecord, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (out.empty()) throw Error(Errc::CorruptRecord, path.string() + " holds no records");
    return out;
}

ShardManifest write_dataset(const std::vector<TripletRecord>& records, const std::filesystem::path& root,
                            const Totals& totals, const Histograms& histograms, const std::string& pipeline_version,
                            const std::string& created, const StoreOptions& opts) {
    if (opts.capacity == 0) throw Error(Errc::ConfigError, "shard capacity must be positive");
    ShardManifest manifest;
    manifest.created = created;
    manifest.pipeline_version = pipeline_version;
    manifest.capacity = opts.capacity;
    manifest.totals = totals;
    manifest.histograms = histograms;
    for (std::size_t start = 0, shard = 0; start < records.size(); start += opts.capacity, ++shard) {
        const auto end = std::min(records.size(), start + opts.capacity);
        std::vector<TripletRecord> chunk(records.begin() + static_cast<std::ptrdiff_t>(start),
                                         records.begin() + static_cast<std::ptrdiff_t>(end));
        manifest.shards.push_back(write_shard(chunk, shard, root, opts));
    }
    std::size_t sum = 0;
    for (const auto& s : manifest.shards) sum += s.count;
    if (sum != totals.accepted) {
        throw Error(Errc::StageFailure, "shard counts (" + std::to_string(sum) + ") disagree with accepted total (" +
                                            std::to_string(totals.accepted) + ")");
    }
    std::filesystem::create_directories(root);
    write_file_atomic(root / "manifest.json", manifest.serialize());
    return manifest;
}

ShardManifest read_manifest(const std::filesystem::path& path) {
    try {
        return ShardManifest::from_json(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::CorruptRecord, path.string() + ": " + e.what());
    }
}

std::vector<TripletRecord> read_dataset(const std::filesystem::path& root) {
    const auto manifest = read_manifest(root / "manifest.json");
    std::vector<TripletRecord> out;
    for (const auto& s : manifest.shards) {
        auto records = read_shard(root / s.file, s.sha256);
        if (records.size() != s.count) throw Error(Errc::CorruptRecord, s.file + " count differs from manifest");
        out.insert(out.end(), std::make_move_iterator(records.begin()), std::make_move_iterator(records.end()));
    }
    return out;
}

nlohmann::json StatsReport::to_json() const {
    return {{"totals", totals_to_json(totals)}, {"histograms", histograms_to_json(histograms)}, {"verbs", verbs}};
}

std::string StatsReport::to_table() const {
    std::ostringstream out;
    auto row = [&](const std::string& name, std::size_t value) {
        out << std::left << std::setw(26) << name << std::right << std::setw(10) << value << '\n';
    };
    row("videos", totals.videos);
    row("videos_keyword_filtered", totals.videos_keyword_filtered);
    row("videos_too_short", totals.videos_too_short);
    row("candidates", totals.candidates);
    row("too_static", totals.too_static);
    row("too_dynamic", totals.too_dynamic);
    row("background_changed", totals.background_changed);
    row("rejected", totals.rejected);
    row("failed", totals.failed);
    row("accepted", totals.accepted);
    out << "\nverb histogram\n";
    for (const auto& [verb, n] : verbs) row("  " + verb, n);
    out << "\nflow magnitude histogram (px)\n";
    for (std::size_t i = 0; i < histograms.magnitude.size(); ++i) {
        std::ostringstream label;
        label << "  [" << kMagnitudeBinEdges[i] << ", ";
        if (i + 1 < kMagnitudeBinEdges.size()) {
            label << kMagnitudeBinEdges[i + 1] << ")";
        } else {
            label << "inf)";
        }
        row(label.str(), histograms.magnitude[i]);
    }
    out << "\nocclusion ratio histogram\n";
    for (std::size_t i = 0; i < histograms.occlusion.size(); ++i) {
        std::ostringstream label;
        label << std::fixed << std::setprecision(1) << "  [" << static_cast<double>(i) / kOcclusionBins << ", "
              << static_cast<double>(i + 1) / kOcclusionBins << (i + 1 == kOcclusionBins ? "]" : ")");
        row(label.str(), histograms.occlusion[i]);
    }
    return out.str();
}

StatsReport stats(const std::vector<std::filesystem::path>& manifests) {
    StatsReport report;
    for (const auto& path : manifests) {
        const auto m = read_manifest(path);
        report.totals += m.totals;
        report.histograms += m.histograms;
        for (const auto& s : m.shards) {
            for (const auto& rec : read_shard(path.parent_path() / s.file, s.sha256)) ++report.verbs[rec.instruction.verb];
        }
    }
    return report;
}

}  // namespace vedit
