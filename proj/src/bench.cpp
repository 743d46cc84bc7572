// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <chrono>
#include <map>
#include <string>
#include <thread>

#include "vedit/error.hpp"
#include "vedit/pipeline.hpp"
#include "vedit/synth.hpp"

namespace vedit {

using nlohmann::json;

namespace {

// Distinct synthetic pairs kept in memory; larger runs cycle through them.
constexpr std::size_t kPoolSize = 16;

BenchStage timed(std::size_t n, const std::function<void()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    body();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {s, s > 0.0 ? static_cast<double>(n) / s : 0.0};
}

json stage_json(const BenchStage& s) { return {{"seconds", s.seconds}, {"pairs_per_s", s.pairs_per_s}}; }

BenchStage stage_from(const json& j) { return {j.at("seconds").get<double>(), j.at("pairs_per_s").get<double>()}; }

}  // namespace

json BenchReport::to_json() const {
    json rows_j = json::array();
    for (const auto& r : rows) {
        rows_j.push_back({{"workers", r.workers},
                          {"flow_filter", stage_json(r.flow_filter)},
                          {"instruct", stage_json(r.instruct)}});
    }
    return {{"n_pairs", n_pairs},          {"width", width}, {"height", height}, {"hardware_threads", hardware_threads},
            {"rows", std::move(rows_j)}};
}

BenchReport BenchReport::from_json(const json& j) {
    BenchReport r;
    r.n_pairs = j.at("n_pairs").get<std::size_t>();
    r.width = j.at("width").get<int>();
    r.height = j.at("height").get<int>();
    r.hardware_threads = j.at("hardware_threads").get<unsigned>();
    for (const auto& row : j.at("rows")) {
        r.rows.push_back({row.at("workers").get<int>(), stage_from(row.at("flow_filter")),
                          stage_from(row.at("instruct"))});
    }
    return r;
}

double BenchReport::flow_speedup(int workers) const {
    const BenchRow* base = nullptr;
    const BenchRow* other = nullptr;
    for (const auto& r : rows) {
        if (r.workers == 1) base = &r;
        if (r.workers == workers) other = &r;
    }
    if (!base || !other || base->flow_filter.pairs_per_s <= 0.0) return 0.0;
    return other->flow_filter.pairs_per_s / base->flow_filter.pairs_per_s;
}

BenchReport bench(const PipelineConfig& cfg, std::size_t n_pairs, int size, const std::vector<int>& worker_counts) {
    BenchReport report;
    report.n_pairs = n_pairs;
    report.width = size;
    report.height = size;
    report.hardware_threads = std::thread::hardware_concurrency();
    if (n_pairs == 0) return report;
    if (size < 32) throw Error(Errc::InvalidArgument, "bench frame size must be at least 32");

    std::vector<synth::OccluderScene> pool;
    const std::size_t distinct = std::min(n_pairs, kPoolSize);
    const int side = size / 6;
    for (std::size_t i = 0; i < distinct; ++i) {
        const int x0 = size / 4 + static_cast<int>(i % 7);
        const int y0 = size / 4 + static_cast<int>(i % 5);
        const double du = 2.0 + static_cast<double>(i % 4);
        const double dv = static_cast<double>(i % 3) - 1.0;
        pool.push_back(synth::occluder_scene(size, size, side, x0, y0, du, dv, cfg.seed + i));
    }

    const PromptTemplate tmpl = PromptTemplate::instruction_default();
    for (const int workers : worker_counts) {
        BenchRow row;
        row.workers = workers;
        std::map<std::size_t, std::string> errs;
        row.flow_filter = timed(n_pairs, [&] {
            errs = parallel_for(n_pairs, workers, [&](std::size_t i) {
                const auto& s = pool[i % pool.size()];
                (void)analyze_pair(s.src, s.tgt, cfg.flow, cfg.thresholds, cfg.scale_thresholds);
            });
        });
        if (!errs.empty()) throw Error(Errc::StageFailure, "bench flow/filter: " + errs.begin()->second);
        MockMllmProvider mock;
        row.instruct = timed(n_pairs, [&] {
            errs = parallel_for(n_pairs, workers, [&](std::size_t i) {
                const auto& s = pool[i % pool.size()];
                auto payload = build_prompt(s.src, s.tgt, std::nullopt, tmpl, cfg.mllm.model, cfg.mllm.temperature);
                payload["seed"] = cfg.seed + i;
                (void)parse_response(mock.complete(payload).content, tmpl);
            });
        });
        if (!errs.empty()) throw Error(Errc::StageFailure, "bench instruct: " + errs.begin()->second);
        report.rows.push_back(row);
    }
    return report;
}

}  // namespace vedit
