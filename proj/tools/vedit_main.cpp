// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vedit/codec.hpp"
#include "vedit/conditioning.hpp"
#include "vedit/dataset_store.hpp"
#include "vedit/error.hpp"
#include "vedit/image.hpp"
#include "vedit/metrics.hpp"
#include "vedit/pipeline.hpp"
#include "vedit/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitStage = 3;

struct GlobalOptions {
    std::string config;
    std::optional<int> workers;
    std::optional<std::uint64_t> seed;
    std::string mllm_base_url;
    std::string mllm_model;
    std::string mllm_provider;
    std::string flow;
};

vedit::PipelineConfig load_config(const GlobalOptions& g, bool validate) {
    vedit::PipelineConfig cfg;
    if (!g.config.empty()) {
        cfg = vedit::PipelineConfig::load(g.config);
    } else if (validate) {
        throw vedit::Error(vedit::Errc::ConfigError, "--config is required");
    }
    if (g.workers) cfg.workers = *g.workers;
    if (g.seed) cfg.seed = *g.seed;
    if (!g.mllm_base_url.empty()) cfg.mllm.base_url = g.mllm_base_url;
    if (!g.mllm_model.empty()) cfg.mllm.model = g.mllm_model;
    if (g.mllm_provider == "mock") {
        cfg.mllm.provider = vedit::ProviderKind::Mock;
    } else if (g.mllm_provider == "openai") {
        cfg.mllm.provider = vedit::ProviderKind::OpenAi;
    } else if (!g.mllm_provider.empty()) {
        throw vedit::Error(vedit::Errc::ConfigError, "--mllm-provider must be mock or openai");
    }
    if (!g.flow.empty()) cfg.flow.set_backend(g.flow);
    if (validate) cfg.validate();
    return cfg;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

json scan_json(const vedit::ScanSummary& s) {
    return {{"videos", s.videos},
            {"keyword_filtered", s.keyword_filtered},
            {"too_short", s.too_short},
            {"kept", s.kept},
            {"candidates", s.candidates}};
}

void write_or_print(const json& j, const std::string& out) {
    if (out.empty()) {
        print_json(j);
    } else {
        vedit::write_file_atomic(out, j.dump(2) + "\n");
    }
}

vedit::EditMask mask_from_image(const vedit::Image& img) {
    const auto gray = img.to_gray();
    vedit::EditMask m(gray.height(), gray.width());
    for (int y = 0; y < gray.height(); ++y) {
        for (int x = 0; x < gray.width(); ++x) m.at(y, x) = gray.at(0, y, x);
    }
    return m;
}

int edit_sim(const std::string& predictor_name, const std::string& source, const std::string& target,
             const std::string& mask_path, const std::string& instruction, int steps, std::uint64_t seed,
             const std::string& out) {
    const auto zs = vedit::read_latent(source);
    const auto sched = vedit::DiffusionSchedule::linear();
    std::unique_ptr<vedit::NoisePredictor> predictor;
    if (predictor_name == "hash") {
        predictor = vedit::make_hash_predictor();
    } else if (predictor_name == "target") {
        if (target.empty()) throw vedit::Error(vedit::Errc::ConfigError, "--predictor target needs --target");
        predictor = vedit::make_target_predictor(vedit::read_latent(target), sched);
    } else {
        throw vedit::Error(vedit::Errc::ConfigError, "unknown predictor '" + predictor_name + "'");
    }
    std::optional<vedit::EditMask> mask;
    if (!mask_path.empty()) {
        if (fs::path(mask_path).extension() == ".png") {
            mask = vedit::resize_mask(mask_from_image(vedit::load_image(mask_path)), zs.height(), zs.width());
        } else {
            const auto m = vedit::read_latent(mask_path);
            vedit::EditMask em(m.height(), m.width());
            for (int y = 0; y < m.height(); ++y) {
                for (int x = 0; x < m.width(); ++x) em.at(y, x) = m.at(0, y, x);
            }
            mask = vedit::resize_mask(em, zs.height(), zs.width());
        }
    }
    vedit::SampleConfig sc;
    sc.steps = steps;
    sc.seed = seed;
    const auto z = vedit::masked_ddim_sample(zs, {instruction}, mask, *predictor, sched, sc);
    vedit::write_latent(z, out);
    print_json({{"output", out}, {"channels", z.channels()}, {"height", z.height()}, {"width", z.width()},
                {"steps", steps}, {"predictor", predictor_name}});
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"vedit: build image-editing triplets from video frame pairs"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions g;
    app.add_option("--config", g.config, "Pipeline config (JSON)");
    app.add_option("--workers", g.workers, "Worker threads")->check(CLI::NonNegativeNumber);
    app.add_option("--seed", g.seed, "Run seed");
    app.add_option("--mllm-base-url", g.mllm_base_url, "Chat-completions base URL");
    app.add_option("--mllm-model", g.mllm_model, "Model name");
    app.add_option("--mllm-provider", g.mllm_provider, "mock or openai");
    app.add_option("--flow", g.flow, "builtin or precomputed:<dir>");

    auto* scan = app.add_subcommand("scan", "Load the corpus and apply the keyword prefilter");
    auto* sample = app.add_subcommand("sample", "Emit candidate frame pairs");
    auto* filter = app.add_subcommand("filter", "Estimate flow and apply the motion filter");
    auto* instruct = app.add_subcommand("instruct", "Generate editing instructions");
    auto* pack = app.add_subcommand("pack", "Write shards and the manifest");
    auto* run = app.add_subcommand("run", "Run every stage");

    auto* stats_cmd = app.add_subcommand("stats", "Summarize one or more datasets");
    std::vector<std::string> manifests;
    bool stats_json_out = false;
    stats_cmd->add_option("--manifest", manifests, "manifest.json paths (default: the config's output)");
    stats_cmd->add_flag("--json", stats_json_out, "Print JSON instead of a table");

    auto* bench_cmd = app.add_subcommand("bench", "Throughput over worker counts");
    std::size_t bench_pairs = 200;
    int bench_size = 256;
    std::vector<int> bench_workers{1, 2, 4};
    std::string bench_out;
    bench_cmd->add_option("--pairs", bench_pairs, "Synthetic pairs per row");
    bench_cmd->add_option("--size", bench_size, "Frame side in px");
    bench_cmd->add_option("--worker-counts", bench_workers, "Worker counts to time");
    bench_cmd->add_option("--out", bench_out, "Write the report here instead of stdout");

    auto* edit_cmd = app.add_subcommand("edit-sim", "Masked DDIM sampling with a mock predictor");
    std::string predictor = "hash";
    std::string source;
    std::string target;
    std::string mask;
    std::string instruction = "edit";
    int steps = 50;
    std::uint64_t edit_seed = 0;
    std::string edit_out;
    edit_cmd->add_option("--predictor", predictor, "hash or target");
    edit_cmd->add_option("--source", source, "Source latent")->required();
    edit_cmd->add_option("--target", target, "Target latent (target predictor)");
    edit_cmd->add_option("--mask", mask, "Edit mask (PNG or latent file)");
    edit_cmd->add_option("--instruction", instruction, "Conditioning key");
    edit_cmd->add_option("--steps", steps, "DDIM steps");
    edit_cmd->add_option("--seed", edit_seed, "Source-noise seed");
    edit_cmd->add_option("--out", edit_out, "Output latent")->required();

    auto* eval_cmd = app.add_subcommand("evaluate", "Editing metrics from precomputed embeddings");
    std::string benchmark;
    std::vector<std::string> embeddings;
    std::string eval_out;
    eval_cmd->add_option("--benchmark", benchmark, "Benchmark manifest (JSONL)")->required();
    eval_cmd->add_option("--embeddings", embeddings, "Embedding JSONL files")->required();
    eval_cmd->add_option("--out", eval_out, "Write the report here instead of stdout");

    auto* corpus_cmd = app.add_subcommand("make-corpus", "Write the synthetic demo corpus");
    std::string corpus_dir;
    int corpus_clips = 20;
    std::uint64_t corpus_seed = 7;
    int corpus_size = 128;
    corpus_cmd->add_option("--dir", corpus_dir, "Destination directory")->required();
    corpus_cmd->add_option("--clips", corpus_clips, "Number of clips");
    corpus_cmd->add_option("--corpus-seed", corpus_seed, "Texture seed");
    corpus_cmd->add_option("--size", corpus_size, "Frame side in px");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (corpus_cmd->parsed()) {
            const auto manifest = vedit::synth::write_corpus(corpus_dir, corpus_clips, corpus_seed, corpus_size);
            print_json({{"corpus", manifest.string()}, {"clips", corpus_clips}});
            return kExitOk;
        }
        if (edit_cmd->parsed()) {
            return edit_sim(predictor, source, target, mask, instruction, steps, edit_seed, edit_out);
        }
        if (eval_cmd->parsed()) {
            std::vector<fs::path> files(embeddings.begin(), embeddings.end());
            const vedit::FileEmbeddingProvider provider(files);
            write_or_print(vedit::evaluate_benchmark(benchmark, provider).to_json(), eval_out);
            return kExitOk;
        }
        if (bench_cmd->parsed()) {
            const auto cfg = load_config(g, false);
            write_or_print(vedit::bench(cfg, bench_pairs, bench_size, bench_workers).to_json(), bench_out);
            return kExitOk;
        }
        if (stats_cmd->parsed()) {
            std::vector<fs::path> paths(manifests.begin(), manifests.end());
            if (paths.empty()) paths.push_back(load_config(g, true).output / "manifest.json");
            const auto report = vedit::stats(paths);
            if (stats_json_out) {
                print_json(report.to_json());
            } else {
                std::cout << report.to_table();
            }
            return kExitOk;
        }

        vedit::Pipeline pipeline(load_config(g, true));
        if (scan->parsed()) {
            print_json(scan_json(pipeline.scan()));
        } else if (sample->parsed()) {
            print_json(scan_json(pipeline.sample()));
        } else if (filter->parsed()) {
            print_json(pipeline.filter().to_json());
        } else if (instruct->parsed()) {
            print_json(pipeline.instruct().to_json());
        } else if (pack->parsed()) {
            const auto m = pipeline.pack();
            print_json({{"manifest", (pipeline.config().output / "manifest.json").string()},
                        {"shards", m.shards.size()},
                        {"accepted", m.totals.accepted}});
        } else if (run->parsed()) {
            const auto r = pipeline.run();
            std::cout << r.stats.to_table();
            std::cout << "manifest sha256 " << r.manifest_sha256 << "\n";
            std::cout << "mllm calls " << r.mllm_calls << "\n";
        }
        return kExitOk;
    } catch (const vedit::Error& e) {
        std::cerr << "vedit: " << e.what() << "\n";
        return e.code() == vedit::Errc::ConfigError ? kExitConfig : kExitStage;
    } catch (const std::exception& e) {
        std::cerr << "vedit: " << e.what() << "\n";
        return kExitStage;
    }
}
