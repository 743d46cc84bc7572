// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "test_util.hpp"
#include "vedit/codec.hpp"
#include "vedit/conditioning.hpp"

using nlohmann::json;
using vedit::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
};

Result vedit_cli(const std::string& args, const std::string& env = {}) {
    const std::string cmd = env + (env.empty() ? "" : " ") + "'" VEDIT_CLI "' " + args + " 2>&1";
    Result r;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::array<char, 4096> buf{};
    std::size_t n = 0;
    while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
    const int status = ::pclose(pipe);
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

struct Workspace {
    TempDir dir{"cli"};
    fs::path config;

    Workspace() {
        const auto r = vedit_cli("make-corpus --dir " + q(dir / "corpus"));
        REQUIRE(r.code == 0);
        config = dir / "cfg.json";
        std::ofstream(config) << json{{"corpus", "corpus/corpus.jsonl"}, {"output", "out"}, {"seed", 1}}.dump();
    }
};

}  // namespace

TEST_CASE("usage errors exit 2, help exits 0") {
    CHECK(vedit_cli("").code == 2);
    CHECK(vedit_cli("frobnicate").code == 2);
    CHECK(vedit_cli("--help").code == 0);
    CHECK(vedit_cli("run --help").code == 0);
    CHECK(vedit_cli("run --workers x").code == 2);
}

TEST_CASE("config errors exit 2") {
    Workspace w;
    CHECK(vedit_cli("run").code == 2);
    CHECK(vedit_cli("run --config " + q(w.dir / "missing.json")).code == 2);
    CHECK(vedit_cli("run --workers 0 --config " + q(w.config)).code == 2);
    CHECK(vedit_cli("run --config " + q(w.config) + " --flow precomputed:" + q(w.dir / "nowhere")).code == 2);
    CHECK(vedit_cli("run --config " + q(w.config) + " --mllm-provider carrier-pigeon").code == 2);
    std::ofstream(w.dir / "bad.json") << R"({"corpus": "corpus/corpus.jsonl", "output": "out", "colour": 1})";
    const auto r = vedit_cli("scan --config " + q(w.dir / "bad.json"));
    CHECK(r.code == 2);
    CHECK(r.out.find("colour") != std::string::npos);
}

TEST_CASE("stage failures exit 3") {
    Workspace w;
    fs::create_directories(w.dir / "no-flows");
    const auto r = vedit_cli("filter --config " + q(w.config) + " --flow precomputed:" + q(w.dir / "no-flows"));
    CHECK(r.code == 3);
    CHECK(r.out.find("StageFailure") != std::string::npos);
    // The OpenAI provider against a closed port fails the scan's captioning.
    Workspace fresh;
    const auto cfg = fresh.dir / "openai.json";
    std::ofstream(cfg) << json{{"corpus", "corpus/corpus.jsonl"}, {"output", "out"}, {"mllm", {{"max_retries", 0}}}}.dump();
    const auto o = vedit_cli("scan --config " + q(cfg) +
                                 " --mllm-provider openai --mllm-base-url http://127.0.0.1:1/v1 --mllm-model m",
                             "MLLM_API_KEY=k");
    CHECK(o.code == 3);
    CHECK(o.out.find("ProviderError") != std::string::npos);
}

TEST_CASE("run, stages and stats") {
    Workspace w;
    const auto run = vedit_cli("run --workers 2 --config " + q(w.config));
    REQUIRE(run.code == 0);
    CHECK(run.out.find("manifest sha256 23f17ae27917f288cafdd60b7b450df538dbb609fa7d6cb012d32ec1dae3b901") !=
          std::string::npos);
    CHECK(run.out.find("accepted") != std::string::npos);

    const auto scan = vedit_cli("scan --config " + q(w.config));
    REQUIRE(scan.code == 0);
    CHECK(json::parse(scan.out)["videos"] == 20);
    const auto instruct = vedit_cli("instruct --config " + q(w.config));
    REQUIRE(instruct.code == 0);
    CHECK(json::parse(instruct.out)["packed"] == 8);

    const auto stats = vedit_cli("stats --json --config " + q(w.config));
    REQUIRE(stats.code == 0);
    const auto j = json::parse(stats.out);
    CHECK(j["totals"]["candidates"] == 30);
    CHECK(j["totals"]["accepted"] == 8);
    const auto table = vedit_cli("stats --manifest " + q(w.dir / "out" / "manifest.json"));
    CHECK(table.code == 0);
    CHECK(table.out.find("verb histogram") != std::string::npos);
}

TEST_CASE("seed override changes the provider payloads") {
    Workspace w;
    const auto a = vedit_cli("run --seed 2 --config " + q(w.config));
    REQUIRE(a.code == 0);
    CHECK(a.out.find("23f17ae27917f288") == std::string::npos);
}

TEST_CASE("bench") {
    Workspace w;
    const auto zero = vedit_cli("bench --pairs 0 --config " + q(w.config));
    REQUIRE(zero.code == 0);
    CHECK(json::parse(zero.out)["rows"].empty());
    const auto small = vedit_cli("bench --pairs 3 --size 64 --worker-counts 1 2 --out " + q(w.dir / "b.json"));
    REQUIRE(small.code == 0);
    const auto j = json::parse(vedit::read_file(w.dir / "b.json"));
    CHECK(j["rows"].size() == 2);
}

TEST_CASE("edit-sim") {
    TempDir dir("editsim");
    const auto zs = vedit::LatentGrid::gaussian(4, 8, 8, 1);
    const auto zt = vedit::LatentGrid::gaussian(4, 8, 8, 2);
    vedit::write_latent(zs, dir / "zs.bin");
    vedit::write_latent(zt, dir / "zt.bin");
    vedit::Image mask(64, 64, 1);
    for (int y = 0; y < 64; ++y) {
        for (int x = 32; x < 64; ++x) mask.at(0, y, x) = 1.0f;
    }
    vedit::save_png(mask, dir / "mask.png");

    const auto r = vedit_cli("edit-sim --predictor target --source " + q(dir / "zs.bin") + " --target " +
                             q(dir / "zt.bin") + " --mask " + q(dir / "mask.png") + " --out " + q(dir / "z.bin"));
    REQUIRE(r.code == 0);
    const auto z = vedit::read_latent(dir / "z.bin");
    double err_src = 0.0;
    double err_tgt = 0.0;
    for (int c = 0; c < 4; ++c) {
        for (int y = 0; y < 8; ++y) {
            for (int x = 0; x < 8; ++x) {
                if (x < 4) {
                    err_src = std::max(err_src, static_cast<double>(std::abs(z.at(c, y, x) - zs.at(c, y, x))));
                } else {
                    err_tgt = std::max(err_tgt, static_cast<double>(std::abs(z.at(c, y, x) - zt.at(c, y, x))));
                }
            }
        }
    }
    CHECK(err_src == 0.0);
    CHECK(err_tgt <= 1e-4);

    const auto h1 = vedit_cli("edit-sim --source " + q(dir / "zs.bin") + " --out " + q(dir / "h1.bin"));
    const auto h2 = vedit_cli("edit-sim --source " + q(dir / "zs.bin") + " --out " + q(dir / "h2.bin"));
    REQUIRE(h1.code == 0);
    REQUIRE(h2.code == 0);
    CHECK(vedit::read_file(dir / "h1.bin") == vedit::read_file(dir / "h2.bin"));

    CHECK(vedit_cli("edit-sim --predictor nope --source " + q(dir / "zs.bin") + " --out " + q(dir / "x.bin")).code == 2);
    CHECK(vedit_cli("edit-sim --source " + q(dir / "missing.bin") + " --out " + q(dir / "x.bin")).code == 3);
}

TEST_CASE("evaluate") {
    TempDir dir("evaluate");
    {
        std::ofstream e(dir / "emb.jsonl");
        auto line = [&](const std::string& id, const std::string& kind, std::vector<float> v) {
            e << json{{"id", id}, {"kind", kind}, {"dim", v.size()}, {"values", v}}.dump() << "\n";
        };
        line("s", "image", {1, 0});
        line("o", "image", {1, 1});
        line("cs", "text", {1, 0});
        line("ct", "text", {1, 1});
        line("i", "text", {1, 0});
        line("r", "text", {1, 0});
        std::ofstream(dir / "bench.jsonl")
            << json{{"id", "e"}, {"source_image", "s"}, {"output_image", "o"}, {"source_caption", "cs"},
                    {"target_caption", "ct"}, {"instruction", "i"}, {"regenerated_instruction", "r"}}
                   .dump()
            << "\n";
    }
    const auto r = vedit_cli("evaluate --benchmark " + q(dir / "bench.jsonl") + " --embeddings " + q(dir / "emb.jsonl"));
    REQUIRE(r.code == 0);
    const auto j = json::parse(r.out);
    CHECK(j["n"] == 1);
    CHECK(j["clip_d"].get<double>() == doctest::Approx(1.0));
    CHECK(j["clip_i"].get<double>() == doctest::Approx(std::sqrt(0.5)));
    CHECK(j["reference"]["clip_inst"] == 0.8724);
    CHECK(vedit_cli("evaluate --benchmark " + q(dir / "none.jsonl") + " --embeddings " + q(dir / "emb.jsonl")).code == 3);
}
