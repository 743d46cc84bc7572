// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <random>

#include "test_util.hpp"
#include "vedit/image.hpp"
#include "vedit/pair_sampler.hpp"

using namespace vedit;
using vedit::testing::error_of;
using vedit::testing::TempDir;

namespace {

FrameSequence clip(double seconds, double fps, const std::string& id = "c") {
    FrameSequence s;
    s.id = id;
    s.fps = fps;
    const int n = static_cast<int>(std::lround(seconds * fps));
    for (int i = 0; i < n; ++i) s.frames.push_back({i, {}});
    return s;
}

}  // namespace

TEST_CASE("keyword filter on the documented captions") {
    const KeywordFilterConfig cfg;
    CHECK(cfg.blocklist == std::set<std::string>{"landscape", "abstract", "still"});
    CHECK_FALSE(keyword_filter("a still landscape photo at dusk", cfg));
    CHECK(keyword_filter("a dog running on the beach", cfg));
    CHECK(keyword_filter("abstractly lit room", cfg));
    CHECK(keyword_filter("", cfg));
    CHECK_FALSE(keyword_filter("Abstract, colourful shapes.", cfg));
}

TEST_CASE("keyword filter is case-insensitive on random captions") {
    const KeywordFilterConfig cfg;
    const std::vector<std::string> words = {"a", "Still", "dog", "LANDSCAPE", "stillness", "abstract-art", "sky", "x"};
    std::mt19937 rng(3);
    for (int t = 0; t < 500; ++t) {
        std::string caption;
        const int n = static_cast<int>(rng() % 6);
        for (int i = 0; i < n; ++i) caption += words[rng() % words.size()] + (rng() % 2 ? " " : ", ");
        std::string upper = caption;
        std::string lower = caption;
        std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
        std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
        CHECK(keyword_filter(upper, cfg) == keyword_filter(caption, cfg));
        CHECK(keyword_filter(lower, cfg) == keyword_filter(caption, cfg));
    }
}

TEST_CASE("disabled filter keeps everything") {
    KeywordFilterConfig cfg;
    cfg.enabled = false;
    CHECK(keyword_filter("still landscape", cfg));
}

TEST_CASE("sampling examples") {
    SUBCASE("7 s at 30 fps") {
        const auto r = sample_pairs(clip(7, 30));
        REQUIRE(r.pairs.size() == 2);
        CHECK(r.pairs[0].src_index == 0);
        CHECK(r.pairs[0].tgt_index == 90);
        CHECK(r.pairs[1].src_index == 90);
        CHECK(r.pairs[1].tgt_index == 180);
        CHECK(r.pairs[0].interval_s == doctest::Approx(3.0));
    }
    SUBCASE("2 s clip is too short") {
        const auto r = sample_pairs(clip(2, 30));
        CHECK(r.pairs.empty());
        CHECK(r.skipped == Errc::SequenceTooShort);
    }
    SUBCASE("10 s at 30 fps") {
        const auto r = sample_pairs(clip(10, 30));
        REQUIRE(r.pairs.size() == 3);
        CHECK(r.pairs[0].src_index == 0);
        CHECK(r.pairs[1].src_index == 90);
        CHECK(r.pairs[2].src_index == 180);
    }
    SUBCASE("reversed pairs follow their forward twin") {
        SampleOptions o;
        o.include_reversed = true;
        const auto r = sample_pairs(clip(7, 30), o);
        REQUIRE(r.pairs.size() == 4);
        CHECK_FALSE(r.pairs[0].reversed);
        CHECK(r.pairs[1].reversed);
        CHECK(r.pairs[1].src_index == r.pairs[0].src_index);
        CHECK(r.pairs[1].tgt_index > r.pairs[1].src_index);
    }
}

TEST_CASE("pair count, spacing and index range over random clips") {
    std::mt19937 rng(11);
    for (int t = 0; t < 300; ++t) {
        const double fps = std::vector<double>{1, 10, 24, 25, 30, 60}[rng() % 6];
        const double seconds = 1.0 + static_cast<double>(rng() % 400) / 10.0;
        const double interval = 1.0 + static_cast<double>(rng() % 5);
        const double stride = 0.5 * static_cast<double>(1 + rng() % 8);
        const auto seq = clip(seconds, fps);
        if (seq.frames.empty()) continue;
        SampleOptions o;
        o.interval_s = interval;
        o.stride_s = stride;
        const auto r = sample_pairs(seq, o);
        const double duration = seq.duration();
        CAPTURE(fps);
        CAPTURE(seconds);
        CAPTURE(interval);
        CAPTURE(stride);
        if (duration < interval) {
            CHECK(r.skipped == Errc::SequenceTooShort);
            continue;
        }
        const auto expected = static_cast<std::size_t>(std::floor((duration - interval) / stride + 1e-9)) + 1;
        CHECK(r.pairs.size() == expected);
        for (const auto& p : r.pairs) {
            CHECK(p.tgt_index > p.src_index);
            CHECK(p.tgt_index <= seq.frames.back().index);
            CHECK(std::abs(p.interval_s - interval) <= 1.0 / fps + 1e-9);
            // Integer frame grid: the spacing is exact.
            if (std::abs(interval * fps - std::round(interval * fps)) < 1e-9 &&
                std::abs(stride * fps - std::round(stride * fps)) < 1e-9) {
                CHECK(p.tgt_index - p.src_index == std::lround(interval * fps));
            }
        }
    }
}

TEST_CASE("sequence validation") {
    auto s = clip(3, 10);
    s.fps = 0;
    CHECK(error_of([&] { s.validate(); }) == Errc::InvalidArgument);
    s = clip(3, 10);
    std::swap(s.frames[0], s.frames[1]);
    CHECK(error_of([&] { s.validate(); }) == Errc::InvalidArgument);
    s.frames.clear();
    CHECK(error_of([&] { s.validate(); }) == Errc::InvalidArgument);
}

TEST_CASE("corpus manifest loading") {
    TempDir dir("corpus");
    std::filesystem::create_directories(dir / "a");
    const Image img(4, 4, 3, 0.5f);
    for (const int i : {2, 0, 10}) {
        char name[16];
        std::snprintf(name, sizeof name, "%06d.png", i);
        save_png(img, dir.path() / "a" / name);
    }
    save_png(img, dir.path() / "a" / "thumb.png");
    std::ofstream(dir / "corpus.jsonl") << R"({"id":"a","frames_dir":"a","fps":2,"caption":"a cat"})" << "\n\n"
                                        << R"({"id":"b","frames_dir":"a","fps":1})" << "\n";
    const auto seqs = load_corpus_manifest(dir / "corpus.jsonl");
    REQUIRE(seqs.size() == 2);
    CHECK(seqs[0].caption == std::optional<std::string>("a cat"));
    CHECK_FALSE(seqs[1].caption.has_value());
    REQUIRE(seqs[0].frames.size() == 3);
    CHECK(seqs[0].frames[0].index == 0);
    CHECK(seqs[0].frames[1].index == 2);
    CHECK(seqs[0].frames[2].index == 10);

    std::ofstream(dir / "bad.jsonl") << "{not json\n";
    CHECK(error_of([&] { (void)load_corpus_manifest(dir / "bad.jsonl"); }) == Errc::ConfigError);
}
