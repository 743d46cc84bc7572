// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vedit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vedit/error.hpp"
#include "vedit/simd/kernels.hpp"

namespace vedit {

namespace {

void require_kind(const EmbeddingVector& e, EmbeddingKind kind, const char* what) {
    if (e.kind != kind) {
        throw Error(Errc::InvalidArgument, std::string(what) + " must be a" +
                                               (kind == EmbeddingKind::Image ? "n image" : " text") + " embedding");
    }
}

double cosine_of(double dot, double aa, double bb) {
    if (aa == 0.0 || bb == 0.0) throw Error(Errc::ZeroVector, "cosine of a zero vector");
    return std::clamp(dot / (std::sqrt(aa) * std::sqrt(bb)), -1.0, 1.0);
}

}  // namespace

double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) throw Error(Errc::DimMismatch, "embedding dims differ");
    if (a.dim() == 0) throw Error(Errc::ZeroVector, "empty embedding");
    const auto& k = simd::active();
    const double ab = k.dot(a.values.data(), b.values.data(), a.dim());
    const double aa = k.dot(a.values.data(), a.values.data(), a.dim());
    const double bb = k.dot(b.values.data(), b.values.data(), b.dim());
    return cosine_of(ab, aa, bb);
}

double clip_i(const EmbeddingVector& img_src, const EmbeddingVector& img_out) {
    require_kind(img_src, EmbeddingKind::Image, "img_src");
    require_kind(img_out, EmbeddingKind::Image, "img_out");
    return cosine(img_src, img_out);
}

double clip_d(const EmbeddingVector& img_src, const EmbeddingVector& img_out, const EmbeddingVector& cap_src,
              const EmbeddingVector& cap_tgt) {
    require_kind(img_src, EmbeddingKind::Image, "img_src");
    require_kind(img_out, EmbeddingKind::Image, "img_out");
    require_kind(cap_src, EmbeddingKind::Text, "cap_src");
    require_kind(cap_tgt, EmbeddingKind::Text, "cap_tgt");
    const std::size_t n = img_src.dim();
    if (img_out.dim() != n || cap_src.dim() != n || cap_tgt.dim() != n) throw Error(Errc::DimMismatch, "embedding dims differ");
    // Deltas in double: float subtraction would lose digits when inputs are close.
    double dot = 0.0;
    double ii = 0.0;
    double tt = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double di = static_cast<double>(img_out.values[i]) - img_src.values[i];
        const double dt = static_cast<double>(cap_tgt.values[i]) - cap_src.values[i];
        dot += di * dt;
        ii += di * di;
        tt += dt * dt;
    }
    return cosine_of(dot, ii, tt);
}

double clip_inst(const EmbeddingVector& inst_orig, const EmbeddingVector& inst_regen) {
    require_kind(inst_orig, EmbeddingKind::Text, "inst_orig");
    require_kind(inst_regen, EmbeddingKind::Text, "inst_regen");
    return cosine(inst_orig, inst_regen);
}

nlohmann::json MetricReport::to_json() const {
    return {{"clip_d", clip_d},
            {"clip_inst", clip_inst},
            {"clip_i", clip_i},
            {"n", n},
            {"clip_d_undefined", clip_d_undefined},
            {"reference", {{"clip_d", kReferenceClipD}, {"clip_inst", kReferenceClipInst}, {"clip_i", kReferenceClipI}}}};
}

void MetricAccumulator::add(const EmbeddingVector& img_src, const EmbeddingVector& img_out,
                            const EmbeddingVector& cap_src, const EmbeddingVector& cap_tgt,
                            const EmbeddingVector& inst_orig, const EmbeddingVector& inst_regen) {
    sum_i_ += clip_i(img_src, img_out);
    sum_inst_ += clip_inst(inst_orig, inst_regen);
    try {
        sum_d_ += clip_d(img_src, img_out, cap_src, cap_tgt);
        ++n_d_;
    } catch (const Error& e) {
        if (e.code() != Errc::ZeroVector) throw;
    }
    ++n_;
}

MetricReport MetricAccumulator::report() const {
    MetricReport r;
    r.n = n_;
    r.clip_d_undefined = n_ - n_d_;
    if (n_ > 0) {
        r.clip_i = sum_i_ / static_cast<double>(n_);
        r.clip_inst = sum_inst_ / static_cast<double>(n_);
    }
    if (n_d_ > 0) r.clip_d = sum_d_ / static_cast<double>(n_d_);
    return r;
}

FileEmbeddingProvider::FileEmbeddingProvider(const std::vector<std::filesystem::path>& files) {
    for (const auto& path : files) {
        std::ifstream in(path);
        if (!in) throw Error(Errc::IoError, "cannot open embeddings " + path.string());
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                EmbeddingVector e;
                const auto kind = j.at("kind").get<std::string>();
                if (kind == "image") {
                    e.kind = EmbeddingKind::Image;
                } else if (kind == "text") {
                    e.kind = EmbeddingKind::Text;
                } else {
                    throw Error(Errc::CorruptRecord, "unknown kind " + kind);
                }
                e.values = j.at("values").get<std::vector<float>>();
                if (e.values.empty() || j.at("dim").get<std::size_t>() != e.values.size()) {
                    throw Error(Errc::CorruptRecord, "dim does not match values");
                }
                for (float v : e.values) {
                    if (!std::isfinite(v)) throw Error(Errc::NonFiniteValue, "embedding value not finite");
                }
                vectors_[j.at("id").get<std::string>()] = std::move(e);
            } catch (const nlohmann::json::exception& ex) {
                throw Error(Errc::CorruptRecord, path.string() + ":" + std::to_string(lineno) + ": " + ex.what());
            }
        }
    }
}

EmbeddingVector FileEmbeddingProvider::embed(std::string_view id, EmbeddingKind kind) const {
    const auto it = vectors_.find(id);
    if (it == vectors_.end()) throw Error(Errc::InvalidArgument, "no embedding for id " + std::string(id));
    if (it->second.kind != kind) throw Error(Errc::InvalidArgument, "embedding " + std::string(id) + " has the wrong kind");
    return it->second;
}

MetricReport evaluate_benchmark(const std::filesystem::path& manifest, const EmbeddingProvider& provider) {
    std::ifstream in(manifest);
    if (!in) throw Error(Errc::IoError, "cannot open benchmark manifest " + manifest.string());
    MetricAccumulator acc;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            auto image = [&](const char* key) { return provider.embed(j.at(key).get<std::string>(), EmbeddingKind::Image); };
            auto text = [&](const char* key) { return provider.embed(j.at(key).get<std::string>(), EmbeddingKind::Text); };
            acc.add(image("source_image"), image("output_image"), text("source_caption"), text("target_caption"),
                    text("instruction"), text("regenerated_instruction"));
        } catch (const nlohmann::json::exception& e) {
            throw Error(Errc::CorruptRecord, manifest.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    auto report = acc.report();
    if (report.n == 0) throw Error(Errc::InvalidArgument, "benchmark manifest " + manifest.string() + " has no examples");
    return report;
}

}  // namespace vedit
