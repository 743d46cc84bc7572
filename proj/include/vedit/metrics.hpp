// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace vedit {

enum class EmbeddingKind { Image, Text };

// Published scores of a fully trained editing model. Reference values for
// reports only; nothing in this library reproduces them.
inline constexpr double kReferenceClipD = 0.1361;
inline constexpr double kReferenceClipInst = 0.8724;
inline constexpr double kReferenceClipI = 0.9275;

struct EmbeddingVector {
    std::vector<float> values;
    EmbeddingKind kind = EmbeddingKind::Image;

    [[nodiscard]] std::size_t dim() const noexcept { return values.size(); }
};

/// dot(a, b) / (|a| |b|), clamped to [-1, 1]. Throws DimMismatch, ZeroVector.
double cosine(const EmbeddingVector& a, const EmbeddingVector& b);

/// Source/output image similarity.
double clip_i(const EmbeddingVector& img_src, const EmbeddingVector& img_out);

/// Directional similarity: cosine(img_out - img_src, cap_tgt - cap_src).
/// Throws ZeroVector when either delta vanishes.
double clip_d(const EmbeddingVector& img_src, const EmbeddingVector& img_out, const EmbeddingVector& cap_src,
              const EmbeddingVector& cap_tgt);

/// Similarity of the original instruction and one regenerated from the
/// (source, output) pair.
double clip_inst(const EmbeddingVector& inst_orig, const EmbeddingVector& inst_regen);

struct MetricReport {
    double clip_d = 0.0;
    double clip_inst = 0.0;
    double clip_i = 0.0;
    std::size_t n = 0;
    // Examples whose image or caption delta vanished; excluded from the CLIP-D mean.
    std::size_t clip_d_undefined = 0;

    [[nodiscard]] nlohmann::json to_json() const;
};

/// Running arithmetic means over examples.
class MetricAccumulator {
  public:
    void add(const EmbeddingVector& img_src, const EmbeddingVector& img_out, const EmbeddingVector& cap_src,
             const EmbeddingVector& cap_tgt, const EmbeddingVector& inst_orig, const EmbeddingVector& inst_regen);
    [[nodiscard]] MetricReport report() const;

  private:
    double sum_d_ = 0.0;
    double sum_inst_ = 0.0;
    double sum_i_ = 0.0;
    std::size_t n_ = 0;
    std::size_t n_d_ = 0;
};

class EmbeddingProvider {
  public:
    virtual ~EmbeddingProvider() = default;
    [[nodiscard]] virtual EmbeddingVector embed(std::string_view id, EmbeddingKind kind) const = 0;
};

/// Precomputed vectors from JSONL lines {id, kind, dim, values}.
class FileEmbeddingProvider final : public EmbeddingProvider {
  public:
    explicit FileEmbeddingProvider(const std::vector<std::filesystem::path>& files);
    [[nodiscard]] EmbeddingVector embed(std::string_view id, EmbeddingKind kind) const override;
    [[nodiscard]] std::size_t size() const noexcept { return vectors_.size(); }

  private:
    std::map<std::string, EmbeddingVector, std::less<>> vectors_;
};

/// Benchmark manifest lines name embedding ids:
/// {id, source_image, output_image, source_caption, target_caption,
///  instruction, regenerated_instruction}. Throws InvalidArgument when empty.
MetricReport evaluate_benchmark(const std::filesystem::path& manifest, const EmbeddingProvider& provider);

}  // namespace vedit
