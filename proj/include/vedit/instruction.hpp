// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "vedit/image.hpp"

namespace vedit {

/// Slots recognized in a user scaffold.
inline constexpr std::string_view kSourceImageSlot = "{source_image}";
inline constexpr std::string_view kTargetImageSlot = "{target_image}";
inline constexpr std::string_view kSourceCaptionSlot = "{source_caption}";
inline constexpr std::string_view kRejectionTokenSlot = "{rejection_token}";

struct PromptTemplate {
    std::string version;
    std::string system_text;
    std::string user_scaffold;
    std::string rejection_token = "REJECT";

    /// Throws ConfigError unless the scaffold holds exactly one of each image
    /// slot and the rejection token is non-empty.
    void validate() const;

    /// Built-in instruction template.
    static PromptTemplate instruction_default();
    /// Built-in single-image caption template (no image slots in the scaffold).
    static PromptTemplate caption_default();

    /// Text file format: header lines "# version: ..." and
    /// "# rejection_token: ...", then "[system]" and "[user]" sections.
    static PromptTemplate load(const std::filesystem::path& path);
    [[nodiscard]] std::string serialize() const;
};

struct InstructionSource {
    std::string model;
    std::string prompt_version;

    friend bool operator==(const InstructionSource&, const InstructionSource&) = default;
};

struct Instruction {
    std::string text;
    std::string verb;
    InstructionSource source;

    friend bool operator==(const Instruction&, const Instruction&) = default;
};

struct Rejected {
    std::string reason;
};

using GenOutcome = std::variant<Instruction, Rejected>;

enum class Violation { NoActionVerb, RelativeReference, TooLong };

std::string_view to_string(Violation v) noexcept;

struct ValidationRules {
    std::set<std::string, std::less<>> verbs{"Change", "Move",  "Adjust", "Turn",  "Make", "Rotate", "Shift",
                                             "Open",   "Close", "Raise",  "Lower", "Tilt", "Zoom",   "Have"};
    std::vector<std::string> relative_patterns{"target image", "second image", "the other frame"};
    std::size_t max_length = 480;
};

/// Leading word of `text` with trailing punctuation removed.
std::string leading_word(std::string_view text);

/// Checks run in order: leading action verb (case-insensitive against the
/// allowlist), relative-reference phrases (case-insensitive substrings), length.
std::optional<Violation> validate(std::string_view text, const ValidationRules& rules = {});

/// Rejected when the rejection token occurs or validation fails; otherwise the
/// trimmed text becomes the instruction. Throws EmptyResponse on blank input.
GenOutcome parse_response(std::string_view raw, const PromptTemplate& tmpl, const ValidationRules& rules = {},
                          const InstructionSource& source = {});

/// OpenAI-style chat-completions body: a system message, then one user message
/// with one text part followed by the source and target images as base64 PNG
/// data URLs.
nlohmann::json build_prompt(const Image& src, const Image& tgt, const std::optional<std::string>& src_caption,
                            const PromptTemplate& tmpl, const std::string& model, double temperature = 0.2);

/// Single-image captioning body.
nlohmann::json build_caption_prompt(const Image& image, const PromptTemplate& tmpl, const std::string& model,
                                    double temperature = 0.2);

std::string png_data_url(const Image& image);

std::string trim(std::string_view s);

}  // namespace vedit
