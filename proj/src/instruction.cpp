// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vedit/instruction.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "vedit/codec.hpp"
#include "vedit/error.hpp"

namespace vedit {

namespace {

// Kept in sync with prompts/instruct-v1.txt and prompts/caption-v1.txt.
constexpr std::string_view kInstructionTemplate = R"PROMPT(# version: instruct-v1
# rejection_token: REJECT
[system]
You write image-editing instructions. You are shown two photos taken from the same video: a source image and a target image. Compare them and note what differs in the subjects (pose, expression, shape), in the relative positions of elements, in the camera angle or framing, and in the background.
Then write one editing instruction that turns the source image into the target image.
Rules:
- Start the instruction with an imperative action verb such as Change, Move, Adjust, Turn, Rotate, Raise, Lower, Tilt, Zoom, Open, Close, Shift, Make or Have.
- Describe the result in absolute terms that make sense without seeing the target image. Say where something ends up, not where it is in the other picture.
- Reply with the instruction only, in one or two sentences.
- If the differences are too complex or ambiguous to describe accurately, reply with {rejection_token} followed by a short reason.
[user]
Source image: {source_image}
Target image: {target_image}
Caption of the source image: {source_caption}
Write the editing instruction.
)PROMPT";
constexpr std::string_view kCaptionTemplate = R"PROMPT(# version: caption-v1
# rejection_token: REJECT
[system]
Describe the image in one to three sentences. Mention the main subjects, what they are doing, and the setting.
[user]
Describe this image.
)PROMPT";

std::size_t count_occurrences(std::string_view text, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = text.find(needle); pos != std::string_view::npos; pos = text.find(needle, pos + needle.size())) ++n;
    return n;
}

std::string replace_all(std::string text, std::string_view key, std::string_view value) {
    for (auto pos = text.find(key); pos != std::string::npos; pos = text.find(key, pos + value.size())) {
        text.replace(pos, key.size(), value);
    }
    return text;
}

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

PromptTemplate parse_template(std::string_view text, const std::string& origin) {
    PromptTemplate t;
    std::istringstream in{std::string(text)};
    std::string line;
    std::string* section = nullptr;
    std::string system;
    std::string user;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (section == nullptr && line.rfind("# ", 0) == 0) {
            const auto colon = line.find(':');
            if (colon == std::string::npos) continue;
            const std::string key = trim(std::string_view(line).substr(2, colon - 2));
            const std::string value = trim(std::string_view(line).substr(colon + 1));
            if (key == "version") t.version = value;
            if (key == "rejection_token") t.rejection_token = value;
            continue;
        }
        if (line == "[system]") {
            section = &system;
            continue;
        }
        if (line == "[user]") {
            section = &user;
            continue;
        }
        if (section != nullptr) {
            if (!section->empty()) section->push_back('\n');
            section->append(line);
        }
    }
    if (t.version.empty()) throw Error(Errc::ConfigError, origin + ": missing '# version:' header");
    t.system_text = trim(system);
    t.user_scaffold = trim(user);
    return t;
}

}  // namespace

std::string trim(std::string_view s) {
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    auto b = std::find_if_not(s.begin(), s.end(), is_space);
    auto e = std::find_if_not(s.rbegin(), s.rend(), is_space).base();
    return b < e ? std::string(b, e) : std::string();
}

void PromptTemplate::validate() const {
    if (rejection_token.empty()) throw Error(Errc::ConfigError, "template " + version + ": empty rejection token");
    if (count_occurrences(user_scaffold, kSourceImageSlot) != 1 || count_occurrences(user_scaffold, kTargetImageSlot) != 1) {
        throw Error(Errc::ConfigError, "template " + version + ": scaffold needs exactly two image slots");
    }
}

PromptTemplate PromptTemplate::instruction_default() { return parse_template(kInstructionTemplate, "built-in"); }

PromptTemplate PromptTemplate::caption_default() { return parse_template(kCaptionTemplate, "built-in"); }

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) { return parse_template(read_file(path), path.string()); }

std::string PromptTemplate::serialize() const {
    return "# version: " + version + "\n# rejection_token: " + rejection_token + "\n[system]\n" + system_text +
           "\n[user]\n" + user_scaffold + "\n";
}

std::string_view to_string(Violation v) noexcept {
    switch (v) {
        case Violation::NoActionVerb: return "no-action-verb";
        case Violation::RelativeReference: return "relative-reference";
        case Violation::TooLong: return "too-long";
    }
    return "unknown";
}

std::string leading_word(std::string_view text) {
    const std::string t = trim(text);
    auto end = std::find_if(t.begin(), t.end(), [](unsigned char c) { return std::isspace(c) != 0; });
    std::string word(t.begin(), end);
    while (!word.empty() && std::ispunct(static_cast<unsigned char>(word.back())) != 0) word.pop_back();
    return word;
}

std::optional<Violation> validate(std::string_view text, const ValidationRules& rules) {
    const std::string word = lower(leading_word(text));
    const bool verb_ok = !word.empty() && std::any_of(rules.verbs.begin(), rules.verbs.end(),
                                                      [&](const std::string& v) { return lower(v) == word; });
    if (!verb_ok) return Violation::NoActionVerb;
    const std::string haystack = lower(text);
    for (const auto& pattern : rules.relative_patterns) {
        if (haystack.find(lower(pattern)) != std::string::npos) return Violation::RelativeReference;
    }
    if (text.size() > rules.max_length) return Violation::TooLong;
    return std::nullopt;
}

GenOutcome parse_response(std::string_view raw, const PromptTemplate& tmpl, const ValidationRules& rules,
                          const InstructionSource& source) {
    std::string text = trim(raw);
    if (text.empty()) throw Error(Errc::EmptyResponse, "model returned no text");
    if (!tmpl.rejection_token.empty() && text.find(tmpl.rejection_token) != std::string::npos) {
        return Rejected{"rejected-by-model"};
    }
    if (const auto violation = validate(text, rules)) return Rejected{std::string(to_string(*violation))};
    std::string verb = leading_word(text);
    return Instruction{std::move(text), std::move(verb), source};
}

std::string png_data_url(const Image& image) {
    std::vector<std::uint8_t> png;
    try {
        png = encode_png(image);
    } catch (const Error& e) {
        throw Error(Errc::ImageEncodeError, e.what());
    }
    return "data:image/png;base64," + base64_encode(png);
}

nlohmann::json build_prompt(const Image& src, const Image& tgt, const std::optional<std::string>& src_caption,
                            const PromptTemplate& tmpl, const std::string& model, double temperature) {
    tmpl.validate();
    if (src.empty() || tgt.empty()) throw Error(Errc::ImageEncodeError, "build_prompt needs both images");
    const std::string system = replace_all(tmpl.system_text, kRejectionTokenSlot, tmpl.rejection_token);
    std::string user = replace_all(tmpl.user_scaffold, kSourceImageSlot, "<image 1>");
    user = replace_all(std::move(user), kTargetImageSlot, "<image 2>");
    user = replace_all(std::move(user), kSourceCaptionSlot, src_caption.value_or("unavailable"));
    user = replace_all(std::move(user), kRejectionTokenSlot, tmpl.rejection_token);
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", user}});
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", png_data_url(src)}}}});
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", png_data_url(tgt)}}}});
    return {
        {"model", model},
        {"temperature", temperature},
        {"messages", nlohmann::json::array({{{"role", "system"}, {"content", system}},
                                            {{"role", "user"}, {"content", content}}})},
    };
}

nlohmann::json build_caption_prompt(const Image& image, const PromptTemplate& tmpl, const std::string& model,
                                    double temperature) {
    if (image.empty()) throw Error(Errc::ImageEncodeError, "caption needs an image");
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", tmpl.user_scaffold}});
    content.push_back({{"type", "image_url"}, {"image_url", {{"url", png_data_url(image)}}}});
    return {
        {"model", model},
        {"temperature", temperature},
        {"messages", nlohmann::json::array({{{"role", "system"}, {"content", tmpl.system_text}},
                                            {{"role", "user"}, {"content", content}}})},
    };
}

}  // namespace vedit
