// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "test_util.hpp"
#include "vedit/codec.hpp"
#include "vedit/instruction.hpp"

using namespace vedit;
using nlohmann::json;
using vedit::testing::error_of;
using vedit::testing::TempDir;

namespace {

const std::filesystem::path kSource = VEDIT_SOURCE_DIR;

std::string label(const GenOutcome& o) {
    if (std::holds_alternative<Instruction>(o)) return "valid";
    return std::get<Rejected>(o).reason;
}

std::size_t count_parts(const json& payload, const std::string& type) {
    std::size_t n = 0;
    for (const auto& m : payload["messages"]) {
        if (!m["content"].is_array()) continue;
        for (const auto& p : m["content"]) n += p["type"] == type ? 1 : 0;
    }
    return n;
}

}  // namespace

TEST_CASE("fixture responses are classified as labelled") {
    const auto fixtures = json::parse(read_file(kSource / "tests/fixtures/responses.json"));
    REQUIRE(fixtures.size() == 30);
    const auto tmpl = PromptTemplate::instruction_default();
    for (const auto& f : fixtures) {
        const auto text = f["text"].get<std::string>();
        CAPTURE(text);
        const auto outcome = parse_response(text, tmpl);
        CHECK(label(outcome) == f["expect"].get<std::string>());
        if (const auto* inst = std::get_if<Instruction>(&outcome)) {
            CHECK(inst->verb == f["verb"].get<std::string>());
            CHECK(inst->text == trim(text));
        }
    }
}

TEST_CASE("validate examples") {
    CHECK_FALSE(validate("Adjust the camera angle slightly upward").has_value());
    CHECK(validate("Move the bee to the position in the target image") == Violation::RelativeReference);
    CHECK(validate("the dog jumps") == Violation::NoActionVerb);
    CHECK(validate("Move " + std::string(480, 'a')) == Violation::TooLong);
    CHECK_FALSE(validate("Move " + std::string(475, 'a')).has_value());
}

TEST_CASE("validate is pure and extensible") {
    ValidationRules rules;
    CHECK(validate("Paint the wall blue", rules) == Violation::NoActionVerb);
    rules.verbs.insert("Paint");
    CHECK_FALSE(validate("Paint the wall blue", rules).has_value());
    CHECK(validate("Paint the wall blue", rules) == validate("Paint the wall blue", rules));
    rules.relative_patterns.push_back("reference photo");
    CHECK(validate("Paint it like the Reference Photo", rules) == Violation::RelativeReference);
}

TEST_CASE("parse_response errors and round trip") {
    const auto tmpl = PromptTemplate::instruction_default();
    CHECK(error_of([&] { (void)parse_response("   \n", tmpl); }) == Errc::EmptyResponse);
    const InstructionSource src{"m", "instruct-v1"};
    const auto o = parse_response("\n Move the bee to the center of the flower \n", tmpl, {}, src);
    REQUIRE(std::holds_alternative<Instruction>(o));
    CHECK(std::get<Instruction>(o).text == "Move the bee to the center of the flower");
    CHECK(std::get<Instruction>(o).source == src);
}

TEST_CASE("build_prompt structure") {
    const Image a(8, 8, 3, 0.2f);
    const Image b(8, 8, 3, 0.8f);
    const auto tmpl = PromptTemplate::instruction_default();
    const auto p = build_prompt(a, b, std::string("a bee on a flower"), tmpl, "gpt-4o");
    CHECK(count_parts(p, "image_url") == 2);
    CHECK(count_parts(p, "text") == 1);
    CHECK(p["model"] == "gpt-4o");
    const auto system = p["messages"][0]["content"].get<std::string>();
    CHECK(system.find("REJECT") != std::string::npos);
    const auto user = p["messages"][1]["content"][0]["text"].get<std::string>();
    CHECK(user.find("a bee on a flower") != std::string::npos);
    const auto url = p["messages"][1]["content"][1]["image_url"]["url"].get<std::string>();
    CHECK(url.rfind("data:image/png;base64,", 0) == 0);
    // The system text covers the four comparison aspects and the verb rule.
    for (const auto* word : {"subjects", "positions", "camera", "background", "action verb", "absolute"}) {
        CHECK(system.find(word) != std::string::npos);
    }
    CHECK(error_of([&] { (void)build_prompt(Image{}, b, std::nullopt, tmpl, "m"); }) == Errc::ImageEncodeError);
}

TEST_CASE("template validation") {
    auto t = PromptTemplate::instruction_default();
    t.validate();
    t.rejection_token.clear();
    CHECK(error_of([&] { t.validate(); }) == Errc::ConfigError);
    t = PromptTemplate::instruction_default();
    t.user_scaffold += " {source_image}";
    CHECK(error_of([&] { t.validate(); }) == Errc::ConfigError);
}

TEST_CASE("shipped template files match the built-in templates") {
    for (const auto& [file, builtin] :
         {std::pair{"prompts/instruct-v1.txt", PromptTemplate::instruction_default()},
          std::pair{"prompts/caption-v1.txt", PromptTemplate::caption_default()}}) {
        const auto t = PromptTemplate::load(kSource / file);
        CHECK(t.version == builtin.version);
        CHECK(t.system_text == builtin.system_text);
        CHECK(t.user_scaffold == builtin.user_scaffold);
        CHECK(t.rejection_token == builtin.rejection_token);
    }
}

TEST_CASE("template serialize/load round trip") {
    TempDir dir("tmpl");
    const auto t = PromptTemplate::instruction_default();
    std::ofstream(dir / "t.txt") << t.serialize();
    const auto back = PromptTemplate::load(dir / "t.txt");
    CHECK(back.serialize() == t.serialize());
}

TEST_CASE("leading_word strips trailing punctuation") {
    CHECK(leading_word("  Shift, slightly") == "Shift");
    CHECK(leading_word("") == "");
}
