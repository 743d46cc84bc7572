// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#include "vedit/mllm_client.hpp"

#include <httplib.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdlib>
#include <thread>

#include "vedit/codec.hpp"
#include "vedit/error.hpp"

namespace vedit {

std::chrono::milliseconds RetryPolicy::backoff(int retry) const {
    const double ms = static_cast<double>(initial_backoff.count()) * std::pow(factor, retry - 1);
    return std::chrono::milliseconds(static_cast<long long>(std::min(ms, static_cast<double>(max_backoff.count()))));
}

InFlightLimiter::InFlightLimiter(int limit) : limit_(limit) {
    if (limit < 1) throw Error(Errc::ConfigError, "max_in_flight must be at least 1");
}

InFlightLimiter::Slot::Slot(InFlightLimiter& owner) : owner_(owner) {
    std::unique_lock lock(owner_.mu_);
    owner_.cv_.wait(lock, [&] { return owner_.in_use_ < owner_.limit_; });
    ++owner_.in_use_;
}

InFlightLimiter::Slot::~Slot() {
    {
        std::lock_guard lock(owner_.mu_);
        --owner_.in_use_;
    }
    owner_.cv_.notify_one();
}

namespace {

void split_base_url(const std::string& url, std::string& scheme_host_port, std::string& path_prefix) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error(Errc::ConfigError, "base URL needs a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port = url.substr(0, path_start);
    path_prefix = path_start == std::string::npos ? std::string() : url.substr(path_start);
    while (!path_prefix.empty() && path_prefix.back() == '/') path_prefix.pop_back();
}

bool retryable_status(int status) { return status == 408 || status == 409 || status == 429 || status >= 500; }

std::optional<std::chrono::milliseconds> retry_after(const httplib::Result& res) {
    if (!res || !res->has_header("Retry-After")) return std::nullopt;
    try {
        const double seconds = std::stod(res->get_header_value("Retry-After"));
        if (seconds >= 0.0) return std::chrono::milliseconds(static_cast<long long>(seconds * 1000.0));
    } catch (const std::exception&) {
        // Delta-seconds only; otherwise the policy backoff applies.
    }
    return std::nullopt;
}

}  // namespace

OpenAiCompatibleClient::OpenAiCompatibleClient(ClientConfig cfg, Sleeper sleeper)
    : cfg_(std::move(cfg)),
      sleep_(sleeper ? std::move(sleeper) : Sleeper([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); })),
      limiter_(cfg_.max_in_flight) {
    if (cfg_.api_key.empty()) {
        if (const char* key = std::getenv("MLLM_API_KEY")) cfg_.api_key = key;
    }
    if (cfg_.retry.max_retries < 0) throw Error(Errc::ConfigError, "max_retries must be non-negative");
    split_base_url(cfg_.base_url, scheme_host_port_, path_prefix_);
}

std::string OpenAiCompatibleClient::id() const { return cfg_.model + "@" + cfg_.base_url; }

void OpenAiCompatibleClient::pace() {
    if (cfg_.min_request_interval.count() <= 0) return;
    std::chrono::steady_clock::time_point start;
    {
        std::lock_guard lock(pace_mu_);
        const auto now = std::chrono::steady_clock::now();
        start = std::max(now, next_start_);
        next_start_ = start + cfg_.min_request_interval;
    }
    const auto wait = std::chrono::duration_cast<std::chrono::milliseconds>(start - std::chrono::steady_clock::now());
    if (wait.count() > 0) sleep_(wait);
}

ChatResult OpenAiCompatibleClient::complete(const nlohmann::json& payload) {
    nlohmann::json body = payload;
    if (!body.contains("model")) body["model"] = cfg_.model;
    const std::string serialized = body.dump();
    const std::string path = path_prefix_ + "/chat/completions";
    httplib::Headers headers;
    if (!cfg_.api_key.empty()) headers.emplace("Authorization", "Bearer " + cfg_.api_key);

    std::string last_error;
    for (int attempt = 1; attempt <= cfg_.retry.max_retries + 1; ++attempt) {
        pace();
        httplib::Result res;
        {
            InFlightLimiter::Slot slot(limiter_);
            httplib::Client cli(scheme_host_port_);
            cli.set_connection_timeout(cfg_.timeout);
            cli.set_read_timeout(cfg_.timeout);
            cli.set_write_timeout(cfg_.timeout);
            res = cli.Post(path, headers, serialized, "application/json");
        }
        bool retry = false;
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            retry = true;
        } else if (res->status == 200) {
            try {
                const auto j = nlohmann::json::parse(res->body);
                const auto& content = j.at("choices").at(0).at("message").at("content");
                if (!content.is_string()) throw Error(Errc::ProviderError, "content is not a string");
                return {content.get<std::string>(), attempt};
            } catch (const nlohmann::json::exception& e) {
                throw Error(Errc::ProviderError, std::string("malformed completion: ") + e.what());
            }
        } else {
            last_error = "HTTP " + std::to_string(res->status);
            retry = retryable_status(res->status);
        }
        if (!retry) throw Error(Errc::ProviderError, last_error + " (not retryable)");
        if (attempt <= cfg_.retry.max_retries) {
            auto wait = cfg_.retry.backoff(attempt);
            if (auto hinted = retry_after(res)) wait = std::min(std::max(wait, *hinted), cfg_.retry.max_backoff);
            sleep_(wait);
        }
    }
    throw Error(Errc::ProviderError,
                last_error + " after " + std::to_string(cfg_.retry.max_retries + 1) + " attempts");
}

namespace {

constexpr std::array<std::string_view, 8> kMockInstructions = {
    "Move the textured square a little toward the right edge of the frame.",
    "Shift the camera view slightly to the left.",
    "Rotate the central object a few degrees clockwise.",
    "Adjust the framing so the main subject sits closer to the center.",
    "Raise the camera angle slightly to show more of the top of the scene.",
    "Turn the foreground shape so it faces the left side of the picture.",
    "Lower the square toward the bottom of the frame.",
    "Zoom in slightly on the patterned object in the middle.",
};

constexpr std::array<std::string_view, 4> kMockCaptions = {
    "A textured square rests on a patterned background.",
    "A synthetic scene shows a bright block over a noisy backdrop.",
    "A patterned object sits near the middle of a textured scene.",
    "A small textured tile is placed on a busy mottled surface.",
};

std::size_t count_images(const nlohmann::json& payload) {
    std::size_t n = 0;
    if (!payload.contains("messages")) return 0;
    for (const auto& msg : payload["messages"]) {
        if (!msg.contains("content") || !msg["content"].is_array()) continue;
        for (const auto& part : msg["content"]) {
            if (part.value("type", "") == "image_url") ++n;
        }
    }
    return n;
}

}  // namespace

std::string MockMllmProvider::request_hash(const nlohmann::json& payload) { return sha256_hex(payload.dump()); }

void MockMllmProvider::pin(const std::string& request_hash, std::string response) {
    std::lock_guard lock(mu_);
    pinned_[request_hash] = std::move(response);
}

ChatResult MockMllmProvider::complete(const nlohmann::json& payload) {
    ++calls_;
    const std::string h = request_hash(payload);
    {
        std::lock_guard lock(mu_);
        if (auto it = pinned_.find(h); it != pinned_.end()) return {it->second, 1};
    }
    const auto bucket = std::stoul(h.substr(0, 8), nullptr, 16);
    if (count_images(payload) < 2) return {std::string(kMockCaptions[bucket % kMockCaptions.size()]), 1};
    switch (bucket % 10) {
        case 0: return {"REJECT: the changes are too complex to describe accurately.", 1};
        case 1: return {"The square as in the target image.", 1};
        default: return {std::string(kMockInstructions[(bucket / 10) % kMockInstructions.size()]), 1};
    }
}

std::string caption(const Image& image, MllmProvider& provider, const std::string& model, const PromptTemplate& tmpl) {
    const auto result = provider.complete(build_caption_prompt(image, tmpl, model));
    std::string text = trim(result.content);
    if (text.empty()) throw Error(Errc::ProviderError, "empty caption");
    return text;
}

}  // namespace vedit
