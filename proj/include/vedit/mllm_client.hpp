// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "vedit/image.hpp"
#include "vedit/instruction.hpp"

namespace vedit {

struct ChatResult {
    std::string content;
    int attempts = 1;
};

/// Anything that answers an OpenAI-style chat-completions body.
class MllmProvider {
  public:
    virtual ~MllmProvider() = default;
    [[nodiscard]] virtual std::string id() const = 0;
    /// Throws ProviderError when no usable answer could be obtained.
    virtual ChatResult complete(const nlohmann::json& payload) = 0;
};

struct RetryPolicy {
    int max_retries = 4;
    std::chrono::milliseconds initial_backoff{1000};
    double factor = 2.0;
    // Upper bound on a server-requested Retry-After wait.
    std::chrono::milliseconds max_backoff{60000};

    /// Wait before retry number `retry` (1-based).
    [[nodiscard]] std::chrono::milliseconds backoff(int retry) const;
};

/// Caps concurrent holders; blocking acquire, RAII release.
class InFlightLimiter {
  public:
    explicit InFlightLimiter(int limit);

    class Slot {
      public:
        explicit Slot(InFlightLimiter& owner);
        ~Slot();
        Slot(const Slot&) = delete;
        Slot& operator=(const Slot&) = delete;

      private:
        InFlightLimiter& owner_;
    };

    [[nodiscard]] int limit() const noexcept { return limit_; }

  private:
    int limit_;
    int in_use_ = 0;
    std::mutex mu_;
    std::condition_variable cv_;
};

struct ClientConfig {
    std::string base_url = "https://api.openai.com/v1";
    std::string model = "gpt-4o";
    std::string api_key;  // defaults to $MLLM_API_KEY when empty
    RetryPolicy retry;
    int max_in_flight = 4;
    // Minimum spacing between request starts; zero disables rate limiting.
    std::chrono::milliseconds min_request_interval{0};
    std::chrono::seconds timeout{120};
};

/// POST {base_url}/chat/completions with bounded concurrency, exponential
/// backoff on 429/5xx/transport errors, and Retry-After support. Reads
/// choices[0].message.content.
class OpenAiCompatibleClient final : public MllmProvider {
  public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    explicit OpenAiCompatibleClient(ClientConfig cfg, Sleeper sleeper = {});

    [[nodiscard]] std::string id() const override;
    ChatResult complete(const nlohmann::json& payload) override;

    [[nodiscard]] const ClientConfig& config() const noexcept { return cfg_; }

  private:
    void pace();

    ClientConfig cfg_;
    Sleeper sleep_;
    InFlightLimiter limiter_;
    std::string scheme_host_port_;
    std::string path_prefix_;
    std::mutex pace_mu_;
    std::chrono::steady_clock::time_point next_start_{};
};

/// Offline provider: the answer is a pure function of the request hash, so
/// runs are reproducible. Responses can be pinned per request hash.
class MockMllmProvider final : public MllmProvider {
  public:
    MockMllmProvider() = default;

    [[nodiscard]] std::string id() const override { return "mock-v1"; }
    ChatResult complete(const nlohmann::json& payload) override;

    void pin(const std::string& request_hash, std::string response);
    [[nodiscard]] long calls() const noexcept { return calls_.load(); }

    static std::string request_hash(const nlohmann::json& payload);

  private:
    std::atomic<long> calls_{0};
    std::mutex mu_;
    std::map<std::string, std::string> pinned_;
};

/// One to three sentence description of `image`.
std::string caption(const Image& image, MllmProvider& provider, const std::string& model,
                    const PromptTemplate& tmpl = PromptTemplate::caption_default());

}  // namespace vedit
