// Copyright (C) 2026 The vedit Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <httplib.h>

#include <atomic>
#include <set>
#include <thread>
#include <vector>

#include "test_util.hpp"
#include "vedit/mllm_client.hpp"

using namespace vedit;
using nlohmann::json;
using vedit::testing::error_of;
using namespace std::chrono_literals;

namespace {

std::string completion(const std::string& content) {
    return json{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", content}}}}})}}.dump();
}

// Local chat-completions server whose handler is supplied per test.
class FakeServer {
  public:
    explicit FakeServer(httplib::Server::Handler handler) {
        server_.Post("/v1/chat/completions", std::move(handler));
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }
    [[nodiscard]] std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

  private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

struct RecordingSleeper {
    std::shared_ptr<std::vector<std::chrono::milliseconds>> waits = std::make_shared<std::vector<std::chrono::milliseconds>>();
    void operator()(std::chrono::milliseconds d) const { waits->push_back(d); }
};

ClientConfig config_for(const FakeServer& s) {
    ClientConfig c;
    c.base_url = s.base_url();
    c.api_key = "test-key";
    c.timeout = 10s;
    return c;
}

const json kPayload = {{"messages", json::array({{{"role", "user"}, {"content", "hi"}}})}};

}  // namespace

TEST_CASE("backoff doubles and is capped") {
    RetryPolicy p;
    CHECK(p.backoff(1) == 1000ms);
    CHECK(p.backoff(2) == 2000ms);
    CHECK(p.backoff(4) == 8000ms);
    CHECK(p.backoff(10) == 60000ms);
}

TEST_CASE("two 429s then success takes three attempts") {
    std::atomic<int> hits{0};
    FakeServer server([&](const httplib::Request& req, httplib::Response& res) {
        CHECK(req.get_header_value("Authorization") == "Bearer test-key");
        if (++hits <= 2) {
            res.status = 429;
            return;
        }
        const auto body = json::parse(req.body);
        CHECK(body["model"] == "gpt-4o");
        res.set_content(completion("Move the bee to the center of the flower"), "application/json");
    });
    RecordingSleeper sleeper;
    OpenAiCompatibleClient client(config_for(server), sleeper);
    const auto r = client.complete(kPayload);
    CHECK(r.attempts == 3);
    CHECK(r.content == "Move the bee to the center of the flower");
    CHECK(hits == 3);
    REQUIRE(sleeper.waits->size() == 2);
    CHECK((*sleeper.waits)[0] == 1000ms);
    CHECK((*sleeper.waits)[1] == 2000ms);
}

TEST_CASE("persistent 5xx exhausts retries") {
    std::atomic<int> hits{0};
    FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 503;
    });
    RecordingSleeper sleeper;
    OpenAiCompatibleClient client(config_for(server), sleeper);
    CHECK(error_of([&] { (void)client.complete(kPayload); }) == Errc::ProviderError);
    CHECK(hits == 5);
    CHECK(sleeper.waits->size() == 4);
}

TEST_CASE("client errors are not retried") {
    std::atomic<int> hits{0};
    FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
    });
    OpenAiCompatibleClient client(config_for(server), RecordingSleeper{});
    CHECK(error_of([&] { (void)client.complete(kPayload); }) == Errc::ProviderError);
    CHECK(hits == 1);
}

TEST_CASE("Retry-After lengthens the wait") {
    std::atomic<int> hits{0};
    FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        if (++hits == 1) {
            res.status = 429;
            res.set_header("Retry-After", "7");
            return;
        }
        res.set_content(completion("ok"), "application/json");
    });
    RecordingSleeper sleeper;
    OpenAiCompatibleClient client(config_for(server), sleeper);
    CHECK(client.complete(kPayload).attempts == 2);
    REQUIRE(sleeper.waits->size() == 1);
    CHECK((*sleeper.waits)[0] == 7000ms);
}

TEST_CASE("malformed completion is a provider error") {
    FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices": []})", "application/json");
    });
    OpenAiCompatibleClient client(config_for(server), RecordingSleeper{});
    CHECK(error_of([&] { (void)client.complete(kPayload); }) == Errc::ProviderError);
}

TEST_CASE("transport failures are retried then reported") {
    ClientConfig c;
    c.base_url = "http://127.0.0.1:1/v1";
    c.timeout = 2s;
    c.retry.max_retries = 2;
    RecordingSleeper sleeper;
    OpenAiCompatibleClient client(c, sleeper);
    CHECK(error_of([&] { (void)client.complete(kPayload); }) == Errc::ProviderError);
    CHECK(sleeper.waits->size() == 2);
}

TEST_CASE("in-flight requests never exceed the limit") {
    std::atomic<int> current{0};
    std::atomic<int> peak{0};
    FakeServer server([&](const httplib::Request&, httplib::Response& res) {
        const int now = ++current;
        int seen = peak.load();
        while (now > seen && !peak.compare_exchange_weak(seen, now)) {
        }
        std::this_thread::sleep_for(30ms);
        --current;
        res.set_content(completion("ok"), "application/json");
    });
    auto cfg = config_for(server);
    cfg.max_in_flight = 2;
    OpenAiCompatibleClient client(cfg, RecordingSleeper{});
    std::vector<std::thread> threads;
    for (int i = 0; i < 8; ++i) threads.emplace_back([&] { (void)client.complete(kPayload); });
    for (auto& t : threads) t.join();
    CHECK(peak.load() >= 1);
    CHECK(peak.load() <= 2);
}

TEST_CASE("limiter rejects a zero limit") {
    CHECK(error_of([] { InFlightLimiter l(0); }) == Errc::ConfigError);
    ClientConfig c;
    c.base_url = "no-scheme";
    CHECK(error_of([&] { OpenAiCompatibleClient cl(c); }) == Errc::ConfigError);
}

TEST_CASE("mock provider is deterministic and pinnable") {
    MockMllmProvider a;
    MockMllmProvider b;
    const Image img(8, 8, 3, 0.5f);
    const Image img2(8, 8, 3, 0.25f);
    const auto payload = build_prompt(img, img2, std::nullopt, PromptTemplate::instruction_default(), "m");
    CHECK(a.complete(payload).content == b.complete(payload).content);
    a.pin(MockMllmProvider::request_hash(payload), "Close the door.");
    CHECK(a.complete(payload).content == "Close the door.");
    CHECK(a.calls() == 2);
    const auto cap = caption(img, a, "m");
    CHECK_FALSE(cap.empty());
    CHECK(a.calls() == 3);
}

TEST_CASE("mock answers cover every outcome class") {
    MockMllmProvider mock;
    const auto tmpl = PromptTemplate::instruction_default();
    std::set<std::string> labels;
    for (int i = 0; i < 60; ++i) {
        const Image src(4, 4, 3, static_cast<float>(i) / 60.0f);
        const Image tgt(4, 4, 3, 0.5f);
        const auto o = parse_response(mock.complete(build_prompt(src, tgt, std::nullopt, tmpl, "m")).content, tmpl);
        labels.insert(std::holds_alternative<Instruction>(o) ? "valid" : std::get<Rejected>(o).reason);
    }
    CHECK(labels.count("valid") == 1);
    CHECK(labels.count("rejected-by-model") == 1);
    CHECK(labels.count("no-action-verb") == 1);
}
