#include <catch2/catch_amalgamated.hpp>

#include "coma/llm_client.hpp"

#include <thread>

#include "httplib.h"

#include "support.hpp"

using namespace coma;

TEST_CASE("role names round-trip", "[llm]") {
    for (std::size_t i = 0; i < kRoleCount; ++i) {
        const auto role = static_cast<RoleTag>(i);
        const auto back = role_from_string(to_string(role));
        REQUIRE(back);
        CHECK(*back == role);
    }
    CHECK_FALSE(role_from_string("bogus"));
    CHECK(to_string(RoleTag::planner) == "planner");
    CHECK(to_string(RoleTag::tc_direct) == "tc_direct");
}

TEST_CASE("request fingerprints bind role, model, and user text only", "[llm]") {
    LlmRequest base;
    base.model = "m";
    base.user = "hello";
    base.system = "sys";
    base.role_tag = RoleTag::extract;
    const std::string fp = request_fingerprint(base);
    CHECK(fp.size() == 64);

    LlmRequest same = base;
    same.system = "different system";
    same.temperature = 0.9;
    same.max_output_tokens = TokenCount{1};
    CHECK(request_fingerprint(same) == fp);

    LlmRequest other = base;
    other.user = "hello!";
    CHECK(request_fingerprint(other) != fp);
    other = base;
    other.model = "m2";
    CHECK(request_fingerprint(other) != fp);
    other = base;
    other.role_tag = RoleTag::infer;
    CHECK(request_fingerprint(other) != fp);
}

TEST_CASE("scripted backend replays its queue in order", "[llm]") {
    ScriptedBackend be({"first", "second"});
    LlmRequest req;
    req.system = "a b";    // 2 tokens
    req.user = "c d e";    // 3 tokens

    const LlmResponse r1 = be.complete(req);
    CHECK(r1.text == "first");
    CHECK(r1.prompt_tokens.value == 5);
    CHECK(r1.completion_tokens.value == 1);
    CHECK(r1.latency_ms == 0);

    CHECK(be.complete(req).text == "second");
    CHECK(be.consumed() == 2);
    CHECK_THROWS_AS(be.complete(req), ScriptExhausted);

    ScriptedBackend cyc({"a", "b"}, true);
    CHECK(cyc.complete(req).text == "a");
    CHECK(cyc.complete(req).text == "b");
    CHECK(cyc.complete(req).text == "a");

    ScriptedBackend grow;
    CHECK_THROWS_AS(grow.complete(req), ScriptExhausted);
    grow.push("late");
    CHECK(grow.complete(req).text == "late");
    CHECK(grow.name() == "scripted");
}

TEST_CASE("script files hold bare strings or text objects", "[llm]") {
    ts::TempDir dir;
    const std::string path = dir.str("script.jsonl");
    ts::write_file(path,
                   "\"plain reply\"\n"
                   "\n"
                   "{\"text\": \"object reply\"}\n");
    const auto replies = ScriptedBackend::load_script(path);
    REQUIRE(replies.size() == 2);
    CHECK(replies[0] == "plain reply");
    CHECK(replies[1] == "object reply");

    ts::write_file(path, "not json\n");
    CHECK_THROWS_AS(ScriptedBackend::load_script(path), ConfigError);
    ts::write_file(path, "{\"reply\": \"wrong key\"}\n");
    CHECK_THROWS_AS(ScriptedBackend::load_script(path), ConfigError);
    CHECK_THROWS_AS(ScriptedBackend::load_script(dir.str("missing.jsonl")), ConfigError);
}

TEST_CASE("cassettes record and replay responses verbatim", "[llm]") {
    ts::TempDir dir;
    const std::string path = dir.str("tape.jsonl");

    LlmRequest q1;
    q1.model = "m";
    q1.user = "question one";
    q1.role_tag = RoleTag::planner;
    LlmRequest q2 = q1;
    q2.user = "question two";
    q2.role_tag = RoleTag::manager;

    LlmResponse a1, a2;
    {
        auto inner = std::make_shared<ScriptedBackend>(std::vector<std::string>{"r1", "r2"});
        CassetteRecorder rec(inner, path);
        CHECK(rec.name() == "cassette-record");
        a1 = rec.complete(q1);
        a2 = rec.complete(q2);
    }

    CassetteReplayer replay(path);
    CHECK(replay.name() == "cassette-replay");
    CHECK(replay.complete(q1) == a1);
    CHECK(replay.complete(q2) == a2);
    CHECK_THROWS_AS(replay.complete(q2), CassetteMismatch);  // past the end

    CassetteReplayer diverges(path);
    LlmRequest other = q1;
    other.user = "something else";
    CHECK_THROWS_AS(diverges.complete(other), CassetteMismatch);

    // Re-recording truncates the previous tape.
    {
        auto inner = std::make_shared<ScriptedBackend>(std::vector<std::string>{"r3"});
        CassetteRecorder rec(inner, path);
        rec.complete(q1);
    }
    CHECK(load_cassette(path).size() == 1);

    ts::write_file(path, "{broken\n");
    CHECK_THROWS_AS(load_cassette(path), ConfigError);
}

namespace {

class Flaky final : public LlmBackend {
public:
    Flaky(int failures, std::string kind) : failures_(failures), kind_(std::move(kind)) {}
    LlmResponse complete(const LlmRequest&) override {
        ++calls;
        if (calls <= failures_) {
            if (kind_ == "transport") throw TransportError("flaky");
            throw ProviderError(404, "nope");
        }
        return LlmResponse{"ok", TokenCount{1}, TokenCount{1}, 0};
    }
    std::string_view name() const override { return "flaky"; }
    int calls = 0;

private:
    int failures_;
    std::string kind_;
};

}  // namespace

TEST_CASE("transient failures are retried with backoff, definitive ones are not",
          "[llm]") {
    LlmRequest req;

    auto flaky = std::make_shared<Flaky>(2, "transport");
    RetryingBackend retry(flaky, 2, std::chrono::milliseconds(0));
    CHECK(retry.attempts_allowed() == 3);
    CHECK(retry.complete(req).text == "ok");
    CHECK(flaky->calls == 3);
    CHECK(retry.name() == "flaky");

    auto hopeless = std::make_shared<Flaky>(99, "transport");
    RetryingBackend give_up(hopeless, 2, std::chrono::milliseconds(0));
    CHECK_THROWS_AS(give_up.complete(req), TransportError);
    CHECK(hopeless->calls == 3);

    auto rejected = std::make_shared<Flaky>(99, "provider");
    RetryingBackend no_retry(rejected, 2, std::chrono::milliseconds(0));
    CHECK_THROWS_AS(no_retry.complete(req), ProviderError);
    CHECK(rejected->calls == 1);
}

TEST_CASE("usage meters accumulate per role", "[llm]") {
    UsageMeter meter;
    meter.add(RoleTag::extract, LlmResponse{"x", TokenCount{10}, TokenCount{2}, 0});
    meter.add(RoleTag::extract, LlmResponse{"y", TokenCount{5}, TokenCount{1}, 0});
    meter.add(RoleTag::manager, LlmResponse{"z", TokenCount{7}, TokenCount{3}, 0});
    const auto snap = meter.snapshot();
    CHECK(snap[static_cast<std::size_t>(RoleTag::extract)].calls == 2);
    CHECK(snap[static_cast<std::size_t>(RoleTag::extract)].prompt_tokens == 15);
    CHECK(snap[static_cast<std::size_t>(RoleTag::manager)].completion_tokens == 3);
    CHECK(meter.total_calls() == 3);
}

namespace {

struct TestServer {
    httplib::Server srv;
    std::thread thread;
    int port = 0;

    std::string url(const std::string& prefix = {}) {
        return "http://127.0.0.1:" + std::to_string(port) + prefix;
    }

    void start() {
        port = srv.bind_to_any_port("127.0.0.1");
        REQUIRE(port > 0);
        thread = std::thread([this] { srv.listen_after_bind(); });
        srv.wait_until_ready();
    }

    ~TestServer() {
        srv.stop();
        if (thread.joinable()) thread.join();
    }
};

}  // namespace

TEST_CASE("http backend speaks the chat-completions wire shape", "[llm]") {
    TestServer ts_srv;
    std::string seen_auth, seen_path, seen_model;
    ts_srv.srv.Post("/v1/chat/completions",
                    [&](const httplib::Request& req, httplib::Response& res) {
                        seen_auth = req.get_header_value("Authorization");
                        seen_path = req.path;
                        const auto body = nlohmann::json::parse(req.body);
                        seen_model = body["model"];
                        const nlohmann::json reply{
                            {"choices",
                             nlohmann::json::array(
                                 {nlohmann::json{{"message",
                                                  nlohmann::json{{"role", "assistant"},
                                                                 {"content", "server says hi"}}}}})},
                            {"usage",
                             nlohmann::json{{"prompt_tokens", 42}, {"completion_tokens", 7}}}};
                        res.set_content(reply.dump(), "application/json");
                    });
    ts_srv.start();

    HttpBackend be(ts_srv.url("/v1"), "secret-key");
    CHECK(be.name() == "http");
    LlmRequest req;
    req.model = "test-model";
    req.system = "sys";
    req.user = "hi";
    const LlmResponse resp = be.complete(req);
    CHECK(resp.text == "server says hi");
    CHECK(resp.prompt_tokens.value == 42);
    CHECK(resp.completion_tokens.value == 7);
    CHECK(seen_auth == "Bearer secret-key");
    CHECK(seen_path == "/v1/chat/completions");
    CHECK(seen_model == "test-model");
}

TEST_CASE("http backend falls back to local token counts", "[llm]") {
    TestServer ts_srv;
    ts_srv.srv.Post("/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        const nlohmann::json reply{
            {"choices",
             nlohmann::json::array({nlohmann::json{
                 {"message", nlohmann::json{{"content", "three token reply"}}}}})}};
        res.set_content(reply.dump(), "application/json");
    });
    ts_srv.start();

    HttpBackend be(ts_srv.url(), "k");
    LlmRequest req;
    req.system = "one two";  // 2 tokens
    req.user = "three";      // 1 token
    const LlmResponse resp = be.complete(req);
    CHECK(resp.text == "three token reply");
    CHECK(resp.prompt_tokens.value == 3);
    CHECK(resp.completion_tokens.value == 3);
}

TEST_CASE("http status codes map to the right error kinds", "[llm]") {
    TestServer ts_srv;
    ts_srv.srv.Post("/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        const auto body = nlohmann::json::parse(req.body);
        const std::string user = body["messages"][1]["content"];
        if (user == "overloaded") {
            res.status = 429;
        } else if (user == "broken") {
            res.status = 500;
        } else if (user == "forbidden") {
            res.status = 403;
            res.set_content("denied", "text/plain");
        } else {
            res.status = 200;
            res.set_content("{not json", "application/json");
        }
    });
    ts_srv.start();

    HttpBackend be(ts_srv.url(), "k");
    LlmRequest req;
    req.user = "overloaded";
    CHECK_THROWS_AS(be.complete(req), TransportError);
    req.user = "broken";
    CHECK_THROWS_AS(be.complete(req), TransportError);
    req.user = "forbidden";
    try {
        be.complete(req);
        FAIL("expected a provider rejection");
    } catch (const ProviderError& e) {
        CHECK(e.status == 403);
        CHECK(std::string(e.what()).find("denied") != std::string::npos);
    }
    req.user = "garbled";
    CHECK_THROWS_AS(be.complete(req), ProviderError);

    // Nothing listening at all: a transport-level failure.
    HttpBackend unreachable("http://127.0.0.1:1", "k");
    CHECK_THROWS_AS(unreachable.complete(req), TransportError);
}

TEST_CASE("http backend validates its base url and probes reachability", "[llm]") {
    CHECK_THROWS_AS(HttpBackend("127.0.0.1:8000", "k"), ConfigError);
    CHECK_THROWS_AS(HttpBackend("http://", "k"), ConfigError);

    TestServer ts_srv;
    ts_srv.srv.Get("/models", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("{}", "application/json");
    });
    ts_srv.start();
    HttpBackend be(ts_srv.url(), "k");
    CHECK(be.probe());
    HttpBackend dead("http://127.0.0.1:1", "k");
    CHECK_FALSE(dead.probe());
}

TEST_CASE("backend construction validates its config", "[llm]") {
    ts::TempDir dir;
    const std::string script = dir.str("s.jsonl");
    ts::write_file(script, "\"r\"\n");

    BackendConfig cfg;
    cfg.kind = "scripted";
    CHECK_THROWS_AS(build_backend(cfg), ConfigError);  // no script path
    cfg.script_path = script;
    CHECK(build_backend(cfg)->name() == "scripted");

    cfg = BackendConfig{};
    cfg.kind = "http";
    CHECK_THROWS_AS(build_backend(cfg), ConfigError);  // no url
    cfg.base_url = "http://127.0.0.1:9";
    CHECK_THROWS_AS(build_backend(cfg), ConfigError);  // no key
    cfg.api_key = "k";
    CHECK(build_backend(cfg)->name() == "http");  // retry wrapper forwards the name

    cfg = BackendConfig{};
    cfg.kind = "cassette";
    CHECK_THROWS_AS(build_backend(cfg), ConfigError);  // no cassette path
    cfg.cassette_path = dir.str("t.jsonl");
    cfg.cassette_mode = "record";
    CHECK_THROWS_AS(build_backend(cfg), ConfigError);  // record needs a source
    cfg.script_path = script;
    CHECK(build_backend(cfg)->name() == "cassette-record");
    cfg.cassette_mode = "replay";
    CHECK(build_backend(cfg)->name() == "cassette-replay");
    cfg.cassette_mode = "sideways";
    CHECK_THROWS_AS(build_backend(cfg), ConfigError);

    cfg = BackendConfig{};
    cfg.kind = "telepathy";
    CHECK_THROWS_AS(build_backend(cfg), ConfigError);
}
