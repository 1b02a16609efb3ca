#pragma once

// Chat-completion provider abstraction.
//
// Three interchangeable backends:
//   * HttpBackend      — live endpoint speaking the de-facto open chat API
//                        (POST {base}/chat/completions, bearer auth).
//   * ScriptedBackend  — ordered reply queue for deterministic tests.
//   * Cassette         — record/replay of (fingerprint, response) pairs.
//
// RetryingBackend wraps any of them with bounded exponential backoff on
// transient failures. All backends are safe to share across threads; each
// call is independent.

#include <array>
#include <chrono>
#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "coma/errors.hpp"
#include "coma/sha256.hpp"
#include "coma/tokenizer.hpp"

namespace coma {

enum class RoleTag {
    planner,
    extract,
    infer,
    refine,
    manager,
    coa_worker,
    tc_direct,
};

inline constexpr std::size_t kRoleCount = 7;

inline constexpr std::array<std::string_view, kRoleCount> kRoleNames{
    "planner", "extract", "infer", "refine", "manager", "coa_worker", "tc_direct"};

inline std::string_view to_string(RoleTag tag) {
    return kRoleNames.at(static_cast<std::size_t>(tag));
}

inline std::optional<RoleTag> role_from_string(std::string_view name) {
    for (std::size_t i = 0; i < kRoleNames.size(); ++i) {
        if (kRoleNames[i] == name) return static_cast<RoleTag>(i);
    }
    return std::nullopt;
}

struct LlmRequest {
    std::string model;
    std::string system;
    std::string user;
    double temperature = 0.0;
    TokenCount max_output_tokens{8192};
    RoleTag role_tag = RoleTag::planner;
};

struct LlmResponse {
    std::string text;
    TokenCount prompt_tokens{0};
    TokenCount completion_tokens{0};
    std::uint64_t latency_ms = 0;

    bool operator==(const LlmResponse&) const = default;
};

/// Identity of a request for cassette matching: role, model, and the exact
/// user prompt. System text and sampling knobs are excluded on purpose —
/// they are constant within a run and would make cassettes needlessly
/// brittle across cosmetic config edits.
inline std::string request_fingerprint(const LlmRequest& req) {
    std::string buf;
    buf.reserve(req.user.size() + req.model.size() + 16);
    buf.append(to_string(req.role_tag));
    buf.push_back('\x1f');
    buf.append(req.model);
    buf.push_back('\x1f');
    buf.append(req.user);
    return sha256_hex(buf);
}

class LlmBackend {
public:
    virtual ~LlmBackend() = default;
    virtual LlmResponse complete(const LlmRequest& req) = 0;
    virtual std::string_view name() const = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend

/// Pops replies off a fixed queue in order. Token counts are computed with a
/// deterministic tokenizer so scripted runs still exercise accounting. When
/// `cycle` is set the queue wraps around instead of exhausting; otherwise a
/// call past the end throws ScriptExhausted (a scripted test asking for more
/// replies than it staged is a bug in the test).
class ScriptedBackend final : public LlmBackend {
public:
    ScriptedBackend() = default;
    explicit ScriptedBackend(std::vector<std::string> replies, bool cycle = false,
                             TokenizerId tok = std::string(kDefaultTokenizer))
        : replies_(std::move(replies)), cycle_(cycle), tok_(std::move(tok)) {}

    void push(std::string reply) {
        std::lock_guard lock(mu_);
        replies_.push_back(std::move(reply));
    }

    std::size_t consumed() const {
        std::lock_guard lock(mu_);
        return next_;
    }

    LlmResponse complete(const LlmRequest& req) override {
        std::string text;
        {
            std::lock_guard lock(mu_);
            if (next_ >= replies_.size()) {
                if (!cycle_ || replies_.empty()) {
                    throw ScriptExhausted("scripted backend exhausted after " +
                                          std::to_string(replies_.size()) + " replies");
                }
                next_ = 0;
            }
            text = replies_[next_++];
        }
        LlmResponse resp;
        resp.text = std::move(text);
        resp.prompt_tokens = count_tokens(req.system, tok_) + count_tokens(req.user, tok_);
        resp.completion_tokens = count_tokens(resp.text, tok_);
        resp.latency_ms = 0;
        return resp;
    }

    std::string_view name() const override { return "scripted"; }

    /// Load replies from a JSON-lines file: each line either a bare JSON
    /// string or an object {"text": "..."}.
    static std::vector<std::string> load_script(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw ConfigError("cannot open script file: " + path);
        std::vector<std::string> replies;
        std::string line;
        std::size_t lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            auto j = nlohmann::json::parse(line, nullptr, false);
            if (j.is_discarded()) {
                throw ConfigError("script file " + path + ": bad JSON at line " +
                                  std::to_string(lineno));
            }
            if (j.is_string()) {
                replies.push_back(j.get<std::string>());
            } else if (j.is_object() && j.contains("text")) {
                replies.push_back(j["text"].get<std::string>());
            } else {
                throw ConfigError("script file " + path + ": line " + std::to_string(lineno) +
                                  " is neither a string nor {\"text\": ...}");
            }
        }
        return replies;
    }

private:
    mutable std::mutex mu_;
    std::vector<std::string> replies_;
    std::size_t next_ = 0;
    bool cycle_ = false;
    TokenizerId tok_ = std::string(kDefaultTokenizer);
};

// ---------------------------------------------------------------------------
// Cassette record / replay

struct CassetteEntry {
    std::string fingerprint;
    LlmResponse response;

    bool operator==(const CassetteEntry&) const = default;
};

inline nlohmann::json to_json(const LlmResponse& r) {
    return nlohmann::json{{"text", r.text},
                          {"prompt_tokens", r.prompt_tokens.value},
                          {"completion_tokens", r.completion_tokens.value},
                          {"latency_ms", r.latency_ms}};
}

inline LlmResponse response_from_json(const nlohmann::json& j) {
    LlmResponse r;
    r.text = j.at("text").get<std::string>();
    r.prompt_tokens = TokenCount{j.at("prompt_tokens").get<std::uint64_t>()};
    r.completion_tokens = TokenCount{j.at("completion_tokens").get<std::uint64_t>()};
    r.latency_ms = j.at("latency_ms").get<std::uint64_t>();
    return r;
}

inline std::vector<CassetteEntry> load_cassette(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open cassette: " + path);
    std::vector<CassetteEntry> entries;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("fingerprint") ||
            !j.contains("response")) {
            throw ConfigError("cassette " + path + ": malformed record at line " +
                              std::to_string(lineno));
        }
        entries.push_back(CassetteEntry{j["fingerprint"].get<std::string>(),
                                        response_from_json(j["response"])});
    }
    return entries;
}

/// Wraps another backend; every response is appended to the cassette file as
/// it is produced so an interrupted recording still leaves a usable prefix.
class CassetteRecorder final : public LlmBackend {
public:
    CassetteRecorder(std::shared_ptr<LlmBackend> inner, std::string path)
        : inner_(std::move(inner)), path_(std::move(path)) {
        std::ofstream out(path_, std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot create cassette: " + path_);
    }

    LlmResponse complete(const LlmRequest& req) override {
        LlmResponse resp = inner_->complete(req);
        nlohmann::json rec{{"fingerprint", request_fingerprint(req)},
                           {"response", to_json(resp)}};
        std::lock_guard lock(mu_);
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        if (!out) throw ConfigError("cannot append to cassette: " + path_);
        out << rec.dump() << '\n';
        return resp;
    }

    std::string_view name() const override { return "cassette-record"; }

private:
    std::shared_ptr<LlmBackend> inner_;
    std::string path_;
    std::mutex mu_;
};

/// Plays a cassette back in recorded order. Any divergence — a request whose
/// fingerprint differs from the next recorded one, or running off the end —
/// is fatal: the run being replayed is no longer the run that was recorded.
class CassetteReplayer final : public LlmBackend {
public:
    explicit CassetteReplayer(const std::string& path)
        : entries_(load_cassette(path)), path_(path) {}
    explicit CassetteReplayer(std::vector<CassetteEntry> entries)
        : entries_(std::move(entries)) {}

    LlmResponse complete(const LlmRequest& req) override {
        const std::string fp = request_fingerprint(req);
        std::lock_guard lock(mu_);
        if (next_ >= entries_.size()) {
            throw CassetteMismatch("cassette " + path_ + " exhausted at call " +
                                   std::to_string(next_ + 1));
        }
        const CassetteEntry& e = entries_[next_];
        if (e.fingerprint != fp) {
            throw CassetteMismatch("cassette " + path_ + " entry " + std::to_string(next_ + 1) +
                                   ": recorded fingerprint " + e.fingerprint.substr(0, 12) +
                                   "… does not match request " + fp.substr(0, 12) + "… (role " +
                                   std::string(to_string(req.role_tag)) + ")");
        }
        ++next_;
        return e.response;
    }

    std::string_view name() const override { return "cassette-replay"; }

private:
    std::vector<CassetteEntry> entries_;
    std::size_t next_ = 0;
    std::string path_;
    std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Live HTTP backend

/// Talks to any endpoint implementing the common chat-completions wire shape:
/// request {model, messages[{role,content}], temperature, max_tokens},
/// response {choices[0].message.content, usage{prompt_tokens,
/// completion_tokens}}. TLS endpoints require the TU to be built with
/// CPPHTTPLIB_OPENSSL_SUPPORT; plain http works out of the box.
class HttpBackend final : public LlmBackend {
public:
    HttpBackend(std::string base_url, std::string api_key,
                TokenizerId fallback_tok = std::string(kDefaultTokenizer))
        : api_key_(std::move(api_key)), tok_(std::move(fallback_tok)) {
        split_base(base_url);
    }

    LlmResponse complete(const LlmRequest& req) override {
        nlohmann::json body{
            {"model", req.model},
            {"messages",
             nlohmann::json::array({nlohmann::json{{"role", "system"}, {"content", req.system}},
                                    nlohmann::json{{"role", "user"}, {"content", req.user}}})},
            {"temperature", req.temperature},
            {"max_tokens", req.max_output_tokens.value},
        };

        httplib::Client client(origin_);
        client.set_connection_timeout(30, 0);
        client.set_read_timeout(600, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

        const auto t0 = std::chrono::steady_clock::now();
        httplib::Result res =
            client.Post(path_prefix_ + "/chat/completions", headers, body.dump(),
                        "application/json");
        const auto t1 = std::chrono::steady_clock::now();

        if (!res) {
            throw TransportError("request to " + origin_ + " failed: " +
                                 httplib::to_string(res.error()));
        }
        if (res->status == 429 || res->status >= 500) {
            throw TransportError("endpoint returned status " + std::to_string(res->status));
        }
        if (res->status < 200 || res->status >= 300) {
            throw ProviderError(res->status, res->body.substr(0, 512));
        }

        auto j = nlohmann::json::parse(res->body, nullptr, false);
        if (j.is_discarded()) throw ProviderError(res->status, "unparseable response body");
        LlmResponse out;
        try {
            out.text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw ProviderError(res->status, std::string("unexpected response shape: ") + e.what());
        }
        if (j.contains("usage") && j["usage"].is_object()) {
            const auto& u = j["usage"];
            out.prompt_tokens = TokenCount{u.value("prompt_tokens", std::uint64_t{0})};
            out.completion_tokens = TokenCount{u.value("completion_tokens", std::uint64_t{0})};
        }
        if (out.prompt_tokens.value == 0) {
            out.prompt_tokens = count_tokens(req.system, tok_) + count_tokens(req.user, tok_);
        }
        if (out.completion_tokens.value == 0) {
            out.completion_tokens = count_tokens(out.text, tok_);
        }
        out.latency_ms = static_cast<std::uint64_t>(
            std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count());
        return out;
    }

    /// Cheap reachability probe used by eager_check: GET {base}/models, any
    /// HTTP answer at all counts as reachable.
    bool probe() {
        httplib::Client client(origin_);
        client.set_connection_timeout(10, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        auto res = client.Get(path_prefix_ + "/models", headers);
        return static_cast<bool>(res);
    }

    std::string_view name() const override { return "http"; }

private:
    void split_base(const std::string& base_url) {
        const auto scheme_end = base_url.find("://");
        if (scheme_end == std::string::npos) {
            throw ConfigError("malformed base URL (missing scheme): " + base_url);
        }
        const auto path_start = base_url.find('/', scheme_end + 3);
        if (path_start == std::string::npos) {
            origin_ = base_url;
        } else {
            origin_ = base_url.substr(0, path_start);
            path_prefix_ = base_url.substr(path_start);
            while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
        }
        if (origin_.size() == scheme_end + 3) {
            throw ConfigError("malformed base URL (empty host): " + base_url);
        }
    }

    std::string origin_;       // scheme://host[:port]
    std::string path_prefix_;  // optional /v1-style prefix, no trailing slash
    std::string api_key_;
    TokenizerId tok_;
};

// ---------------------------------------------------------------------------
// Retry wrapper

/// Retries transient failures (connection errors, 429/5xx mapped to
/// TransportError) with exponential backoff: base, 2·base, 4·base, …
/// Definitive failures (ProviderError, CassetteMismatch, ScriptExhausted)
/// pass through untouched. The caller sees exactly one response per logical
/// call — retries happen entirely inside this wrapper.
class RetryingBackend final : public LlmBackend {
public:
    RetryingBackend(std::shared_ptr<LlmBackend> inner, int max_retries = 2,
                    std::chrono::milliseconds base_delay = std::chrono::milliseconds(200))
        : inner_(std::move(inner)), max_retries_(max_retries), base_delay_(base_delay) {}

    LlmResponse complete(const LlmRequest& req) override {
        std::chrono::milliseconds delay = base_delay_;
        for (int attempt = 0;; ++attempt) {
            try {
                return inner_->complete(req);
            } catch (const TransportError&) {
                if (attempt >= max_retries_) throw;
                if (delay.count() > 0) std::this_thread::sleep_for(delay);
                delay *= 2;
            }
        }
    }

    std::string_view name() const override { return inner_->name(); }

    int attempts_allowed() const { return max_retries_ + 1; }

private:
    std::shared_ptr<LlmBackend> inner_;
    int max_retries_;
    std::chrono::milliseconds base_delay_;
};

// ---------------------------------------------------------------------------
// Usage accounting

struct RoleUsage {
    std::uint64_t calls = 0;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;

    bool operator==(const RoleUsage&) const = default;
};

/// Per-role call/token totals. Accumulation is guarded so concurrent
/// pipeline runs may share one meter.
class UsageMeter {
public:
    void add(RoleTag role, const LlmResponse& resp) {
        std::lock_guard lock(mu_);
        RoleUsage& u = usage_[static_cast<std::size_t>(role)];
        u.calls += 1;
        u.prompt_tokens += resp.prompt_tokens.value;
        u.completion_tokens += resp.completion_tokens.value;
    }

    std::array<RoleUsage, kRoleCount> snapshot() const {
        std::lock_guard lock(mu_);
        return usage_;
    }

    std::uint64_t total_calls() const {
        std::lock_guard lock(mu_);
        std::uint64_t n = 0;
        for (const auto& u : usage_) n += u.calls;
        return n;
    }

private:
    mutable std::mutex mu_;
    std::array<RoleUsage, kRoleCount> usage_{};
};

// ---------------------------------------------------------------------------
// Backend construction

struct BackendConfig {
    std::string kind = "scripted";  // http | scripted | cassette
    // http
    std::string base_url;
    std::string api_key;
    bool eager_check = false;
    // scripted
    std::string script_path;
    bool script_cycle = false;
    // cassette
    std::string cassette_path;
    std::string cassette_mode = "replay";  // record | replay
    // retry policy (applies to http; harmless elsewhere)
    int retry_max = 2;
    int retry_base_delay_ms = 200;
    // token accounting for backends that count locally
    std::string tokenizer = std::string(kDefaultTokenizer);
};

/// Build a ready-to-use backend from config. Cassette record mode wraps the
/// live endpoint when one is configured, otherwise a scripted source — that
/// is how deterministic fixtures get recorded without network access.
inline std::shared_ptr<LlmBackend> build_backend(const BackendConfig& cfg) {
    if (cfg.kind == "scripted") {
        if (cfg.script_path.empty()) {
            throw ConfigError("scripted backend requires a script file (backend.script)");
        }
        return std::make_shared<ScriptedBackend>(ScriptedBackend::load_script(cfg.script_path),
                                                 cfg.script_cycle, cfg.tokenizer);
    }
    if (cfg.kind == "http") {
        if (cfg.base_url.empty()) {
            throw ConfigError("http backend requires a base URL (LLM_BASE_URL or config)");
        }
        if (cfg.api_key.empty()) {
            throw ConfigError("http backend requires an API key (LLM_API_KEY)");
        }
        auto http = std::make_shared<HttpBackend>(cfg.base_url, cfg.api_key, cfg.tokenizer);
        if (cfg.eager_check && !http->probe()) {
            throw ConfigError("endpoint " + cfg.base_url + " is unreachable");
        }
        return std::make_shared<RetryingBackend>(
            std::move(http), cfg.retry_max, std::chrono::milliseconds(cfg.retry_base_delay_ms));
    }
    if (cfg.kind == "cassette") {
        if (cfg.cassette_path.empty()) {
            throw ConfigError("cassette backend requires a cassette path");
        }
        if (cfg.cassette_mode == "replay") {
            return std::make_shared<CassetteReplayer>(cfg.cassette_path);
        }
        if (cfg.cassette_mode == "record") {
            std::shared_ptr<LlmBackend> inner;
            if (!cfg.base_url.empty() && !cfg.api_key.empty()) {
                inner = std::make_shared<RetryingBackend>(
                    std::make_shared<HttpBackend>(cfg.base_url, cfg.api_key, cfg.tokenizer),
                    cfg.retry_max, std::chrono::milliseconds(cfg.retry_base_delay_ms));
            } else if (!cfg.script_path.empty()) {
                inner = std::make_shared<ScriptedBackend>(
                    ScriptedBackend::load_script(cfg.script_path), cfg.script_cycle,
                    cfg.tokenizer);
            } else {
                throw ConfigError(
                    "cassette record mode needs a source: http credentials or a script file");
            }
            return std::make_shared<CassetteRecorder>(std::move(inner), cfg.cassette_path);
        }
        throw ConfigError("cassette mode must be record or replay, got: " + cfg.cassette_mode);
    }
    throw ConfigError("unknown backend kind: " + cfg.kind +
                      " (expected http, scripted, or cassette)");
}

}  // namespace coma
