#pragma once

// The five agent drivers: Planner, the three Worker phases (Extract, Infer,
// Refine), and the Manager. Each renders its template, calls the model, and
// parses the reply into a typed result.
//
// Malformed replies are retried up to retry_max times; each re-ask appends a
// corrective line to the prompt. After exhaustion every driver falls back to
// a conservative no-op-ish result and reports ok=false so the caller can log
// a warning:
//
//   plan       → the query verbatim as the single sub-question
//   extract    → empty delta (facts unchanged)
//   infer      → empty delta
//   refine     → keep the previous question set
//   synthesize → the raw model text becomes the answer
//
// Drivers never touch a Memory object; they consume its serialized text and
// produce string deltas. Applying deltas (append/prune/replace) is the
// pipeline's job, which keeps mutation and trace-snapshot points in one
// place.

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "coma/llm_client.hpp"
#include "coma/memory_io.hpp"
#include "coma/prompts.hpp"

namespace coma {

inline constexpr std::string_view kCorrectiveLine =
    "Your previous reply was not parseable; respond with the keys only";

struct AgentConfig {
    const PromptLibrary* prompts = nullptr;
    LlmBackend* llm = nullptr;
    std::string model;  // already resolved for the role being driven
    double temperature = 0.0;
    TokenCount max_output_tokens{8192};
    int retry_max = 2;          // parse-failure re-asks (total calls ≤ retry_max + 1)
    std::size_t question_cap = 25;
};

/// One physical LLM call made while driving an agent.
struct AgentAttempt {
    std::string prompt;  // full user text actually sent
    LlmResponse response;
    bool parse_ok = false;
};

struct AgentCallResult {
    std::vector<AgentAttempt> attempts;  // ≥ 1
    bool ok = false;                     // some attempt parsed
    MemoryDelta delta;                   // from the successful attempt, else empty

    const AgentAttempt& last() const { return attempts.back(); }
};

/// Render the role's template and call the model until a reply parses or
/// retries run out. Every physical call is kept in `attempts`, in order.
/// With empty `expect_keys` the reply is free text: the first attempt always
/// "parses" and its raw text is the payload.
inline AgentCallResult call_agent(const AgentConfig& cfg, RoleTag role,
                                  std::string_view template_name, const PromptVars& vars,
                                  const std::set<std::string>& expect_keys) {
    const std::string base_prompt = cfg.prompts->render(template_name, vars);

    AgentCallResult result;
    const int max_attempts = cfg.retry_max + 1;
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        AgentAttempt a;
        a.prompt = base_prompt;
        if (attempt > 0) {
            a.prompt += "\n\n";
            a.prompt += kCorrectiveLine;
        }

        LlmRequest req;
        req.model = cfg.model;
        req.user = a.prompt;
        req.temperature = cfg.temperature;
        req.max_output_tokens = cfg.max_output_tokens;
        req.role_tag = role;
        a.response = cfg.llm->complete(req);

        if (expect_keys.empty()) {
            a.parse_ok = true;
            result.attempts.push_back(std::move(a));
            result.ok = true;
            return result;
        }

        auto delta = parse_memory_delta(a.response.text, expect_keys);
        a.parse_ok = delta.has_value();
        result.attempts.push_back(std::move(a));
        if (delta) {
            result.ok = true;
            result.delta = std::move(*delta);
            return result;
        }
    }
    return result;  // ok=false, delta empty
}

namespace detail {

inline std::vector<std::string> capped(std::vector<std::string> items, std::size_t cap) {
    if (items.size() > cap) items.resize(cap);
    return items;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Typed drivers

struct PlanResult {
    std::vector<std::string> questions;  // capped; fallback: {query}
    AgentCallResult call;
};

inline PlanResult plan(const AgentConfig& cfg, const std::string& query) {
    PlanResult r;
    r.call = call_agent(cfg, RoleTag::planner, "planner", PromptVars{{"query", query}},
                        {"questions"});
    if (r.call.ok) {
        r.questions = detail::capped(r.call.delta["questions"], cfg.question_cap);
    } else {
        r.questions = {query};  // degenerate plan: chase the query itself
    }
    return r;
}

struct ExtractResult {
    std::vector<std::string> facts;  // candidate gathered facts; fallback: empty
    AgentCallResult call;
};

inline ExtractResult extract(const AgentConfig& cfg, const std::string& chunk_text,
                             const std::string& memory_text, const std::string& query) {
    ExtractResult r;
    r.call = call_agent(
        cfg, RoleTag::extract, "extract",
        PromptVars{{"query", query}, {"chunk", chunk_text}, {"memory", memory_text}},
        {"gathered_facts"});
    if (r.call.ok) r.facts = r.call.delta["gathered_facts"];
    return r;
}

struct InferResult {
    std::vector<std::string> facts;  // new inferred claims; fallback: empty
    AgentCallResult call;
};

inline InferResult infer(const AgentConfig& cfg, const std::string& memory_text,
                         const std::string& query) {
    InferResult r;
    r.call = call_agent(cfg, RoleTag::infer, "infer",
                        PromptVars{{"query", query}, {"memory", memory_text}},
                        {"inferred_facts"});
    if (r.call.ok) r.facts = r.call.delta["inferred_facts"];
    return r;
}

struct RefineResult {
    // The full replacement question set; nullopt = keep the previous set
    // (parse-failure fallback). An empty list is a legal replacement.
    std::optional<std::vector<std::string>> questions;
    AgentCallResult call;
};

inline RefineResult refine(const AgentConfig& cfg, const std::string& memory_text,
                           const std::string& query) {
    RefineResult r;
    r.call = call_agent(cfg, RoleTag::refine, "refine",
                        PromptVars{{"query", query}, {"memory", memory_text}},
                        {"questions"});
    if (r.call.ok) r.questions = detail::capped(r.call.delta["questions"], cfg.question_cap);
    return r;
}

struct SynthesizeResult {
    std::string answer;  // parsed answer, or raw model text as fallback
    AgentCallResult call;
};

inline SynthesizeResult synthesize(const AgentConfig& cfg, const std::string& memory_text,
                                   const std::string& query, const std::string& task_inst) {
    SynthesizeResult r;
    r.call = call_agent(cfg, RoleTag::manager, "manager",
                        PromptVars{{"query", query},
                                   {"memory", memory_text},
                                   {"TASK_SPECIFIC_INST", task_inst}},
                        {"answer"});
    const auto& items = r.call.delta["answer"];
    if (r.call.ok && !items.empty() && !items.front().empty()) {
        r.answer = items.front();
    } else {
        r.answer = r.call.last().response.text;  // raw text still gets scored
        r.call.ok = false;
    }
    return r;
}

// ---------------------------------------------------------------------------
// Baseline drivers (free-text replies, no structured parsing)

struct FreeTextResult {
    std::string text;
    AgentCallResult call;
};

/// Chain-style baseline worker: reads the previous rolling summary plus one
/// chunk, emits the next summary.
inline FreeTextResult coa_worker(const AgentConfig& cfg, const std::string& query,
                                 const std::string& prev_summary, const std::string& chunk_text) {
    FreeTextResult r;
    r.call = call_agent(
        cfg, RoleTag::coa_worker, "coa_worker",
        PromptVars{{"query", query}, {"summary", prev_summary}, {"chunk", chunk_text}}, {});
    r.text = r.call.last().response.text;
    return r;
}

inline FreeTextResult coa_manager(const AgentConfig& cfg, const std::string& query,
                                  const std::string& summary, const std::string& task_inst) {
    FreeTextResult r;
    r.call = call_agent(cfg, RoleTag::manager, "coa_manager",
                        PromptVars{{"query", query},
                                   {"summary", summary},
                                   {"TASK_SPECIFIC_INST", task_inst}},
                        {});
    r.text = r.call.last().response.text;
    return r;
}

/// Truncated-context baseline: one shot over the (possibly truncated)
/// document.
inline FreeTextResult tc_direct(const AgentConfig& cfg, const std::string& query,
                                const std::string& document, const std::string& task_inst) {
    FreeTextResult r;
    r.call = call_agent(cfg, RoleTag::tc_direct, "tc_direct",
                        PromptVars{{"query", query},
                                   {"document", document},
                                   {"TASK_SPECIFIC_INST", task_inst}},
                        {});
    r.text = r.call.last().response.text;
    return r;
}

}  // namespace coma
