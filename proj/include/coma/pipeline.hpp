#pragma once

// Orchestration of the three methods over one (query, document) pair:
//
//   run_coma — plan once; per chunk: extract → append → prune → infer →
//              append → refine → replace; synthesize once.  3L+2 calls.
//   run_coa  — rolling free-form summary through the chunks, manager answers
//              from the final summary.  L+1 calls.
//   run_tc   — middle-truncate the document, answer in one shot.  1 call.
//
// Call-count formulas hold exactly when every reply parses on the first
// attempt; parse retries add physical calls, all of which are recorded.
//
// Every physical LLM call becomes one exchange record in the trace. The
// record carries the working-state snapshot taken after the call's effects
// were applied (structured memory for coma, rolling summary for coa): failed
// attempts carry the unchanged state. A fatal backend error mid-run appends
// an error record and, when a trace path was given, persists the partial
// trace before rethrowing.

#include <chrono>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coma/agents.hpp"
#include "coma/chunking.hpp"
#include "coma/memory.hpp"
#include "coma/memory_io.hpp"
#include "coma/trace.hpp"

namespace coma {

inline constexpr std::string_view kTaskInstFreeform = "Answer concisely.";
inline constexpr std::string_view kTaskInstMultipleChoice =
    "Answer with the text of exactly one of the provided options.";

struct RunConfig {
    std::string method = "coma";  // coma | coa | tc
    TokenCount chunk_size{64000};
    MemoryBudget budget = MemoryBudget::from_tokens(TokenCount{8000}, TokenCount{64000});
    TokenCount tc_limit{128000};
    std::string default_model = "gpt-4.1";
    std::map<std::string, std::string> role_models;  // role name -> model override
    TokenizerId tokenizer = TokenizerId(kDefaultTokenizer);
    double temperature = 0.0;
    TokenCount max_output_tokens{8192};
    int retry_max = 2;
    std::size_t question_cap = 25;
    std::string task_inst;    // empty → free-form default
    std::string prompt_dir;   // optional template override directory

    std::string model_for(RoleTag role) const {
        auto it = role_models.find(std::string(to_string(role)));
        return it != role_models.end() ? it->second : default_model;
    }

    std::string effective_task_inst() const {
        return task_inst.empty() ? std::string(kTaskInstFreeform) : task_inst;
    }

    void validate() const {
        if (method != "coma" && method != "coa" && method != "tc") {
            throw ConfigError("unknown method: " + method + " (expected coma, coa, or tc)");
        }
        if (chunk_size.value == 0) throw ConfigError("chunk_size must be positive");
        if (budget.max_tokens > chunk_size) {
            throw ConfigError("memory budget (" + std::to_string(budget.max_tokens.value) +
                              ") must not exceed chunk_size (" +
                              std::to_string(chunk_size.value) + ")");
        }
        if (tc_limit.value == 0) throw ConfigError("tc_limit must be positive");
        if (retry_max < 0) throw ConfigError("retry_max must be >= 0");
        if (question_cap == 0) throw ConfigError("question_cap must be positive");
        tokenizer_check();
    }

    nlohmann::json to_json() const {
        return nlohmann::json{{"method", method},
                              {"chunk_size", chunk_size.value},
                              {"budget_tokens", budget.max_tokens.value},
                              {"tc_limit", tc_limit.value},
                              {"default_model", default_model},
                              {"role_models", role_models},
                              {"tokenizer", tokenizer},
                              {"temperature", temperature},
                              {"max_output_tokens", max_output_tokens.value},
                              {"retry_max", retry_max},
                              {"question_cap", question_cap},
                              {"task_inst", effective_task_inst()},
                              {"prompt_dir", prompt_dir}};
    }

private:
    void tokenizer_check() const { (void)coma::tokenizer(tokenizer); }
};

struct RunResult {
    std::string answer;
    RunTrace trace;
};

namespace detail {

inline AgentConfig agent_cfg(const RunConfig& cfg, const PromptLibrary& lib, LlmBackend& llm,
                             RoleTag role) {
    AgentConfig a;
    a.prompts = &lib;
    a.llm = &llm;
    a.model = cfg.model_for(role);
    a.temperature = cfg.temperature;
    a.max_output_tokens = cfg.max_output_tokens;
    a.retry_max = cfg.retry_max;
    a.question_cap = cfg.question_cap;
    return a;
}

inline PromptLibrary load_prompts(const RunConfig& cfg) {
    PromptLibrary lib = PromptLibrary::builtin();
    if (!cfg.prompt_dir.empty()) lib.load_dir(cfg.prompt_dir);
    return lib;
}

inline nlohmann::json config_record(const RunConfig& cfg, const PromptLibrary& lib,
                                    const LlmBackend& llm) {
    nlohmann::json rec = cfg.to_json();
    rec["type"] = "config";
    rec["backend"] = std::string(llm.name());
    nlohmann::json digests = nlohmann::json::object();
    for (const auto name : kPromptNames) digests[std::string(name)] = lib.digest(name);
    rec["prompt_digests"] = digests;
    return rec;
}

/// Record the attempts of one agent call. All attempts but the final one
/// carry `state_before`; the final attempt carries `state_after` (the
/// phase's effects applied) plus the parsed delta when there is one.
inline void record_call(RunTrace& trace, RoleTag role, int chunk, const std::string& model,
                        const AgentCallResult& call, const std::string& state_before,
                        const std::string& state_after) {
    for (std::size_t i = 0; i < call.attempts.size(); ++i) {
        const AgentAttempt& a = call.attempts[i];
        const bool last = (i + 1 == call.attempts.size());
        const std::string& state = last ? state_after : state_before;
        nlohmann::json rec{
            {"type", "exchange"},
            {"role", std::string(to_string(role))},
            {"chunk", chunk},
            {"model", model},
            {"prompt", a.prompt},
            {"reply", a.response.text},
            {"prompt_tokens", a.response.prompt_tokens.value},
            {"completion_tokens", a.response.completion_tokens.value},
            {"latency_ms", a.response.latency_ms},
            {"parse_ok", a.parse_ok},
            {"memory", state},
            {"memory_digest", sha256_hex(state)},
        };
        if (last && call.ok) {
            rec["parsed"] = call.delta;
        } else {
            rec["parsed"] = nullptr;
        }
        trace.append(std::move(rec));
    }
}

inline void record_warning(RunTrace& trace, const std::string& message) {
    trace.append(nlohmann::json{{"type", "warning"}, {"message", message}});
}

inline void record_summary(RunTrace& trace, const std::string& answer,
                           std::uint64_t wall_ms) {
    nlohmann::json rec{{"type", "summary"},
                       {"answer", answer},
                       {"complete", true},
                       {"calls", trace.calls_by_role()},
                       {"total_calls", trace.total_calls()},
                       {"prompt_tokens", trace.total_prompt_tokens()},
                       {"completion_tokens", trace.total_completion_tokens()},
                       {"latency_ms_total", trace.total_latency_ms()},
                       {"wall_ms", wall_ms}};
    trace.append(std::move(rec));
}

/// Keep at most `cap` tokens of `text` (prefix cut on the token grid).
inline std::string clip_tokens(const std::string& text, TokenCount cap, const Tokenizer& tok) {
    const auto spans = tok.spans(text);
    if (spans.size() <= cap.value) return text;
    if (cap.value == 0) return std::string();
    return text.substr(0, spans[cap.value - 1].end);
}

class Stopwatch {
public:
    std::uint64_t elapsed_ms() const {
        return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                              std::chrono::steady_clock::now() - t0_)
                                              .count());
    }

private:
    std::chrono::steady_clock::time_point t0_ = std::chrono::steady_clock::now();
};

}  // namespace detail

// ---------------------------------------------------------------------------

inline RunResult run_coma(const std::string& query, const std::string& document,
                          const RunConfig& cfg, LlmBackend& llm,
                          const std::string& trace_path = {}) {
    cfg.validate();
    if (document.empty()) throw PipelineError("document must be non-empty");

    const PromptLibrary lib = detail::load_prompts(cfg);
    detail::Stopwatch clock;
    RunTrace trace;
    trace.append(detail::config_record(cfg, lib, llm));

    try {
        const Tokenizer tok = tokenizer(cfg.tokenizer);
        const std::vector<Chunk> chunks = segment(document, cfg.chunk_size, tok);
        const std::string task_inst = cfg.effective_task_inst();
        Memory m;

        // Plan: seed the sub-question set.
        {
            const std::string before = serialize_memory(m);
            PlanResult p = plan(detail::agent_cfg(cfg, lib, llm, RoleTag::planner), query);
            m = new_memory(p.questions);
            detail::record_call(trace, RoleTag::planner, -1, cfg.model_for(RoleTag::planner),
                                p.call, before, serialize_memory(m));
            if (!p.call.ok) {
                detail::record_warning(
                    trace, "planner reply unparseable after retries; using the query verbatim");
            }
        }

        for (const Chunk& chunk : chunks) {
            const int cidx = static_cast<int>(chunk.index);

            // Extract: gather new facts, then enforce the budget.
            {
                const std::string before = serialize_memory(m);
                ExtractResult er = extract(detail::agent_cfg(cfg, lib, llm, RoleTag::extract),
                                           chunk.text, before, query);
                m = append_gathered(m, er.facts, cidx, tok);
                PruneStats stats;
                m = prune(m, cfg.budget, &stats);
                detail::record_call(trace, RoleTag::extract, cidx,
                                    cfg.model_for(RoleTag::extract), er.call, before,
                                    serialize_memory(m));
                if (!er.call.ok) {
                    detail::record_warning(trace, "extract reply unparseable at chunk " +
                                                      std::to_string(cidx) +
                                                      "; gathered facts unchanged");
                }
                if (stats.oversized_kept) {
                    detail::record_warning(trace, "gathered fact larger than the whole budget "
                                                  "kept alone at chunk " +
                                                      std::to_string(cidx));
                }
            }

            // Infer: derive claims over everything gathered so far.
            {
                const std::string before = serialize_memory(m);
                InferResult ir =
                    infer(detail::agent_cfg(cfg, lib, llm, RoleTag::infer), before, query);
                m = append_inferred(m, ir.facts, tok);
                detail::record_call(trace, RoleTag::infer, cidx, cfg.model_for(RoleTag::infer),
                                    ir.call, before, serialize_memory(m));
                if (!ir.call.ok) {
                    detail::record_warning(trace, "infer reply unparseable at chunk " +
                                                      std::to_string(cidx) +
                                                      "; inferred facts unchanged");
                }
            }

            // Refine: the reply replaces the question set outright.
            {
                const std::string before = serialize_memory(m);
                RefineResult rr =
                    refine(detail::agent_cfg(cfg, lib, llm, RoleTag::refine), before, query);
                if (rr.questions) {
                    std::uint64_t next = m.next_seq;
                    auto qs = rebuild_questions(m, *rr.questions, next);
                    m.next_seq = next;
                    m = replace_questions(m, std::move(qs));
                }
                detail::record_call(trace, RoleTag::refine, cidx, cfg.model_for(RoleTag::refine),
                                    rr.call, before, serialize_memory(m));
                if (!rr.questions) {
                    detail::record_warning(trace, "refine reply unparseable at chunk " +
                                                      std::to_string(cidx) +
                                                      "; question set kept");
                }
            }
        }

        // Synthesize: the manager writes the final answer into memory.
        {
            const std::string before = serialize_memory(m);
            SynthesizeResult sr = synthesize(detail::agent_cfg(cfg, lib, llm, RoleTag::manager),
                                             before, query, task_inst);
            m.answer = sr.answer;
            detail::record_call(trace, RoleTag::manager, -1, cfg.model_for(RoleTag::manager),
                                sr.call, before, serialize_memory(m));
            if (!sr.call.ok) {
                detail::record_warning(
                    trace, "manager reply had no parseable answer; raw text used");
            }
            detail::record_summary(trace, m.answer, clock.elapsed_ms());
            if (!trace_path.empty()) persist_trace(trace, trace_path);
            return RunResult{m.answer, std::move(trace)};
        }
    } catch (const Error& e) {
        trace.append(nlohmann::json{{"type", "error"}, {"message", e.what()}});
        if (!trace_path.empty()) persist_trace(trace, trace_path);
        throw;
    }
}

inline RunResult run_coa(const std::string& query, const std::string& document,
                         const RunConfig& cfg, LlmBackend& llm,
                         const std::string& trace_path = {}) {
    cfg.validate();
    if (document.empty()) throw PipelineError("document must be non-empty");

    const PromptLibrary lib = detail::load_prompts(cfg);
    detail::Stopwatch clock;
    RunTrace trace;
    trace.append(detail::config_record(cfg, lib, llm));

    try {
        const Tokenizer tok = tokenizer(cfg.tokenizer);
        const std::vector<Chunk> chunks = segment(document, cfg.chunk_size, tok);
        const std::string task_inst = cfg.effective_task_inst();
        std::string summary;  // the baseline's entire working state

        for (const Chunk& chunk : chunks) {
            const int cidx = static_cast<int>(chunk.index);
            const std::string before = summary;
            FreeTextResult w = coa_worker(detail::agent_cfg(cfg, lib, llm, RoleTag::coa_worker),
                                          query, summary, chunk.text);
            summary = w.text;
            if (tok.count(summary) > cfg.budget.max_tokens) {
                summary = detail::clip_tokens(summary, cfg.budget.max_tokens, tok);
                detail::record_warning(trace, "summary exceeded the cap at chunk " +
                                                  std::to_string(cidx) + " and was truncated");
            }
            detail::record_call(trace, RoleTag::coa_worker, cidx,
                                cfg.model_for(RoleTag::coa_worker), w.call, before, summary);
        }

        FreeTextResult ans = coa_manager(detail::agent_cfg(cfg, lib, llm, RoleTag::manager),
                                         query, summary, task_inst);
        detail::record_call(trace, RoleTag::manager, -1, cfg.model_for(RoleTag::manager),
                            ans.call, summary, summary);
        detail::record_summary(trace, ans.text, clock.elapsed_ms());
        if (!trace_path.empty()) persist_trace(trace, trace_path);
        return RunResult{ans.text, std::move(trace)};
    } catch (const Error& e) {
        trace.append(nlohmann::json{{"type", "error"}, {"message", e.what()}});
        if (!trace_path.empty()) persist_trace(trace, trace_path);
        throw;
    }
}

inline RunResult run_tc(const std::string& query, const std::string& document,
                        const RunConfig& cfg, LlmBackend& llm,
                        const std::string& trace_path = {}) {
    cfg.validate();
    if (document.empty()) throw PipelineError("document must be non-empty");

    const PromptLibrary lib = detail::load_prompts(cfg);
    detail::Stopwatch clock;
    RunTrace trace;
    trace.append(detail::config_record(cfg, lib, llm));

    try {
        const Tokenizer tok = tokenizer(cfg.tokenizer);
        const std::string clipped = truncate_middle(document, cfg.tc_limit, tok);
        FreeTextResult ans = tc_direct(detail::agent_cfg(cfg, lib, llm, RoleTag::tc_direct),
                                       query, clipped, cfg.effective_task_inst());
        detail::record_call(trace, RoleTag::tc_direct, -1, cfg.model_for(RoleTag::tc_direct),
                            ans.call, "", "");
        detail::record_summary(trace, ans.text, clock.elapsed_ms());
        if (!trace_path.empty()) persist_trace(trace, trace_path);
        return RunResult{ans.text, std::move(trace)};
    } catch (const Error& e) {
        trace.append(nlohmann::json{{"type", "error"}, {"message", e.what()}});
        if (!trace_path.empty()) persist_trace(trace, trace_path);
        throw;
    }
}

/// Dispatch on cfg.method.
inline RunResult run_method(const std::string& query, const std::string& document,
                            const RunConfig& cfg, LlmBackend& llm,
                            const std::string& trace_path = {}) {
    if (cfg.method == "coma") return run_coma(query, document, cfg, llm, trace_path);
    if (cfg.method == "coa") return run_coa(query, document, cfg, llm, trace_path);
    if (cfg.method == "tc") return run_tc(query, document, cfg, llm, trace_path);
    throw ConfigError("unknown method: " + cfg.method);
}

}  // namespace coma
