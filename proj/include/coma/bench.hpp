#pragma once

// Benchmark sweeps: every requested method over every dataset example, with
// per-example traces, an incrementally rewritten report, and resume support.
//
// The report file carries a "complete" marker that is false until the whole
// sweep finished, so a partial report can never be mistaken for a finished
// one. --resume reloads an existing report and skips (method, id) pairs that
// already have rows.
//
// The seed shuffles example order (and nothing else — pipelines are
// deterministic given a backend). Strictly ordered backends (scripted,
// cassette) force parallelism down to 1; concurrent calls would consume the
// shared reply sequence in nondeterministic order.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "coma/eval.hpp"
#include "coma/pipeline.hpp"

namespace coma {

struct BenchOptions {
    std::string dataset_path;
    std::vector<std::string> methods{"coma", "coa", "tc"};
    std::size_t limit = 0;  // 0 = all examples
    bool resume = false;
    std::string out_dir = "runs";
    int parallelism = 1;
    std::uint64_t seed = 0;
    std::string metric = "rouge_l";  // rouge_l | rouge_1 | em
    TokenCount min_context{0};       // 0 = no long-context filter
    bool skip_bad = false;
};

namespace detail {

inline std::string sanitize_id(const std::string& id) {
    std::string out;
    out.reserve(id.size());
    for (char c : id) {
        const auto u = static_cast<unsigned char>(c);
        const bool ok = (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') ||
                        (u >= '0' && u <= '9') || c == '-' || c == '_';
        out.push_back(ok ? c : '_');
    }
    return out;
}

inline void write_report_files(const ScoreReport& report, bool complete,
                               const std::filesystem::path& out_dir) {
    nlohmann::json j = to_json(report);
    j["complete"] = complete;
    {
        std::ofstream out(out_dir / "report.json", std::ios::binary | std::ios::trunc);
        if (!out) throw ConfigError("cannot write report to " + out_dir.string());
        out << j.dump(2) << '\n';
    }
    {
        std::ofstream out(out_dir / "report.txt", std::ios::binary | std::ios::trunc);
        out << render_table(report);
    }
}

inline ScoreRow score_example(const QaExample& ex, const std::string& method,
                              const std::string& answer, const RunTrace& trace,
                              const std::string& metric) {
    ScoreRow row;
    row.id = ex.id;
    row.method = method;
    row.rouge_l = rouge_f1(answer, ex.gold_answers);
    row.rouge_1 = rouge1_f1(answer, ex.gold_answers);
    if (ex.options) {
        int best = 0;
        bool ambiguous = false;
        for (const auto& gold : ex.gold_answers) {
            const EmOutcome em = exact_match(answer, gold, ex.options);
            best = std::max(best, em.score);
            ambiguous = ambiguous || em.ambiguous;
        }
        row.em = best;
        row.ambiguous = ambiguous;
    } else if (metric == "em") {
        int best = 0;
        for (const auto& gold : ex.gold_answers) {
            best = std::max(best, exact_match(answer, gold).score);
        }
        row.em = best;
    }
    if (metric == "em") {
        row.score = row.em > 0 ? 1.0 : 0.0;
    } else if (metric == "rouge_1") {
        row.score = row.rouge_1;
    } else {
        row.score = row.rouge_l;
    }
    row.calls = trace.total_calls();
    row.prompt_tokens = trace.total_prompt_tokens();
    row.completion_tokens = trace.total_completion_tokens();
    row.latency_ms = trace.total_latency_ms();
    return row;
}

}  // namespace detail

/// Run the sweep. Progress lines go to `log`; the report is rewritten after
/// every finished example so an interrupted sweep loses at most the example
/// in flight.
inline ScoreReport run_bench(const BenchOptions& opts, const RunConfig& base_cfg,
                             LlmBackend& llm, std::ostream& log,
                             nlohmann::json config_echo = nlohmann::json::object()) {
    if (opts.metric != "rouge_l" && opts.metric != "rouge_1" && opts.metric != "em") {
        throw ConfigError("metric must be rouge_l, rouge_1, or em, got: " + opts.metric);
    }
    for (const auto& m : opts.methods) {
        if (m != "coma" && m != "coa" && m != "tc") {
            throw ConfigError("unknown method in --methods: " + m);
        }
    }

    const std::filesystem::path out_dir(opts.out_dir);
    std::filesystem::create_directories(out_dir / "traces");

    std::vector<QaExample> examples = load_dataset(opts.dataset_path, "jsonl", opts.skip_bad);
    if (opts.min_context.value > 0) {
        const Tokenizer tok = tokenizer(base_cfg.tokenizer);
        const std::size_t before = examples.size();
        examples = filter_min_context(examples, opts.min_context, tok);
        log << "long-context filter: " << examples.size() << " of " << before
            << " examples have >= " << opts.min_context.value << " tokens\n";
    }

    std::mt19937_64 rng(opts.seed);
    std::shuffle(examples.begin(), examples.end(), rng);
    if (opts.limit > 0 && examples.size() > opts.limit) examples.resize(opts.limit);

    // Resume: keep rows from an existing report, skip their (method, id).
    std::vector<ScoreRow> rows;
    std::set<std::pair<std::string, std::string>> done;
    if (opts.resume) {
        const auto report_path = out_dir / "report.json";
        std::ifstream in(report_path, std::ios::binary);
        if (in) {
            auto j = nlohmann::json::parse(in, nullptr, false);
            if (!j.is_discarded()) {
                for (const auto& r : report_from_json(j).rows) {
                    done.insert({r.method, r.id});
                    rows.push_back(r);
                }
                log << "resume: " << rows.size() << " rows carried over\n";
            }
        }
    }

    struct Task {
        const QaExample* ex;
        std::string method;
    };
    std::vector<Task> tasks;
    for (const auto& method : opts.methods) {
        for (const auto& ex : examples) {
            if (done.count({method, ex.id})) continue;
            tasks.push_back(Task{&ex, method});
        }
    }

    int parallelism = std::max(1, opts.parallelism);
    const std::string_view backend_name = llm.name();
    if (parallelism > 1 && backend_name != "http") {
        log << "backend '" << backend_name
            << "' replays an ordered sequence; forcing parallelism 1\n";
        parallelism = 1;
    }

    std::mutex mu;  // guards rows + report files + log
    std::atomic<std::size_t> next_task{0};
    std::atomic<bool> failed{false};
    std::string failure;

    const auto worker = [&]() {
        for (;;) {
            if (failed.load()) return;
            const std::size_t i = next_task.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& t = tasks[i];

            RunConfig cfg = base_cfg;
            cfg.method = t.method;
            if (cfg.task_inst.empty() && t.ex->options) {
                cfg.task_inst = std::string(kTaskInstMultipleChoice);
                cfg.task_inst += " Options: ";
                for (std::size_t k = 0; k < t.ex->options->size(); ++k) {
                    if (k) cfg.task_inst += " | ";
                    cfg.task_inst += static_cast<char>('A' + k);
                    cfg.task_inst += ") ";
                    cfg.task_inst += (*t.ex->options)[k];
                }
            }
            const auto trace_path =
                out_dir / "traces" / (t.method + "-" + detail::sanitize_id(t.ex->id) + ".jsonl");

            try {
                RunResult res = run_method(t.ex->question, t.ex->context, cfg, llm,
                                           trace_path.string());
                ScoreRow row =
                    detail::score_example(*t.ex, t.method, res.answer, res.trace, opts.metric);

                std::lock_guard lock(mu);
                rows.push_back(std::move(row));
                ScoreReport partial = aggregate(rows, opts.metric, config_echo);
                detail::write_report_files(partial, false, out_dir);
                log << t.method << " " << t.ex->id << ": score " << rows.back().score << " ("
                    << rows.back().calls << " calls)\n";
            } catch (const Error& e) {
                std::lock_guard lock(mu);
                if (!failed.exchange(true)) failure = e.what();
                return;
            }
        }
    };

    if (parallelism == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int i = 0; i < parallelism; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    ScoreReport report = aggregate(rows, opts.metric, config_echo);
    if (failed.load()) {
        detail::write_report_files(report, false, out_dir);
        throw PipelineError("bench aborted: " + failure +
                            " (partial report kept; rerun with --resume)");
    }
    detail::write_report_files(report, true, out_dir);
    return report;
}

}  // namespace coma
