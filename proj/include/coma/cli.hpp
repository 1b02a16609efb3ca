#pragma once

// Implementations behind the three CLI subcommands. The binary in tools/
// only parses flags and funnels into these, so all behavior stays testable
// in-process.
//
// Exit codes (shared by every subcommand):
//   0  success
//   2  configuration / usage error
//   3  dataset error
//   4  trace integrity failure
//   5  backend or pipeline failure

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "coma/bench.hpp"
#include "coma/config.hpp"
#include "coma/eval.hpp"
#include "coma/pipeline.hpp"
#include "coma/trace.hpp"

namespace coma {

inline int exit_code_for(const Error& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const PromptError*>(&e)) return 2;
    if (dynamic_cast<const UnknownTokenizerError*>(&e)) return 2;
    if (dynamic_cast<const DatasetError*>(&e)) return 3;
    if (dynamic_cast<const TraceIntegrityError*>(&e)) return 4;
    return 5;  // transport, provider, cassette, script, pipeline
}

inline void echo_config(const ConfigResolver& resolver, std::ostream& err) {
    err << "effective configuration (cli > env > file > default):\n";
    for (const auto& line : resolver.echo_lines()) err << "  " << line << "\n";
}

inline std::string read_file_or_throw(const std::string& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + what + ": " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// run

struct RunCmdOptions {
    std::string question;
    std::string document_path;
    std::string out_dir = "runs";
};

inline int cmd_run(const RunCmdOptions& opts, const ConfigResolver& resolver, std::ostream& out,
                   std::ostream& err) {
    try {
        echo_config(resolver, err);
        if (opts.question.empty()) throw ConfigError("--question must not be empty");
        const std::string document = read_file_or_throw(opts.document_path, "document");
        if (document.empty()) throw ConfigError("document file is empty: " + opts.document_path);

        const RunConfig cfg = make_run_config(resolver);
        auto backend = build_backend(make_backend_config(resolver));

        std::filesystem::create_directories(opts.out_dir);
        const auto trace_path =
            std::filesystem::path(opts.out_dir) / ("run-" + cfg.method + ".jsonl");

        const RunResult res =
            run_method(opts.question, document, cfg, *backend, trace_path.string());
        out << res.answer << "\n";
        err << "trace: " << trace_path.string() << " (" << res.trace.total_calls()
            << " calls)\n";
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

// ---------------------------------------------------------------------------
// bench

inline int cmd_bench(const BenchOptions& opts, const ConfigResolver& resolver, std::ostream& out,
                     std::ostream& err) {
    try {
        echo_config(resolver, err);
        if (opts.dataset_path.empty()) throw ConfigError("--dataset is required");

        const RunConfig cfg = make_run_config(resolver);
        cfg.validate();
        auto backend = build_backend(make_backend_config(resolver));

        nlohmann::json echo = cfg.to_json();
        echo["backend"] = std::string(backend->name());
        echo["dataset"] = opts.dataset_path;
        echo["metric"] = opts.metric;
        echo["seed"] = opts.seed;
        echo["limit"] = opts.limit;

        const ScoreReport report = run_bench(opts, cfg, *backend, err, echo);
        out << render_table(report);
        err << "report: " << (std::filesystem::path(opts.out_dir) / "report.json").string()
            << "\n";
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

// ---------------------------------------------------------------------------
// trace

namespace detail {

inline std::string brief(const std::string& s, std::size_t limit = 100) {
    std::string line;
    for (char c : s) {
        if (c == '\n' || c == '\r' || c == '\t') {
            line.push_back(' ');
        } else {
            line.push_back(c);
        }
        if (line.size() >= limit) {
            line += "…";
            break;
        }
    }
    return line;
}

inline void indent_block(std::ostream& out, const std::string& text, const char* pad) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) out << pad << line << "\n";
}

}  // namespace detail

inline int trace_show(const RunTrace& trace, std::ostream& out) {
    for (const auto& rec : trace.records()) {
        const std::string type = rec.value("type", "?");
        const auto seq = rec.value("seq", std::uint64_t{0});
        if (type == "config") {
            out << "#" << seq << " config method=" << rec.value("method", "?")
                << " backend=" << rec.value("backend", "?")
                << " chunk_size=" << rec.value("chunk_size", std::uint64_t{0})
                << " budget=" << rec.value("budget_tokens", std::uint64_t{0})
                << " tc_limit=" << rec.value("tc_limit", std::uint64_t{0}) << "\n";
        } else if (type == "exchange") {
            const int chunk = rec.value("chunk", -1);
            out << "#" << seq << " exchange role=" << rec.value("role", "?") << " chunk=";
            if (chunk < 0) {
                out << "-";
            } else {
                out << chunk;
            }
            out << " model=" << rec.value("model", "?") << " parse_ok="
                << (rec.value("parse_ok", false) ? "yes" : "no")
                << " prompt_tokens=" << rec.value("prompt_tokens", std::uint64_t{0})
                << " completion_tokens=" << rec.value("completion_tokens", std::uint64_t{0})
                << "\n";
            out << "  reply: " << detail::brief(rec.value("reply", "")) << "\n";
            const std::string mem = rec.value("memory", "");
            if (!mem.empty()) {
                out << "  state (sha256 " << rec.value("memory_digest", "").substr(0, 12)
                    << "…):\n";
                detail::indent_block(out, mem, "    ");
            }
        } else if (type == "warning") {
            out << "#" << seq << " warning: " << rec.value("message", "") << "\n";
        } else if (type == "error") {
            out << "#" << seq << " error: " << rec.value("message", "") << "\n";
        } else if (type == "summary") {
            out << "#" << seq << " summary complete="
                << (rec.value("complete", false) ? "yes" : "no")
                << " total_calls=" << rec.value("total_calls", std::uint64_t{0}) << "\n";
            out << "  answer: " << detail::brief(rec.value("answer", ""), 200) << "\n";
        } else {
            out << "#" << seq << " " << type << "\n";
        }
    }
    return 0;
}

inline int trace_stats(const RunTrace& trace, std::ostream& out) {
    const auto* config = trace.config_record();
    const std::string method = config ? config->value("method", "?") : "?";

    std::set<int> chunk_indices;
    std::uint64_t retries = 0;
    for (const auto& rec : trace.records()) {
        if (rec.value("type", "") != "exchange") continue;
        const int chunk = rec.value("chunk", -1);
        if (chunk >= 0) chunk_indices.insert(chunk);
        if (rec.contains("parse_ok") && !rec.value("parse_ok", true)) ++retries;
    }
    const std::uint64_t L = chunk_indices.size();
    const std::uint64_t total = trace.total_calls();

    out << "method: " << method << "\n";
    out << "chunks (L): " << L << "\n";
    out << "calls by role:\n";
    for (const auto& [role, n] : trace.calls_by_role()) {
        out << "  " << role << ": " << n << "\n";
    }
    out << "total calls: " << total << "\n";

    std::uint64_t expected = 0;
    std::string formula;
    if (method == "coma") {
        expected = 3 * L + 2;
        formula = "3L+2";
    } else if (method == "coa") {
        expected = L + 1;
        formula = "L+1";
    } else if (method == "tc") {
        expected = 1;
        formula = "1";
    }
    if (!formula.empty()) {
        out << "expected for " << method << " (" << formula << "): " << expected << "\n";
        if (total == expected) {
            out << "consistent: yes\n";
        } else if (total > expected && retries > 0) {
            out << "consistent: yes (" << total - expected
                << " extra physical calls from parse retries)\n";
        } else {
            out << "consistent: NO\n";
        }
    }
    out << "warnings: " << trace.warnings().size() << "\n";
    out << "complete: " << (trace.complete() ? "yes" : "no") << "\n";
    out << "final answer: " << detail::brief(trace.final_answer(), 200) << "\n";
    return 0;
}

inline int cmd_trace(const std::string& mode, const std::string& path, std::ostream& out,
                     std::ostream& err) {
    try {
        if (mode != "show" && mode != "stats") {
            throw ConfigError("trace mode must be show or stats, got: " + mode);
        }
        const RunTrace trace = load_trace(path);
        return mode == "show" ? trace_show(trace, out) : trace_stats(trace, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e);
    }
}

}  // namespace coma
