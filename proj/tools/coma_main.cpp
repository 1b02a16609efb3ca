// Command-line front end: `coma run`, `coma bench`, `coma trace`.
//
// Flag parsing lives here; everything observable is implemented in the
// library headers so tests can drive it in-process. Exit codes are listed in
// cli.hpp.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "coma/coma.hpp"

namespace {

// A flag that only lands in the resolver when the user actually passed it,
// so CLI omissions never shadow env/file/default layers.
struct CliOverrides {
    std::vector<std::pair<std::string, std::string>> kv;

    void add(const std::string& key, const std::string& value) { kv.emplace_back(key, value); }
};

void add_config_flags(CLI::App& app, CliOverrides& ov) {
    const auto bind = [&ov](const std::string& key) {
        return [&ov, key](const std::string& v) { ov.add(key, v); };
    };
    app.add_option_function<std::string>("--method", bind("run.method"),
                                         "Method: coma, coa, or tc");
    app.add_option_function<std::string>("--chunk-size", bind("run.chunk_size"),
                                         "Chunk size in tokens");
    app.add_option_function<std::string>("--budget", bind("run.budget"),
                                         "Gathered-fact budget in tokens");
    app.add_option_function<std::string>("--tc-limit", bind("run.tc_limit"),
                                         "Token limit for the truncated-context method");
    app.add_option_function<std::string>("--model", bind("run.model"), "Default model id");
    app.add_option_function<std::string>(
        "--role-model", [&ov](const std::string& v) {
            const auto eq = v.find('=');
            if (eq == std::string::npos) {
                throw CLI::ValidationError("--role-model expects role=model");
            }
            ov.add("run.model." + v.substr(0, eq), v.substr(eq + 1));
        },
        "Per-role model override, e.g. extract=qwen3-14b (repeatable)");
    app.add_option_function<std::string>("--tokenizer", bind("run.tokenizer"),
                                         "Tokenizer id (default | whitespace)");
    app.add_option_function<std::string>("--temperature", bind("run.temperature"),
                                         "Sampling temperature");
    app.add_option_function<std::string>("--max-output-tokens", bind("run.max_output_tokens"),
                                         "Completion token cap");
    app.add_option_function<std::string>("--retry-max", bind("run.retry_max"),
                                         "Parse-failure re-asks per agent call");
    app.add_option_function<std::string>("--question-cap", bind("run.question_cap"),
                                         "Maximum sub-questions kept in memory");
    app.add_option_function<std::string>("--task-inst", bind("run.task_inst"),
                                         "Task-specific instruction for the final answer");
    app.add_option_function<std::string>("--prompt-dir", bind("run.prompt_dir"),
                                         "Directory of prompt template overrides");
    app.add_option_function<std::string>("--backend", bind("backend.kind"),
                                         "Backend: http, scripted, or cassette");
    app.add_option_function<std::string>("--base-url", bind("backend.base_url"),
                                         "Chat endpoint base URL");
    app.add_option_function<std::string>("--script", bind("backend.script"),
                                         "Reply script for the scripted backend (JSONL)");
    app.add_option_function<std::string>("--script-cycle", bind("backend.script_cycle"),
                                         "Wrap around the scripted replies (true/false)");
    app.add_option_function<std::string>("--cassette", bind("backend.cassette"),
                                         "Cassette file path");
    app.add_option_function<std::string>("--cassette-mode", bind("backend.cassette_mode"),
                                         "Cassette mode: record or replay");
    app.add_option_function<std::string>("--retry-base-delay-ms",
                                         bind("backend.retry_base_delay_ms"),
                                         "Base backoff delay for transient failures");
    app.add_option_function<std::string>("--eager-check", bind("backend.eager_check"),
                                         "Probe the endpoint before the first call");
}

coma::ConfigResolver resolve(const std::string& config_file, const CliOverrides& ov) {
    coma::ConfigResolver r;
    coma::seed_defaults(r);
    if (!config_file.empty()) r.apply_file(coma::load_config_file(config_file));
    r.apply_env();
    for (const auto& [k, v] : ov.kv) r.apply_cli(k, v);
    return r;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Chain-of-memory-agents question answering over long documents"};
    app.require_subcommand(1);

    std::string config_file;
    app.add_option("--config", config_file, "INI config file");

    CliOverrides ov;
    add_config_flags(app, ov);

    // --- run ---------------------------------------------------------------
    auto* run = app.add_subcommand("run", "Answer one question about one document");
    coma::RunCmdOptions run_opts;
    run->add_option("-q,--question", run_opts.question, "The question")->required();
    run->add_option("-d,--document", run_opts.document_path, "Path to the document file")
        ->required();
    run->add_option("-o,--out-dir", run_opts.out_dir, "Output directory for the trace");

    // --- bench -------------------------------------------------------------
    auto* bench = app.add_subcommand("bench", "Evaluate methods over a dataset");
    coma::BenchOptions bench_opts;
    std::string methods_csv = "coma,coa,tc";
    bench->add_option("--dataset", bench_opts.dataset_path, "JSONL dataset path")->required();
    bench->add_option("--methods", methods_csv, "Comma-separated methods to run");
    bench->add_option("--limit", bench_opts.limit, "Evaluate at most N examples");
    bench->add_flag("--resume", bench_opts.resume, "Continue from an existing report");
    bench->add_option("-o,--out-dir", bench_opts.out_dir, "Output directory");
    bench->add_option("--parallelism", bench_opts.parallelism, "Concurrent examples");
    bench->add_option("--seed", bench_opts.seed, "Example-ordering seed");
    bench->add_option("--metric", bench_opts.metric, "Scoring metric: rouge_l, rouge_1, em");
    std::uint64_t min_context = 0;
    bench->add_option("--min-context", min_context, "Keep examples with at least N tokens");
    bench->add_flag("--skip-bad", bench_opts.skip_bad, "Skip malformed dataset rows");

    // --- trace -------------------------------------------------------------
    auto* tracecmd = app.add_subcommand("trace", "Inspect a persisted run trace");
    std::string trace_mode, trace_path;
    tracecmd->add_option("mode", trace_mode, "show or stats")->required();
    tracecmd->add_option("path", trace_path, "Trace file (JSONL)")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            return coma::cmd_run(run_opts, resolve(config_file, ov), std::cout, std::cerr);
        }
        if (bench->parsed()) {
            bench_opts.methods.clear();
            std::size_t start = 0;
            while (start <= methods_csv.size()) {
                const auto comma = methods_csv.find(',', start);
                const std::string item = methods_csv.substr(
                    start, comma == std::string::npos ? std::string::npos : comma - start);
                if (!item.empty()) bench_opts.methods.push_back(item);
                if (comma == std::string::npos) break;
                start = comma + 1;
            }
            bench_opts.min_context = coma::TokenCount{min_context};
            return coma::cmd_bench(bench_opts, resolve(config_file, ov), std::cout, std::cerr);
        }
        if (tracecmd->parsed()) {
            return coma::cmd_trace(trace_mode, trace_path, std::cout, std::cerr);
        }
    } catch (const coma::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return coma::exit_code_for(e);
    }
    return 1;
}
