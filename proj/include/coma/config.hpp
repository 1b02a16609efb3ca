#pragma once

// Layered configuration: CLI flag > environment variable > config file >
// built-in default. Every resolved key remembers which layer set it, and the
// CLI echoes the full resolution at startup so a run's effective
// configuration is always auditable.
//
// Config files are plain INI:
//
//   # comment
//   [run]
//   method = coma
//   chunk_size = 64000
//   model.extract = qwen3-14b     ; per-role override
//   [backend]
//   kind = http
//   base_url = "http://localhost:8000/v1"
//
// Sections map onto dotted keys: [run] method → "run.method".

#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "coma/errors.hpp"
#include "coma/llm_client.hpp"
#include "coma/pipeline.hpp"

namespace coma {

// ---------------------------------------------------------------------------
// INI parsing

inline std::map<std::string, std::string> parse_ini(std::string_view text,
                                                    const std::string& origin = "<config>") {
    std::map<std::string, std::string> out;
    std::string section;
    std::size_t lineno = 0;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        std::string_view line =
            nl == std::string_view::npos ? text.substr(start) : text.substr(start, nl - start);
        start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++lineno;

        // Trim and skip blanks/comments.
        std::size_t b = 0, e = line.size();
        while (b < e && detail::is_ws_byte(static_cast<unsigned char>(line[b]))) ++b;
        while (e > b && detail::is_ws_byte(static_cast<unsigned char>(line[e - 1]))) --e;
        line = line.substr(b, e - b);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;

        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3) {
                throw ConfigError(origin + ":" + std::to_string(lineno) +
                                  ": malformed section header");
            }
            section = std::string(line.substr(1, line.size() - 2));
            continue;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected key = value");
        }
        std::string_view key = line.substr(0, eq);
        std::string_view val = line.substr(eq + 1);
        while (!key.empty() && detail::is_ws_byte(static_cast<unsigned char>(key.back()))) {
            key.remove_suffix(1);
        }
        while (!val.empty() && detail::is_ws_byte(static_cast<unsigned char>(val.front()))) {
            val.remove_prefix(1);
        }
        // Inline comments only after whitespace, so URLs with # fragments survive.
        for (std::size_t i = 1; i < val.size(); ++i) {
            if ((val[i] == '#' || val[i] == ';') &&
                detail::is_ws_byte(static_cast<unsigned char>(val[i - 1]))) {
                val = val.substr(0, i);
                break;
            }
        }
        while (!val.empty() && detail::is_ws_byte(static_cast<unsigned char>(val.back()))) {
            val.remove_suffix(1);
        }
        if (val.size() >= 2 && val.front() == '"' && val.back() == '"') {
            val = val.substr(1, val.size() - 2);
        }
        if (key.empty()) {
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
        }
        const std::string full_key =
            section.empty() ? std::string(key) : section + "." + std::string(key);
        out[full_key] = std::string(val);
    }
    return out;
}

inline std::map<std::string, std::string> load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_ini(ss.str(), path);
}

// ---------------------------------------------------------------------------
// Layered resolution

class ConfigResolver {
public:
    void set_default(const std::string& key, const std::string& value) {
        apply(key, value, "default");
    }

    void apply_file(const std::map<std::string, std::string>& kv) {
        for (const auto& [k, v] : kv) apply(k, v, "file");
    }

    /// Recognized environment variables, lowest-to-highest none — env beats
    /// file, loses to CLI.
    void apply_env() {
        static const std::pair<const char*, const char*> kEnvMap[] = {
            {"LLM_API_KEY", "backend.api_key"},
            {"LLM_BASE_URL", "backend.base_url"},
            {"COMA_MODEL", "run.model"},
            {"COMA_TOKENIZER", "run.tokenizer"},
            {"COMA_BACKEND", "backend.kind"},
        };
        for (const auto& [env, key] : kEnvMap) {
            if (const char* v = std::getenv(env)) {
                if (v[0] != '\0') apply(key, v, std::string("env ") + env);
            }
        }
    }

    void apply_cli(const std::string& key, const std::string& value) {
        apply(key, value, "cli");
    }

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    std::string get(const std::string& key, const std::string& fallback = {}) const {
        auto it = entries_.find(key);
        return it != entries_.end() ? it->second.value : fallback;
    }

    std::string source(const std::string& key) const {
        auto it = entries_.find(key);
        return it != entries_.end() ? it->second.source : "unset";
    }

    std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        try {
            return std::stoull(it->second.value);
        } catch (...) {
            throw ConfigError(key + " must be a non-negative integer, got: " +
                              it->second.value);
        }
    }

    double get_double(const std::string& key, double fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        try {
            return std::stod(it->second.value);
        } catch (...) {
            throw ConfigError(key + " must be a number, got: " + it->second.value);
        }
    }

    bool get_bool(const std::string& key, bool fallback) const {
        auto it = entries_.find(key);
        if (it == entries_.end()) return fallback;
        const std::string& v = it->second.value;
        if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
        if (v == "false" || v == "0" || v == "no" || v == "off") return false;
        throw ConfigError(key + " must be a boolean, got: " + v);
    }

    /// All keys under `prefix.`, with the prefix stripped.
    std::map<std::string, std::string> subtree(const std::string& prefix) const {
        std::map<std::string, std::string> out;
        const std::string p = prefix + ".";
        for (const auto& [k, v] : entries_) {
            if (k.size() > p.size() && k.compare(0, p.size(), p) == 0) {
                out[k.substr(p.size())] = v.value;
            }
        }
        return out;
    }

    /// One "key = value  [source]" line per resolved key, secrets masked.
    std::vector<std::string> echo_lines() const {
        std::vector<std::string> lines;
        for (const auto& [k, e] : entries_) {
            const bool secret = k == "backend.api_key";
            const std::string shown = secret ? (e.value.empty() ? "" : "(set)") : e.value;
            lines.push_back(k + " = " + shown + "  [" + e.source + "]");
        }
        return lines;
    }

private:
    struct Entry {
        std::string value;
        std::string source;
    };

    void apply(const std::string& key, const std::string& value, const std::string& source) {
        entries_[key] = Entry{value, source};
    }

    std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// Materialization into typed configs

/// Seed the resolver with every built-in default so the startup echo shows
/// the complete effective configuration, not just the overridden parts.
inline void seed_defaults(ConfigResolver& r) {
    const RunConfig d;
    r.set_default("run.method", d.method);
    r.set_default("run.chunk_size", std::to_string(d.chunk_size.value));
    r.set_default("run.budget", std::to_string(d.budget.max_tokens.value));
    r.set_default("run.tc_limit", std::to_string(d.tc_limit.value));
    r.set_default("run.model", d.default_model);
    r.set_default("run.tokenizer", d.tokenizer);
    r.set_default("run.temperature", "0");
    r.set_default("run.max_output_tokens", std::to_string(d.max_output_tokens.value));
    r.set_default("run.retry_max", std::to_string(d.retry_max));
    r.set_default("run.question_cap", std::to_string(d.question_cap));
    r.set_default("run.task_inst", d.task_inst);
    r.set_default("run.prompt_dir", d.prompt_dir);

    const BackendConfig b;
    r.set_default("backend.kind", b.kind);
    r.set_default("backend.base_url", b.base_url);
    r.set_default("backend.api_key", b.api_key);
    r.set_default("backend.script", b.script_path);
    r.set_default("backend.script_cycle", b.script_cycle ? "true" : "false");
    r.set_default("backend.cassette", b.cassette_path);
    r.set_default("backend.cassette_mode", b.cassette_mode);
    r.set_default("backend.retry_base_delay_ms", std::to_string(b.retry_base_delay_ms));
    r.set_default("backend.eager_check", b.eager_check ? "true" : "false");

    r.set_default("bench.out_dir", "runs");
    r.set_default("bench.parallelism", "1");
    r.set_default("bench.seed", "0");
    r.set_default("bench.metric", "rouge_l");
    r.set_default("bench.min_context", "0");
    r.set_default("bench.skip_bad", "false");
}

inline RunConfig make_run_config(const ConfigResolver& r) {
    RunConfig cfg;
    cfg.method = r.get("run.method", cfg.method);
    cfg.chunk_size = TokenCount{r.get_u64("run.chunk_size", cfg.chunk_size.value)};
    cfg.budget = MemoryBudget::from_tokens(
        TokenCount{r.get_u64("run.budget", cfg.budget.max_tokens.value)}, cfg.chunk_size);
    cfg.tc_limit = TokenCount{r.get_u64("run.tc_limit", cfg.tc_limit.value)};
    cfg.default_model = r.get("run.model", cfg.default_model);
    cfg.tokenizer = r.get("run.tokenizer", cfg.tokenizer);
    cfg.temperature = r.get_double("run.temperature", cfg.temperature);
    cfg.max_output_tokens =
        TokenCount{r.get_u64("run.max_output_tokens", cfg.max_output_tokens.value)};
    cfg.retry_max = static_cast<int>(r.get_u64("run.retry_max",
                                               static_cast<std::uint64_t>(cfg.retry_max)));
    cfg.question_cap = static_cast<std::size_t>(
        r.get_u64("run.question_cap", static_cast<std::uint64_t>(cfg.question_cap)));
    cfg.task_inst = r.get("run.task_inst", cfg.task_inst);
    cfg.prompt_dir = r.get("run.prompt_dir", cfg.prompt_dir);
    for (const auto& [key, value] : r.subtree("run.model")) {
        // run.model.extract = … → role override; bare run.model handled above.
        if (!role_from_string(key)) {
            throw ConfigError("run.model." + key + " does not name an agent role");
        }
        cfg.role_models[key] = value;
    }
    return cfg;
}

inline BackendConfig make_backend_config(const ConfigResolver& r) {
    BackendConfig cfg;
    cfg.kind = r.get("backend.kind", cfg.kind);
    cfg.base_url = r.get("backend.base_url", cfg.base_url);
    cfg.api_key = r.get("backend.api_key", cfg.api_key);
    cfg.script_path = r.get("backend.script", cfg.script_path);
    cfg.script_cycle = r.get_bool("backend.script_cycle", cfg.script_cycle);
    cfg.cassette_path = r.get("backend.cassette", cfg.cassette_path);
    cfg.cassette_mode = r.get("backend.cassette_mode", cfg.cassette_mode);
    cfg.retry_max = static_cast<int>(
        r.get_u64("run.retry_max", static_cast<std::uint64_t>(cfg.retry_max)));
    cfg.retry_base_delay_ms = static_cast<int>(r.get_u64(
        "backend.retry_base_delay_ms", static_cast<std::uint64_t>(cfg.retry_base_delay_ms)));
    cfg.eager_check = r.get_bool("backend.eager_check", cfg.eager_check);
    cfg.tokenizer = r.get("run.tokenizer", cfg.tokenizer);
    return cfg;
}

}  // namespace coma
