#pragma once

// Shared test helpers: temp dirs, a small process runner, RNG text
// generators, scripted-reply builders, and reference implementations used as
// oracles. The oracles are written with deliberately different algorithms
// than the library (memoized recursion vs iterative DP, front-drop loop vs
// suffix scan, a separate byte state machine for token counts) so agreement
// between the two is evidence, not tautology.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <sys/wait.h>
#include <unistd.h>

#include "coma/coma.hpp"

namespace ts {

// ---------------------------------------------------------------------------
// Filesystem

class TempDir {
public:
    TempDir() {
        static std::atomic<unsigned> counter{0};
        const unsigned n = counter.fetch_add(1);
        path_ = std::filesystem::temp_directory_path() /
                ("coma-test-" + std::to_string(::getpid()) + "-" + std::to_string(n));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::string str(const std::string& rel = {}) const {
        return rel.empty() ? path_.string() : (path_ / rel).string();
    }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// Subprocess runner (for end-to-end CLI checks)

struct CmdResult {
    int code = -1;
    std::string out;
    std::string err;
};

inline std::string shell_quote(const std::string& s) {
    std::string q = "'";
    for (char c : s) {
        if (c == '\'')
            q += "'\\''";
        else
            q.push_back(c);
    }
    q.push_back('\'');
    return q;
}

inline CmdResult run_cmd(const std::vector<std::string>& argv) {
    TempDir scratch;
    const std::string out_file = scratch.str("stdout");
    const std::string err_file = scratch.str("stderr");
    std::string cmd;
    for (const auto& a : argv) {
        cmd += shell_quote(a);
        cmd.push_back(' ');
    }
    cmd += "> " + shell_quote(out_file) + " 2> " + shell_quote(err_file);
    const int rc = std::system(cmd.c_str());
    CmdResult r;
    r.code = rc == -1 ? -1 : (WIFEXITED(rc) ? WEXITSTATUS(rc) : 128 + WTERMSIG(rc));
    r.out = read_file(out_file);
    r.err = read_file(err_file);
    return r;
}

#ifdef COMA_CLI_PATH
inline CmdResult run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), COMA_CLI_PATH);
    return run_cmd(args);
}
#endif

// ---------------------------------------------------------------------------
// RNG text generators

using Rng = std::mt19937_64;

inline int rand_int(Rng& rng, int lo, int hi) {
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

inline bool chance(Rng& rng, double p) {
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

inline std::string rand_word(Rng& rng, int min_len = 1, int max_len = 8) {
    static constexpr char kAlpha[] = "abcdefghijklmnopqrstuvwxyz";
    const int len = rand_int(rng, min_len, max_len);
    std::string w;
    w.reserve(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) w.push_back(kAlpha[rand_int(rng, 0, 25)]);
    return w;
}

inline std::string rand_sentence(Rng& rng, int min_words = 3, int max_words = 10) {
    const int n = rand_int(rng, min_words, max_words);
    std::string s;
    for (int i = 0; i < n; ++i) {
        if (i) s.push_back(' ');
        s += rand_word(rng);
    }
    s.push_back(".!?"[rand_int(rng, 0, 2)]);
    return s;
}

/// Prose with sentence punctuation and varied inter-sentence whitespace.
inline std::string rand_document(Rng& rng, int min_sentences, int max_sentences) {
    const int n = rand_int(rng, min_sentences, max_sentences);
    std::string doc;
    for (int i = 0; i < n; ++i) {
        if (i) doc += chance(rng, 0.2) ? "\n" : " ";
        doc += rand_sentence(rng);
    }
    return doc;
}

/// Exactly `n` single-space-separated words, each one token under both
/// builtin tokenizers. Segmentation over this text cuts exactly on the
/// requested chunk size (a whitespace gap sits at every token boundary).
inline std::string words_document(Rng& rng, std::size_t n) {
    std::string doc;
    for (std::size_t i = 0; i < n; ++i) {
        if (i) doc.push_back(' ');
        doc += rand_word(rng, 1, 6);
    }
    return doc;
}

// ---------------------------------------------------------------------------
// Scripted-reply builders

inline std::string ts_quote(const std::string& s) {
    std::string out = "\"";
    for (char c : s) {
        switch (c) {
            case '\\': out += "\\\\"; break;
            case '"': out += "\\\""; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default: out.push_back(c);
        }
    }
    out.push_back('"');
    return out;
}

inline std::string reply_list(std::string_view key, const std::vector<std::string>& items) {
    std::string out(key);
    if (items.empty()) {
        out += ": []\n";
        return out;
    }
    out += ":\n";
    for (const auto& it : items) out += "  - " + ts_quote(it) + "\n";
    return out;
}

inline std::string plan_reply(const std::vector<std::string>& qs) {
    return reply_list("questions", qs);
}
inline std::string extract_reply(const std::vector<std::string>& fs) {
    return reply_list("gathered_facts", fs);
}
inline std::string infer_reply(const std::vector<std::string>& fs) {
    return reply_list("inferred_facts", fs);
}
inline std::string refine_reply(const std::vector<std::string>& qs) {
    return reply_list("questions", qs);
}
inline std::string manager_reply(const std::string& answer) {
    return "answer: " + ts_quote(answer) + "\n";
}

/// One reply that parses for every structured role: each role picks out its
/// own key and ignores the rest. A single-entry cycling script built from
/// this drives any method at any chunk count without a parse failure.
inline std::string universal_reply() {
    return
        "questions:\n"
        "  - \"q\"\n"
        "gathered_facts:\n"
        "  - \"f\"\n"
        "inferred_facts:\n"
        "  - \"i\"\n"
        "answer: \"stub answer\"\n";
}

/// The full reply sequence for one coma run over `L` chunks, in call order:
/// plan, then extract/infer/refine per chunk, then the manager.
struct ComaScriptSpec {
    std::vector<std::string> plan_questions{"q1"};
    std::vector<std::vector<std::string>> extract_facts;  // per chunk
    std::vector<std::vector<std::string>> infer_facts;    // per chunk
    std::vector<std::vector<std::string>> refine_questions;
    std::string answer = "done";
};

inline std::vector<std::string> coma_script(std::size_t chunks, const ComaScriptSpec& spec) {
    std::vector<std::string> replies;
    replies.push_back(plan_reply(spec.plan_questions));
    for (std::size_t i = 0; i < chunks; ++i) {
        replies.push_back(extract_reply(
            i < spec.extract_facts.size() ? spec.extract_facts[i] : std::vector<std::string>{}));
        replies.push_back(infer_reply(
            i < spec.infer_facts.size() ? spec.infer_facts[i] : std::vector<std::string>{}));
        replies.push_back(refine_reply(i < spec.refine_questions.size()
                                           ? spec.refine_questions[i]
                                           : spec.plan_questions));
    }
    replies.push_back(manager_reply(spec.answer));
    return replies;
}

// ---------------------------------------------------------------------------
// Oracles

/// LCS by memoized recursion (the library uses two-row iterative DP).
inline std::size_t lcs_rec(const std::vector<std::string>& a, const std::vector<std::string>& b,
                           std::size_t i, std::size_t j, std::vector<long long>& memo) {
    if (i == a.size() || j == b.size()) return 0;
    long long& slot = memo[i * (b.size() + 1) + j];
    if (slot >= 0) return static_cast<std::size_t>(slot);
    std::size_t best;
    if (a[i] == b[j]) {
        best = 1 + lcs_rec(a, b, i + 1, j + 1, memo);
    } else {
        best = std::max(lcs_rec(a, b, i + 1, j, memo), lcs_rec(a, b, i, j + 1, memo));
    }
    slot = static_cast<long long>(best);
    return best;
}

inline std::size_t lcs_oracle(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
    std::vector<long long> memo((a.size() + 1) * (b.size() + 1), -1);
    return lcs_rec(a, b, 0, 0, memo);
}

inline double rouge_oracle(const std::string& candidate, const std::vector<std::string>& refs) {
    const auto cand = coma::normalize_tokens(candidate);
    if (cand.empty()) return 0.0;
    double best = 0.0;
    for (const auto& ref : refs) {
        const auto r = coma::normalize_tokens(ref);
        if (r.empty()) continue;
        const auto m = static_cast<double>(lcs_oracle(cand, r));
        if (m <= 0.0) continue;
        best = std::max(best, 2.0 * m / (static_cast<double>(cand.size()) +
                                         static_cast<double>(r.size())));
    }
    return best;
}

/// Eviction by front dropping: remove the oldest gathered fact while the
/// total is over budget and more than one fact remains (the library instead
/// scans for the maximal fitting suffix).
inline coma::Memory prune_oracle(const coma::Memory& m, const coma::MemoryBudget& budget) {
    coma::Memory out = m;
    auto total = [&]() {
        std::uint64_t t = 0;
        for (const auto& f : out.gathered) t += f.tokens.value;
        return t;
    };
    while (out.gathered.size() > 1 && total() > budget.max_tokens.value) {
        out.gathered.erase(out.gathered.begin());
    }
    return out;
}

/// Independent token recount: a per-byte state machine rather than span
/// scanning.
inline std::uint64_t recount_default(std::string_view text) {
    enum class St { gap, word } st = St::gap;
    std::uint64_t n = 0;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
        const bool word = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                          (c >= '0' && c <= '9') || c == '_' || c >= 0x80;
        if (ws) {
            st = St::gap;
        } else if (word) {
            if (st != St::word) ++n;
            st = St::word;
        } else {
            ++n;  // every punctuation byte is its own token
            st = St::gap;
        }
    }
    return n;
}

inline std::uint64_t recount_whitespace(std::string_view text) {
    bool in_tok = false;
    std::uint64_t n = 0;
    for (char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        const bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
        if (ws) {
            in_tok = false;
        } else if (!in_tok) {
            ++n;
            in_tok = true;
        }
    }
    return n;
}

// ---------------------------------------------------------------------------
// Trace comparison

/// Trace lines with the one nondeterministic field (the summary's wall_ms)
/// and the digests that cover it removed. Byte-equal vectors mean the runs
/// were identical everywhere it matters.
inline std::vector<std::string> scrubbed_trace_lines(const std::string& trace_text) {
    std::vector<std::string> out;
    std::istringstream in(trace_text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (!j.is_discarded() && j.value("type", "") == "summary") {
            j.erase("wall_ms");
            j.erase("rd");
            out.push_back(j.dump());
        } else {
            out.push_back(line);
        }
    }
    return out;
}

/// Recompute the gathered-facts token total from a serialized memory
/// snapshot, from scratch: parse the block back, count each fact under the
/// given tokenizer id, and sum.
inline std::uint64_t gathered_total_from_snapshot(const std::string& memory_text,
                                                  const std::string& tokenizer_id) {
    const auto delta = coma::parse_memory_delta(memory_text, {"gathered_facts"});
    if (!delta) return 0;
    std::uint64_t total = 0;
    for (const auto& fact : delta->at("gathered_facts")) {
        total += coma::count_tokens(fact, tokenizer_id).value;
    }
    return total;
}

// ---------------------------------------------------------------------------
// Decorated rendering of a known delta (generation oracle for the parser)

/// Render `delta` into reply text dressed up with the kinds of noise models
/// emit: fences, leading prose, comments, blank lines, flow lists, unquoted
/// items. Parsing the result with the same expected keys must reproduce
/// `delta` exactly; the plant is the ground truth.
inline std::string render_delta_decorated(Rng& rng,
                                          const std::map<std::string, std::vector<std::string>>& delta) {
    static constexpr std::string_view kProse[] = {
        "Here is what I found in this part of the text.",
        "Based on the material so far, my update follows.",
        "Sure! The requested update is below.",
    };
    std::string out;
    if (chance(rng, 0.5)) {
        out += kProse[static_cast<std::size_t>(rand_int(rng, 0, 2))];
        out += "\n";
        if (chance(rng, 0.3)) out += "\n";
    }
    const bool fenced = chance(rng, 0.4);
    if (fenced) out += chance(rng, 0.5) ? "```yaml\n" : "```\n";

    std::vector<const std::string*> keys;
    for (const auto& [k, v] : delta) keys.push_back(&k);
    std::shuffle(keys.begin(), keys.end(), rng);

    for (const auto* kp : keys) {
        const auto& items = delta.at(*kp);
        if (chance(rng, 0.2)) out += "# section follows\n";
        if (items.empty()) {
            out += *kp + ": []\n";
        } else if (items.size() == 1 && chance(rng, 0.3)) {
            // Inline scalar form.
            out += *kp + ": " + ts_quote(items[0]) + "\n";
        } else if (chance(rng, 0.3)) {
            // Flow list, every cell quoted.
            out += *kp + ": [";
            for (std::size_t i = 0; i < items.size(); ++i) {
                if (i) out += ", ";
                out += ts_quote(items[i]);
            }
            out += "]\n";
        } else {
            out += *kp + ":\n";
            for (const auto& item : items) {
                if (chance(rng, 0.15)) out += "\n";
                if (chance(rng, 0.15)) out += "  # noise\n";
                const bool safe_unquoted =
                    !item.empty() && item.find_first_of(":\"#[\n\r\t\\") == std::string::npos &&
                    item.front() != '-' && item.front() != ' ' && item.back() != ' ';
                if (safe_unquoted && chance(rng, 0.4)) {
                    out += "  - " + item + "\n";
                } else {
                    out += "  - " + ts_quote(item) + "\n";
                }
            }
        }
    }
    if (fenced) out += "```\n";
    return out;
}

/// Random item text for the parser fuzz: mixes plain words with characters
/// that force quoting and escaping.
inline std::string rand_item(Rng& rng) {
    std::string s = rand_word(rng, 1, 6);
    const int extras = rand_int(rng, 0, 3);
    for (int i = 0; i < extras; ++i) {
        switch (rand_int(rng, 0, 6)) {
            case 0: s += " " + rand_word(rng); break;
            case 1: s += ", " + rand_word(rng); break;
            case 2: s += " \"" + rand_word(rng) + "\""; break;
            case 3: s += "\\" + rand_word(rng, 1, 2); break;
            case 4: s += "\t" + rand_word(rng); break;
            case 5: s += ": " + rand_word(rng); break;
            case 6: s += " (" + rand_word(rng) + ")"; break;
        }
    }
    return s;
}

}  // namespace ts
