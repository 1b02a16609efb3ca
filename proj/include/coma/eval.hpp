#pragma once

// Scoring and dataset plumbing for the benchmark harness.
//
// Text normalization (applied to both sides of every comparison, in this
// exact order):
//   1. ASCII lowercase
//   2. ASCII punctuation -> space (bytes >= 0x80 pass through)
//   3. collapse whitespace runs, trim
//   4. (exact match only) drop leading articles "a" / "an" / "the", repeatedly
//
// ROUGE scores keep articles — they are ordinary tokens there ("the cat sat"
// vs "the cat" is P=2/3, R=1, F1=0.8) — while exact_match compares the
// article-stripped form. rouge_f1 is ROUGE-L (LCS-based) F1 over normalized
// token lists, maximized over the references; rouge1_f1 is the
// unigram-overlap variant. exact_match adds a multiple-choice resolver that
// maps a free-text candidate onto the unique option it names, by letter label
// or by option text; naming two or more options is scored 0 and flagged
// ambiguous.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "coma/errors.hpp"
#include "coma/tokenizer.hpp"

namespace coma {

// ---------------------------------------------------------------------------
// Normalization

/// Lowercase, punctuation to spaces, collapsed whitespace. Articles kept.
inline std::string normalize_text(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char ch : s) {
        const auto c = static_cast<unsigned char>(ch);
        char mapped;
        if (c >= 'A' && c <= 'Z') {
            mapped = static_cast<char>(c - 'A' + 'a');
        } else if (c >= 0x80 || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9')) {
            mapped = ch;
        } else {
            // ASCII punctuation and whitespace both separate words.
            pending_space = true;
            continue;
        }
        if (pending_space && !out.empty()) out.push_back(' ');
        pending_space = false;
        out.push_back(mapped);
    }
    return out;
}

/// normalize_text plus leading-article removal: the form exact_match compares.
inline std::string normalize_answer(std::string_view s) {
    std::string out = normalize_text(s);
    for (;;) {
        std::string_view v = out;
        std::string_view article;
        for (std::string_view a : {"a ", "an ", "the "}) {
            if (v.substr(0, a.size()) == a) {
                article = a;
                break;
            }
        }
        if (article.empty()) {
            if (v == "a" || v == "an" || v == "the") return std::string();
            break;
        }
        out.erase(0, article.size());
    }
    return out;
}

inline std::vector<std::string> normalize_tokens(std::string_view s) {
    const std::string norm = normalize_text(s);
    std::vector<std::string> toks;
    std::size_t start = 0;
    while (start < norm.size()) {
        const std::size_t sp = norm.find(' ', start);
        if (sp == std::string::npos) {
            toks.push_back(norm.substr(start));
            break;
        }
        toks.push_back(norm.substr(start, sp - start));
        start = sp + 1;
    }
    return toks;
}

// ---------------------------------------------------------------------------
// ROUGE

namespace detail {

/// Longest common subsequence length, iterative DP in O(|a|·|b|).
inline std::size_t lcs_length(const std::vector<std::string>& a,
                              const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    for (std::size_t i = 1; i <= a.size(); ++i) {
        for (std::size_t j = 1; j <= b.size(); ++j) {
            cur[j] = (a[i - 1] == b[j - 1]) ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
        }
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

inline double f1(double match, double cand_len, double ref_len) {
    if (match <= 0.0 || cand_len <= 0.0 || ref_len <= 0.0) return 0.0;
    // Harmonic mean of P = match/cand_len and R = match/ref_len, in the
    // algebraically reduced form (one rounding instead of three).
    return 2.0 * match / (cand_len + ref_len);
}

}  // namespace detail

/// ROUGE-L F1, maximized over references. Empty candidate scores 0.
inline double rouge_f1(const std::string& candidate, const std::vector<std::string>& references) {
    const auto cand = normalize_tokens(candidate);
    if (cand.empty()) return 0.0;
    double best = 0.0;
    for (const auto& ref : references) {
        const auto r = normalize_tokens(ref);
        const auto lcs = static_cast<double>(detail::lcs_length(cand, r));
        best = std::max(best, detail::f1(lcs, static_cast<double>(cand.size()),
                                         static_cast<double>(r.size())));
    }
    return best;
}

/// ROUGE-1 F1 (clipped unigram counts), maximized over references.
inline double rouge1_f1(const std::string& candidate,
                        const std::vector<std::string>& references) {
    const auto cand = normalize_tokens(candidate);
    if (cand.empty()) return 0.0;
    std::map<std::string, std::size_t> cand_counts;
    for (const auto& t : cand) ++cand_counts[t];
    double best = 0.0;
    for (const auto& ref : references) {
        const auto r = normalize_tokens(ref);
        std::map<std::string, std::size_t> ref_counts;
        for (const auto& t : r) ++ref_counts[t];
        std::size_t match = 0;
        for (const auto& [tokv, n] : cand_counts) {
            auto it = ref_counts.find(tokv);
            if (it != ref_counts.end()) match += std::min(n, it->second);
        }
        best = std::max(best, detail::f1(static_cast<double>(match),
                                         static_cast<double>(cand.size()),
                                         static_cast<double>(r.size())));
    }
    return best;
}

// ---------------------------------------------------------------------------
// Exact match with multiple-choice resolution

struct EmOutcome {
    int score = 0;
    bool ambiguous = false;          // candidate named two or more options
    int resolved_option = -1;        // index into options when resolution succeeded
};

namespace detail {

/// Does the candidate name option letter `letter` (A, B, …)? A standalone
/// letter counts only in answer-like positions — at the start or end of the
/// text or flanked by option punctuation — so a mid-sentence article
/// ("saw a man") does not trigger it. A leading bare letter always counts:
/// answers conventionally open with the chosen label.
inline bool hits_letter(std::string_view cand, char letter) {
    const auto is_alnum = [](char c) {
        const auto u = static_cast<unsigned char>(c);
        return (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || (u >= '0' && u <= '9');
    };
    const auto lower = [](char c) {
        return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
    };
    // Trim outer whitespace first so "B " still counts as ending with B.
    std::size_t b = 0, e = cand.size();
    while (b < e && is_ws_byte(static_cast<unsigned char>(cand[b]))) ++b;
    while (e > b && is_ws_byte(static_cast<unsigned char>(cand[e - 1]))) --e;
    cand = cand.substr(b, e - b);

    for (std::size_t i = 0; i < cand.size(); ++i) {
        if (lower(cand[i]) != lower(letter)) continue;
        const bool standalone = (i == 0 || !is_alnum(cand[i - 1])) &&
                                (i + 1 == cand.size() || !is_alnum(cand[i + 1]));
        if (!standalone) continue;
        const char prev = i > 0 ? cand[i - 1] : '\0';
        const char next = i + 1 < cand.size() ? cand[i + 1] : '\0';
        const bool tail_punct =
            next == ')' || next == '.' || next == ':' || next == ',' || next == ']';
        if (i == 0) return true;                        // "B) …", "B is right", "B"
        if (next == '\0' && prev == ' ') return true;   // "the answer is B"
        if (tail_punct) return true;                    // "option B."
        if (prev == '(' || prev == '[') return true;    // "(B)"
    }
    return false;
}

/// Word-boundary containment of `needle` in `hay`, both already normalized.
inline bool contains_word_bounded(const std::string& hay, const std::string& needle) {
    if (needle.empty()) return false;
    std::size_t pos = 0;
    while ((pos = hay.find(needle, pos)) != std::string::npos) {
        const bool left_ok = pos == 0 || hay[pos - 1] == ' ';
        const std::size_t end = pos + needle.size();
        const bool right_ok = end == hay.size() || hay[end] == ' ';
        if (left_ok && right_ok) return true;
        ++pos;
    }
    return false;
}

}  // namespace detail

/// Score 1 iff the candidate, after normalization (and option resolution for
/// multiple choice), equals the gold answer.
inline EmOutcome exact_match(const std::string& candidate, const std::string& gold,
                             const std::optional<std::vector<std::string>>& options = {}) {
    EmOutcome out;
    const std::string cand_norm = normalize_answer(candidate);
    const std::string gold_norm = normalize_answer(gold);

    if (options && !options->empty()) {
        std::set<std::size_t> hits;
        for (std::size_t i = 0; i < options->size(); ++i) {
            const char letter = static_cast<char>('A' + i);
            if (detail::hits_letter(candidate, letter)) {
                hits.insert(i);
                continue;
            }
            if (detail::contains_word_bounded(cand_norm, normalize_answer((*options)[i]))) {
                hits.insert(i);
            }
        }
        if (hits.size() >= 2) {
            out.ambiguous = true;
            return out;  // score 0
        }
        if (hits.size() == 1) {
            out.resolved_option = static_cast<int>(*hits.begin());
            out.score = normalize_answer((*options)[*hits.begin()]) == gold_norm ? 1 : 0;
            return out;
        }
        // No option named: fall through to the plain comparison.
    }

    out.score = cand_norm == gold_norm ? 1 : 0;
    return out;
}

// ---------------------------------------------------------------------------
// Datasets

struct QaExample {
    std::string id;
    std::string context;
    std::string question;
    std::vector<std::string> gold_answers;
    std::optional<std::vector<std::string>> options;
    std::map<std::string, std::string> meta;
};

namespace detail {

inline std::optional<QaExample> parse_example(const nlohmann::json& j, std::string* why) {
    if (!j.is_object()) {
        if (why) *why = "not a JSON object";
        return std::nullopt;
    }
    QaExample ex;
    if (j.contains("id")) {
        ex.id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    }
    if (!j.contains("context") || !j["context"].is_string()) {
        if (why) *why = "missing string field 'context'";
        return std::nullopt;
    }
    ex.context = j["context"].get<std::string>();

    const char* qkey = j.contains("question") ? "question" : (j.contains("input") ? "input" : "");
    if (qkey[0] == '\0' || !j[qkey].is_string()) {
        if (why) *why = "missing string field 'question' (or 'input')";
        return std::nullopt;
    }
    ex.question = j[qkey].get<std::string>();

    if (!j.contains("answers")) {
        if (why) *why = "missing field 'answers'";
        return std::nullopt;
    }
    if (j["answers"].is_string()) {
        ex.gold_answers.push_back(j["answers"].get<std::string>());
    } else if (j["answers"].is_array()) {
        for (const auto& a : j["answers"]) {
            if (!a.is_string()) {
                if (why) *why = "'answers' must contain strings";
                return std::nullopt;
            }
            ex.gold_answers.push_back(a.get<std::string>());
        }
    }
    if (ex.gold_answers.empty()) {
        if (why) *why = "no gold answers";
        return std::nullopt;
    }

    if (j.contains("options")) {
        if (!j["options"].is_array()) {
            if (why) *why = "'options' must be an array";
            return std::nullopt;
        }
        std::vector<std::string> opts;
        for (const auto& o : j["options"]) {
            if (!o.is_string()) {
                if (why) *why = "'options' must contain strings";
                return std::nullopt;
            }
            opts.push_back(o.get<std::string>());
        }
        // Exactly one option must be a gold answer, or the example is
        // unscorable as multiple choice.
        std::size_t golds_in_options = 0;
        for (const auto& o : opts) {
            for (const auto& g : ex.gold_answers) {
                if (normalize_answer(o) == normalize_answer(g)) {
                    ++golds_in_options;
                    break;
                }
            }
        }
        if (golds_in_options != 1) {
            if (why) {
                *why = "options must contain exactly one gold answer (found " +
                       std::to_string(golds_in_options) + ")";
            }
            return std::nullopt;
        }
        ex.options = std::move(opts);
    }

    for (const auto& [key, val] : j.items()) {
        if (key == "id" || key == "context" || key == "question" || key == "input" ||
            key == "answers" || key == "options") {
            continue;
        }
        ex.meta[key] = val.is_string() ? val.get<std::string>() : val.dump();
    }
    return ex;
}

}  // namespace detail

/// Stream a JSON-lines dataset. Malformed rows abort with their line numbers
/// unless skip_bad is set, in which case they are skipped and reported
/// through bad_lines (when given).
inline std::vector<QaExample> load_dataset(const std::string& path,
                                           const std::string& format = "jsonl",
                                           bool skip_bad = false,
                                           std::vector<std::size_t>* bad_lines = nullptr) {
    if (format != "jsonl") throw DatasetError("unsupported dataset format: " + format, {});
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open dataset: " + path, {});

    std::vector<QaExample> examples;
    std::vector<std::size_t> bad;
    std::string first_why;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::string why;
        auto j = nlohmann::json::parse(line, nullptr, false);
        std::optional<QaExample> ex;
        if (j.is_discarded()) {
            why = "invalid JSON";
        } else {
            ex = detail::parse_example(j, &why);
        }
        if (!ex) {
            bad.push_back(lineno);
            if (first_why.empty()) first_why = why;
            continue;
        }
        if (ex->id.empty()) ex->id = "line-" + std::to_string(lineno);
        examples.push_back(std::move(*ex));
    }
    if (bad_lines) *bad_lines = bad;
    if (!bad.empty() && !skip_bad) {
        throw DatasetError("dataset " + path + ": " + std::to_string(bad.size()) +
                               " malformed row(s), first at line " + std::to_string(bad[0]) +
                               " (" + first_why + "); pass --skip-bad to ignore",
                           bad);
    }
    return examples;
}

/// Keep only examples whose context is at least `min_tokens` long under
/// `tok` — the long-context filter applied before benchmarking.
inline std::vector<QaExample> filter_min_context(const std::vector<QaExample>& examples,
                                                 TokenCount min_tokens, const Tokenizer& tok) {
    std::vector<QaExample> out;
    for (const auto& ex : examples) {
        if (tok.count(ex.context) >= min_tokens) out.push_back(ex);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Score reports

struct ScoreRow {
    std::string id;
    std::string method;
    double score = 0.0;      // value of the selected metric
    double rouge_l = 0.0;
    double rouge_1 = 0.0;
    int em = -1;             // -1: EM not applicable (no options, metric != em)
    bool ambiguous = false;
    std::uint64_t calls = 0;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
    std::uint64_t latency_ms = 0;

    bool operator==(const ScoreRow&) const = default;
};

struct MethodAggregate {
    std::string method;
    std::size_t examples = 0;
    double mean_score = 0.0;
    std::uint64_t total_calls = 0;
    std::uint64_t total_prompt_tokens = 0;
    std::uint64_t total_completion_tokens = 0;
    std::uint64_t total_latency_ms = 0;

    bool operator==(const MethodAggregate&) const = default;
};

struct ScoreReport {
    std::string metric = "rouge_l";  // rouge_l | rouge_1 | em
    nlohmann::json config_echo;
    std::vector<ScoreRow> rows;
    std::vector<MethodAggregate> aggregates;
};

/// Deterministic aggregation: rows sorted by (method, id), one aggregate per
/// method in method order.
inline ScoreReport aggregate(std::vector<ScoreRow> rows, const std::string& metric = "rouge_l",
                             nlohmann::json config_echo = nlohmann::json::object()) {
    std::sort(rows.begin(), rows.end(), [](const ScoreRow& a, const ScoreRow& b) {
        return a.method != b.method ? a.method < b.method : a.id < b.id;
    });
    std::map<std::string, MethodAggregate> by_method;
    for (const auto& r : rows) {
        auto& agg = by_method[r.method];
        agg.method = r.method;
        agg.examples += 1;
        agg.mean_score += r.score;  // sum for now
        agg.total_calls += r.calls;
        agg.total_prompt_tokens += r.prompt_tokens;
        agg.total_completion_tokens += r.completion_tokens;
        agg.total_latency_ms += r.latency_ms;
    }
    ScoreReport report;
    report.metric = metric;
    report.config_echo = std::move(config_echo);
    report.rows = std::move(rows);
    for (auto& [name, agg] : by_method) {
        if (agg.examples > 0) agg.mean_score /= static_cast<double>(agg.examples);
        report.aggregates.push_back(agg);
    }
    return report;
}

inline nlohmann::json to_json(const ScoreRow& r) {
    return nlohmann::json{{"id", r.id},
                          {"method", r.method},
                          {"score", r.score},
                          {"rouge_l", r.rouge_l},
                          {"rouge_1", r.rouge_1},
                          {"em", r.em},
                          {"ambiguous", r.ambiguous},
                          {"calls", r.calls},
                          {"prompt_tokens", r.prompt_tokens},
                          {"completion_tokens", r.completion_tokens},
                          {"latency_ms", r.latency_ms}};
}

inline ScoreRow score_row_from_json(const nlohmann::json& j) {
    ScoreRow r;
    r.id = j.value("id", "");
    r.method = j.value("method", "");
    r.score = j.value("score", 0.0);
    r.rouge_l = j.value("rouge_l", 0.0);
    r.rouge_1 = j.value("rouge_1", 0.0);
    r.em = j.value("em", -1);
    r.ambiguous = j.value("ambiguous", false);
    r.calls = j.value("calls", std::uint64_t{0});
    r.prompt_tokens = j.value("prompt_tokens", std::uint64_t{0});
    r.completion_tokens = j.value("completion_tokens", std::uint64_t{0});
    r.latency_ms = j.value("latency_ms", std::uint64_t{0});
    return r;
}

inline nlohmann::json to_json(const ScoreReport& report) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : report.rows) rows.push_back(to_json(r));
    nlohmann::json aggs = nlohmann::json::array();
    for (const auto& a : report.aggregates) {
        aggs.push_back(nlohmann::json{{"method", a.method},
                                      {"examples", a.examples},
                                      {"mean_score", a.mean_score},
                                      {"total_calls", a.total_calls},
                                      {"total_prompt_tokens", a.total_prompt_tokens},
                                      {"total_completion_tokens", a.total_completion_tokens},
                                      {"total_latency_ms", a.total_latency_ms}});
    }
    return nlohmann::json{{"metric", report.metric},
                          {"config", report.config_echo},
                          {"rows", rows},
                          {"aggregates", aggs}};
}

inline ScoreReport report_from_json(const nlohmann::json& j) {
    ScoreReport report;
    report.metric = j.value("metric", "rouge_l");
    report.config_echo = j.value("config", nlohmann::json::object());
    if (j.contains("rows")) {
        for (const auto& r : j["rows"]) report.rows.push_back(score_row_from_json(r));
    }
    if (j.contains("aggregates")) {
        for (const auto& a : j["aggregates"]) {
            MethodAggregate agg;
            agg.method = a.value("method", "");
            agg.examples = a.value("examples", std::size_t{0});
            agg.mean_score = a.value("mean_score", 0.0);
            agg.total_calls = a.value("total_calls", std::uint64_t{0});
            agg.total_prompt_tokens = a.value("total_prompt_tokens", std::uint64_t{0});
            agg.total_completion_tokens = a.value("total_completion_tokens", std::uint64_t{0});
            agg.total_latency_ms = a.value("total_latency_ms", std::uint64_t{0});
            report.aggregates.push_back(agg);
        }
    }
    return report;
}

/// Aligned plain-text summary table: one line per method.
inline std::string render_table(const ScoreReport& report) {
    std::ostringstream os;
    os << "metric: " << report.metric << "\n";
    const char* hdr_fmt = "  %-8s %8s %12s %10s %14s %14s\n";
    char buf[256];
    std::snprintf(buf, sizeof buf, hdr_fmt, "method", "examples", "mean_score", "calls",
                  "prompt_toks", "completion");
    os << buf;
    for (const auto& a : report.aggregates) {
        std::snprintf(buf, sizeof buf, "  %-8s %8zu %12.4f %10llu %14llu %14llu\n",
                      a.method.c_str(), a.examples, a.mean_score,
                      static_cast<unsigned long long>(a.total_calls),
                      static_cast<unsigned long long>(a.total_prompt_tokens),
                      static_cast<unsigned long long>(a.total_completion_tokens));
        os << buf;
    }
    return os.str();
}

}  // namespace coma
