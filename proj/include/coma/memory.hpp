#pragma once

// The centralized structured memory: unresolved questions, gathered facts,
// inferred facts, and the answer (empty until synthesis). Values are
// immutable snapshots; every operation returns a new Memory.
//
// Budget rules:
//   - only gathered facts are budgeted; inferred facts and questions are not;
//   - facts are atomic: pruning evicts whole facts, oldest (lowest seq) first,
//     keeping the maximal suffix that fits;
//   - a single newest fact larger than the whole budget is kept alone (and
//     flagged) rather than leaving the memory empty.
//
// Deduplication on append is exact-string after whitespace normalization
// (trim plus collapse of internal whitespace runs); no semantic matching.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coma/tokenizer.hpp"

namespace coma {

enum class QuestionOrigin { planner, refine };

inline std::string_view to_string(QuestionOrigin o) {
    return o == QuestionOrigin::planner ? "planner" : "refine";
}

struct Question {
    std::string text;
    QuestionOrigin origin = QuestionOrigin::planner;
    std::uint64_t seq = 0;

    bool operator==(const Question&) const = default;
};

struct Fact {
    std::string text;
    int source_chunk = -1;  // -1: no chunk provenance (e.g. inferred facts)
    std::uint64_t seq = 0;
    TokenCount tokens;

    bool operator==(const Fact&) const = default;
};

struct Memory {
    std::vector<Question> questions;
    std::vector<Fact> gathered;
    std::vector<Fact> inferred;
    std::string answer;  // stays empty until the manager synthesizes
    std::uint64_t next_seq = 0;

    bool operator==(const Memory&) const = default;
};

/// Gathered-fact token cap, expressed both absolutely and as a fraction of
/// the chunk size (8000 of 64000 in the shipped defaults).
struct MemoryBudget {
    TokenCount max_tokens;
    double k_fraction = 0.0;

    static MemoryBudget from_tokens(TokenCount max_tokens, TokenCount chunk_size) {
        MemoryBudget b;
        b.max_tokens = max_tokens;
        b.k_fraction = chunk_size.value > 0
                           ? static_cast<double>(max_tokens.value) / static_cast<double>(chunk_size.value)
                           : 0.0;
        return b;
    }

    static MemoryBudget from_fraction(double k, TokenCount chunk_size) {
        MemoryBudget b;
        b.k_fraction = k;
        b.max_tokens = TokenCount{static_cast<std::uint64_t>(
            k * static_cast<double>(chunk_size.value) + 0.5)};
        return b;
    }

    bool operator==(const MemoryBudget&) const = default;
};

/// Trim plus collapse internal whitespace runs to single spaces. This is the
/// string under which facts and questions are compared for dedup.
inline std::string normalize_ws(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char c : s) {
        if (detail::is_ws_byte(static_cast<unsigned char>(c))) {
            if (!out.empty()) pending_space = true;
            continue;
        }
        if (pending_space) {
            out.push_back(' ');
            pending_space = false;
        }
        out.push_back(c);
    }
    return out;
}

inline Memory new_memory(std::vector<Question> questions) {
    Memory m;
    std::uint64_t next = 0;
    for (const auto& q : questions) next = std::max(next, q.seq + 1);
    m.questions = std::move(questions);
    m.next_seq = next;
    return m;
}

/// Convenience for seeding planner questions from plain strings.
inline Memory new_memory(const std::vector<std::string>& question_texts) {
    Memory m;
    for (const auto& t : question_texts) {
        if (normalize_ws(t).empty()) continue;
        m.questions.push_back(Question{t, QuestionOrigin::planner, m.next_seq++});
    }
    return m;
}

inline TokenCount gathered_tokens(const Memory& m) {
    TokenCount total;
    for (const auto& f : m.gathered) total += f.tokens;
    return total;
}

struct PruneStats {
    std::size_t evicted = 0;
    bool oversized_kept = false;  // newest fact alone exceeds the budget
};

inline Memory prune(const Memory& m, const MemoryBudget& budget, PruneStats* stats = nullptr) {
    if (stats) *stats = PruneStats{};
    Memory out = m;
    if (m.gathered.empty()) return out;

    // Maximal suffix (newest facts) whose token total fits the budget.
    std::uint64_t sum = 0;
    std::size_t keep_from = m.gathered.size();
    for (std::size_t i = m.gathered.size(); i-- > 0;) {
        if (sum + m.gathered[i].tokens.value > budget.max_tokens.value) break;
        sum += m.gathered[i].tokens.value;
        keep_from = i;
    }

    if (keep_from == m.gathered.size()) {
        // Even the newest fact alone is over budget; keep it rather than
        // emptying the memory.
        keep_from = m.gathered.size() - 1;
        if (stats) stats->oversized_kept = true;
    }
    if (stats) stats->evicted = keep_from;
    out.gathered.assign(m.gathered.begin() + static_cast<std::ptrdiff_t>(keep_from),
                        m.gathered.end());
    return out;
}

namespace detail {

inline bool contains_normalized(const std::vector<Fact>& facts, const std::string& norm) {
    for (const auto& f : facts) {
        if (normalize_ws(f.text) == norm) return true;
    }
    return false;
}

}  // namespace detail

/// Set-union append: items already present (after whitespace normalization)
/// are skipped, as are empty items. New facts get seq numbers in arrival
/// order and their token count under `tok`.
inline Memory append_gathered(const Memory& m, const std::vector<std::string>& items,
                              int source_chunk, const Tokenizer& tok) {
    Memory out = m;
    for (const auto& item : items) {
        const std::string norm = normalize_ws(item);
        if (norm.empty()) continue;
        if (detail::contains_normalized(out.gathered, norm)) continue;
        out.gathered.push_back(Fact{item, source_chunk, out.next_seq++, tok.count(item)});
    }
    return out;
}

inline Memory append_inferred(const Memory& m, const std::vector<std::string>& items,
                              const Tokenizer& tok) {
    Memory out = m;
    for (const auto& item : items) {
        const std::string norm = normalize_ws(item);
        if (norm.empty()) continue;
        if (detail::contains_normalized(out.inferred, norm)) continue;
        out.inferred.push_back(Fact{item, -1, out.next_seq++, tok.count(item)});
    }
    return out;
}

/// Swap the whole question list (the refine phase returns the complete
/// remaining set). Facts are untouched.
inline Memory replace_questions(const Memory& m, std::vector<Question> questions) {
    Memory out = m;
    for (auto& q : questions) {
        if (q.seq >= out.next_seq) out.next_seq = q.seq + 1;
    }
    out.questions = std::move(questions);
    return out;
}

/// Build the replacement list for refine: a returned text that matches an
/// existing question (after whitespace normalization) keeps its record;
/// anything else becomes a new refine-origin question with a fresh seq.
/// The question set stays duplicate-free.
inline std::vector<Question> rebuild_questions(const Memory& m,
                                               const std::vector<std::string>& texts,
                                               std::uint64_t& next_seq) {
    std::vector<Question> out;
    std::vector<std::string> seen;
    for (const auto& t : texts) {
        const std::string norm = normalize_ws(t);
        if (norm.empty()) continue;
        bool dup = false;
        for (const auto& s : seen) {
            if (s == norm) {
                dup = true;
                break;
            }
        }
        if (dup) continue;
        seen.push_back(norm);
        bool matched = false;
        for (const auto& q : m.questions) {
            if (normalize_ws(q.text) == norm) {
                out.push_back(q);
                matched = true;
                break;
            }
        }
        if (!matched) out.push_back(Question{t, QuestionOrigin::refine, next_seq++});
    }
    return out;
}

}  // namespace coma
