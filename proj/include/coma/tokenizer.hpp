#pragma once

// Deterministic rule-based tokenizers behind string ids. Token counts are the
// unit of every budget in the engine (chunk size, memory budget, truncation
// limit), so the rules below are fixed bit-exactly and never depend on a
// provider.
//
// "default" tokenizer:
//   - whitespace bytes (' ', '\t', '\n', '\r', '\f', '\v') separate tokens and
//     are never part of one;
//   - a maximal run of word bytes (ASCII [A-Za-z0-9_] or any byte >= 0x80,
//     which covers multi-byte UTF-8 sequences) is one token;
//   - every other byte (ASCII punctuation and symbols) is one token on its own.
//
// "whitespace" tokenizer: a maximal run of non-whitespace bytes is one token.
//
// Both tokenizers are additive across any whitespace boundary: splitting a
// text at a position where one side ends in whitespace never changes the
// total count.

#include <cstddef>
#include <cstdint>
#include <compare>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "coma/errors.hpp"

namespace coma {

/// Count of tokens under some tokenizer. Strong type so byte sizes and token
/// budgets cannot be mixed up.
struct TokenCount {
    std::uint64_t value = 0;

    constexpr TokenCount() = default;
    constexpr explicit TokenCount(std::uint64_t v) : value(v) {}

    auto operator<=>(const TokenCount&) const = default;

    constexpr TokenCount operator+(TokenCount o) const { return TokenCount{value + o.value}; }
    constexpr TokenCount operator-(TokenCount o) const {
        return TokenCount{value >= o.value ? value - o.value : 0};
    }
    TokenCount& operator+=(TokenCount o) {
        value += o.value;
        return *this;
    }
};

/// Byte range [begin, end) of one token within the source text.
struct TokenSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

using TokenizerId = std::string;

inline constexpr std::string_view kDefaultTokenizer = "default";
inline constexpr std::string_view kWhitespaceTokenizer = "whitespace";

namespace detail {

inline bool is_ws_byte(unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
           c == '_' || c >= 0x80;
}

inline std::vector<TokenSpan> default_spans(std::string_view text) {
    std::vector<TokenSpan> spans;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        const auto c = static_cast<unsigned char>(text[i]);
        if (is_ws_byte(c)) {
            ++i;
            continue;
        }
        if (is_word_byte(c)) {
            std::size_t j = i + 1;
            while (j < n && is_word_byte(static_cast<unsigned char>(text[j]))) ++j;
            spans.push_back({i, j});
            i = j;
        } else {
            spans.push_back({i, i + 1});
            ++i;
        }
    }
    return spans;
}

inline std::vector<TokenSpan> whitespace_spans(std::string_view text) {
    std::vector<TokenSpan> spans;
    std::size_t i = 0;
    const std::size_t n = text.size();
    while (i < n) {
        if (is_ws_byte(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j < n && !is_ws_byte(static_cast<unsigned char>(text[j]))) ++j;
        spans.push_back({i, j});
        i = j;
    }
    return spans;
}

}  // namespace detail

using TokenSpanFn = std::function<std::vector<TokenSpan>(std::string_view)>;

/// A registered tokenizer: id plus its span function. Values are cheap to
/// copy and safe to use from any thread.
struct Tokenizer {
    TokenizerId id;
    TokenSpanFn spans_fn;

    std::vector<TokenSpan> spans(std::string_view text) const { return spans_fn(text); }
    TokenCount count(std::string_view text) const { return TokenCount{spans_fn(text).size()}; }
};

namespace detail {
inline std::map<TokenizerId, TokenSpanFn>& tokenizer_registry() {
    static std::map<TokenizerId, TokenSpanFn> reg = {
        {"default", default_spans},
        {"whitespace", whitespace_spans},
    };
    return reg;
}
}  // namespace detail

/// Register a custom tokenizer (replaces an existing id). Intended for
/// experiments; the two builtins cover the shipped configurations.
inline void register_tokenizer(const TokenizerId& id, TokenSpanFn fn) {
    detail::tokenizer_registry()[id] = std::move(fn);
}

inline Tokenizer tokenizer(const TokenizerId& id) {
    const auto& reg = detail::tokenizer_registry();
    auto it = reg.find(id);
    if (it == reg.end()) throw UnknownTokenizerError(id);
    return Tokenizer{id, it->second};
}

inline TokenCount count_tokens(std::string_view text,
                               const TokenizerId& id = TokenizerId(kDefaultTokenizer)) {
    return tokenizer(id).count(text);
}

}  // namespace coma
