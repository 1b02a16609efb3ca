#pragma once

// Text form of the memory as it appears inside agent prompts and traces, and
// the defensive parser for model replies.
//
// Serialized layout, byte-deterministic for equal memories:
//
//   questions:
//     - "..."
//   gathered_facts: []
//   inferred_facts:
//     - "..."
//   answer: ""
//
// The four keys always appear, in this order. Empty sequences are written as
// `[]`; the answer is always a quoted scalar. Strings are double-quoted with
// \\ \" \n \r \t escapes.
//
// parse_memory_delta() accepts the same shape back from a model, tolerating
// fenced code blocks, leading prose, comment lines, blank lines inside
// blocks, unquoted items, and `[...]` flow lists. It fails (nullopt) only
// when none of the expected keys is found after cleanup; the caller decides
// the retry policy.

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "coma/memory.hpp"

namespace coma {

using MemoryDelta = std::map<std::string, std::vector<std::string>>;

namespace detail {

inline std::string quote_scalar(std::string_view s) {
    std::string out;
    out.reserve(s.size() + 2);
    out.push_back('"');
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

inline void emit_sequence(std::string& out, std::string_view key,
                          const std::vector<std::string>& items) {
    out.append(key);
    if (items.empty()) {
        out.append(": []\n");
        return;
    }
    out.append(":\n");
    for (const auto& item : items) {
        out.append("  - ");
        out.append(quote_scalar(item));
        out.push_back('\n');
    }
}

inline std::string_view trim_view(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_ws_byte(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && is_ws_byte(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// If `s` is a single double-quoted string (possibly followed by whitespace or
// a comment), return its unescaped content; otherwise nullopt.
inline std::optional<std::string> try_unquote(std::string_view s) {
    s = trim_view(s);
    if (s.size() < 2 || s.front() != '"') return std::nullopt;
    std::string out;
    std::size_t i = 1;
    for (; i < s.size(); ++i) {
        const char c = s[i];
        if (c == '\\' && i + 1 < s.size()) {
            const char e = s[++i];
            switch (e) {
                case 'n': out.push_back('\n'); break;
                case 'r': out.push_back('\r'); break;
                case 't': out.push_back('\t'); break;
                case '"': out.push_back('"'); break;
                case '\\': out.push_back('\\'); break;
                default:
                    out.push_back('\\');
                    out.push_back(e);
            }
            continue;
        }
        if (c == '"') break;
        out.push_back(c);
    }
    if (i >= s.size()) return std::nullopt;  // no closing quote
    const std::string_view rest = trim_view(s.substr(i + 1));
    if (!rest.empty() && rest.front() != '#') return std::nullopt;
    return out;
}

// One scalar cell: quoted string if it parses as one, raw trimmed text
// otherwise.
inline std::string parse_scalar(std::string_view s) {
    if (auto q = try_unquote(s)) return *q;
    return std::string(trim_view(s));
}

// `[]` or `["a", "b"]`; nullopt when `s` is not a flow list.
inline std::optional<std::vector<std::string>> try_parse_flow_list(std::string_view s) {
    s = trim_view(s);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') return std::nullopt;
    std::vector<std::string> items;
    std::string_view inner = trim_view(s.substr(1, s.size() - 2));
    if (inner.empty()) return items;
    // Split on commas outside quotes.
    std::string cur;
    bool in_quote = false;
    for (std::size_t i = 0; i < inner.size(); ++i) {
        const char c = inner[i];
        if (c == '\\' && in_quote && i + 1 < inner.size()) {
            cur.push_back(c);
            cur.push_back(inner[++i]);
            continue;
        }
        if (c == '"') in_quote = !in_quote;
        if (c == ',' && !in_quote) {
            items.push_back(parse_scalar(cur));
            cur.clear();
            continue;
        }
        cur.push_back(c);
    }
    items.push_back(parse_scalar(cur));
    return items;
}

// Does the line look like `key:` or `key: value`? Returns the key.
inline std::optional<std::string> match_key_line(std::string_view line, std::string_view* rest) {
    std::string_view s = trim_view(line);
    std::size_t i = 0;
    while (i < s.size() &&
           (is_word_byte(static_cast<unsigned char>(s[i])) || s[i] == '-')) {
        ++i;
    }
    if (i == 0 || i >= s.size() || s[i] != ':') return std::nullopt;
    if (i + 1 < s.size() && !is_ws_byte(static_cast<unsigned char>(s[i + 1]))) {
        // "key:value" without a space: a URL or timestamp, not a mapping key.
        return std::nullopt;
    }
    if (rest) *rest = trim_view(s.substr(i + 1));
    return std::string(s.substr(0, i));
}

inline std::vector<std::string_view> split_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const std::size_t nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

}  // namespace detail

/// Serialize a memory to the four-key block format above.
inline std::string serialize_memory(const Memory& m) {
    std::string out;
    std::vector<std::string> qs, gs, is;
    qs.reserve(m.questions.size());
    for (const auto& q : m.questions) qs.push_back(q.text);
    gs.reserve(m.gathered.size());
    for (const auto& f : m.gathered) gs.push_back(f.text);
    is.reserve(m.inferred.size());
    for (const auto& f : m.inferred) is.push_back(f.text);

    detail::emit_sequence(out, "questions", qs);
    detail::emit_sequence(out, "gathered_facts", gs);
    detail::emit_sequence(out, "inferred_facts", is);
    out.append("answer: ");
    out.append(detail::quote_scalar(m.answer));
    out.push_back('\n');
    return out;
}

/// Parse the lists found for each expected key out of a model reply.
/// Missing keys map to empty lists. Returns nullopt when no expected key is
/// present at all after stripping fences and leading prose.
inline std::optional<MemoryDelta> parse_memory_delta(std::string_view raw,
                                                     const std::set<std::string>& expected_keys) {
    auto lines = detail::split_lines(raw);

    // Drop fence lines wholesale; content between fences survives.
    std::vector<std::string_view> body;
    body.reserve(lines.size());
    for (auto line : lines) {
        if (detail::trim_view(line).substr(0, 3) == "```") continue;
        body.push_back(line);
    }

    // Skip prose before the first expected key.
    std::size_t first = body.size();
    for (std::size_t i = 0; i < body.size(); ++i) {
        std::string_view rest;
        if (auto key = detail::match_key_line(body[i], &rest)) {
            if (expected_keys.count(*key)) {
                first = i;
                break;
            }
        }
    }
    if (first == body.size()) return std::nullopt;

    MemoryDelta delta;
    for (const auto& k : expected_keys) delta[k] = {};

    std::optional<std::string> current;  // expected key we are collecting for
    for (std::size_t i = first; i < body.size(); ++i) {
        const std::string_view line = body[i];
        const std::string_view trimmed = detail::trim_view(line);

        std::string_view rest;
        if (auto key = detail::match_key_line(line, &rest)) {
            if (expected_keys.count(*key)) {
                current = *key;
                auto& items = delta[*key];
                if (!rest.empty()) {
                    if (auto flow = detail::try_parse_flow_list(rest)) {
                        for (auto& it : *flow) items.push_back(std::move(it));
                    } else {
                        items.push_back(detail::parse_scalar(rest));
                    }
                    current.reset();  // inline value: block form not expected
                }
            } else {
                current.reset();  // some other section starts
            }
            continue;
        }

        if (trimmed.empty() || trimmed.front() == '#') continue;

        if (current && trimmed.substr(0, 1) == "-" &&
            (trimmed.size() == 1 ||
             detail::is_ws_byte(static_cast<unsigned char>(trimmed[1])))) {
            delta[*current].push_back(detail::parse_scalar(trimmed.substr(1)));
            continue;
        }

        // Prose inside the document ends any block being collected.
        current.reset();
    }
    return delta;
}

}  // namespace coma
