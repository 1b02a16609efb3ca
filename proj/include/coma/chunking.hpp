#pragma once

// Fixed-size document segmentation and middle truncation.
//
// segment() fills chunks greedily up to chunk_size tokens and then snaps the
// cut back to the nearest preceding whitespace boundary within
// kBoundarySlack tokens, so words are never split. Concatenating the chunk
// texts in index order reproduces the input byte for byte.
//
// truncate_middle() keeps a head and a tail of the text and removes the
// middle, preferring sentence boundaries for both cuts. The ellipsis marker's
// own tokens are reserved out of the limit so the result never exceeds it.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "coma/tokenizer.hpp"

namespace coma {

/// One contiguous span of the source document.
struct Chunk {
    std::size_t index = 0;  // 0-based, contiguous within a segmentation
    std::string text;
    TokenCount tokens;
};

/// Non-last chunks end within this many tokens below chunk_size when the cut
/// has to move back to reach a whitespace boundary.
inline constexpr TokenCount kBoundarySlack{64};

/// Marker inserted where truncate_middle removed text.
inline constexpr std::string_view kEllipsisMarker = " ... ";

inline std::vector<Chunk> segment(std::string_view text, TokenCount chunk_size,
                                  const Tokenizer& tok,
                                  TokenCount boundary_slack = kBoundarySlack) {
    std::vector<Chunk> chunks;
    if (text.empty()) return chunks;

    const auto spans = tok.spans(text);
    if (spans.empty()) {
        chunks.push_back(Chunk{0, std::string(text), TokenCount{0}});
        return chunks;
    }

    const std::size_t n = spans.size();
    const std::size_t size = static_cast<std::size_t>(chunk_size.value);
    const std::size_t slack = static_cast<std::size_t>(boundary_slack.value);

    std::size_t first_tok = 0;
    std::size_t begin_byte = 0;
    while (first_tok < n) {
        std::size_t cut_tok;  // first token of the NEXT chunk
        std::size_t cut_byte;
        if (first_tok + size >= n) {
            cut_tok = n;
            cut_byte = text.size();
        } else {
            cut_tok = first_tok + size;
            // Snap back to a whitespace gap, at most `slack` tokens, never
            // below one token per chunk.
            const std::size_t lo = std::max(first_tok + 1, cut_tok >= slack ? cut_tok - slack : 0);
            std::size_t snapped = cut_tok;
            for (std::size_t k = cut_tok; k >= lo; --k) {
                if (spans[k - 1].end < spans[k].begin) {
                    snapped = k;
                    break;
                }
                if (k == lo) break;
            }
            cut_tok = snapped;
            cut_byte = spans[cut_tok].begin;
        }
        chunks.push_back(Chunk{chunks.size(),
                               std::string(text.substr(begin_byte, cut_byte - begin_byte)),
                               TokenCount{cut_tok - first_tok}});
        first_tok = cut_tok;
        begin_byte = cut_byte;
    }
    return chunks;
}

namespace detail {

inline bool is_sentence_punct(char c) { return c == '.' || c == '!' || c == '?'; }
inline bool is_sentence_closer(char c) {
    return c == '"' || c == '\'' || c == ')' || c == ']';
}

// Positions right after ".", "!" or "?" (plus trailing quotes/brackets) that
// are followed by whitespace or end of text.
inline std::vector<std::size_t> sentence_end_positions(std::string_view text) {
    std::vector<std::size_t> ends;
    const std::size_t n = text.size();
    for (std::size_t i = 0; i < n; ++i) {
        if (!is_sentence_punct(text[i])) continue;
        std::size_t e = i + 1;
        while (e < n && is_sentence_closer(text[e])) ++e;
        if (e == n || is_ws_byte(static_cast<unsigned char>(text[e]))) ends.push_back(e);
    }
    return ends;
}

}  // namespace detail

inline std::string truncate_middle(std::string_view text, TokenCount limit,
                                   const Tokenizer& tok) {
    const auto spans = tok.spans(text);
    const std::size_t n = spans.size();
    if (TokenCount{n} <= limit) return std::string(text);

    const std::size_t marker_tokens =
        static_cast<std::size_t>(tok.count(kEllipsisMarker).value);
    const std::size_t lim = static_cast<std::size_t>(limit.value);
    if (lim == 0) return std::string();

    if (lim <= marker_tokens) {
        // Limit too small to hold the marker; keep a bare head.
        return std::string(text.substr(0, spans[lim - 1].end));
    }

    const std::size_t usable = lim - marker_tokens;
    const std::size_t head_n = (usable + 1) / 2;
    const std::size_t tail_n = usable / 2;

    std::size_t head_cut = spans[head_n - 1].end;
    std::size_t tail_cut = tail_n > 0 ? spans[n - tail_n].begin : text.size();

    const auto ends = detail::sentence_end_positions(text);
    // Head shrinks to the last sentence end at or before its token cut.
    for (auto it = ends.rbegin(); it != ends.rend(); ++it) {
        if (*it <= head_cut) {
            head_cut = *it;
            break;
        }
    }
    // Tail shrinks to the first sentence start at or after its token cut (a
    // start that coincides with the cut keeps it).
    for (std::size_t e : ends) {
        std::size_t s = e;
        while (s < text.size() && detail::is_ws_byte(static_cast<unsigned char>(text[s]))) ++s;
        if (s >= text.size()) break;  // nothing follows the last sentence end
        if (s < tail_cut) continue;
        tail_cut = s;
        break;
    }

    std::string out;
    out.reserve(head_cut + kEllipsisMarker.size() + (text.size() - tail_cut));
    out.append(text.substr(0, head_cut));
    out.append(kEllipsisMarker);
    out.append(text.substr(tail_cut));
    return out;
}

}  // namespace coma
