#pragma once

// Generative target strings for triplet extraction, in two styles:
//   extraction:  "(aspect, opinion, sentiment); (aspect, opinion, sentiment)"
//   annotation:  the sentence with each aspect replaced by
//                "[aspect | sentiment | opinion | sentiment | opinion ...]"
// plus a total parser for imperfect generated strings and the normalization
// that maps generated terms back onto source token spans.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "pairlab/corpus.hpp"
#include "pairlab/error.hpp"

namespace pairlab {

enum class TargetStyle { annotation, extraction };

constexpr std::string_view to_string(TargetStyle s) noexcept {
    return s == TargetStyle::annotation ? "annotation" : "extraction";
}

inline std::optional<TargetStyle> target_style_from_string(std::string_view s) noexcept {
    if (s == "annotation") return TargetStyle::annotation;
    if (s == "extraction") return TargetStyle::extraction;
    return std::nullopt;
}

struct StringTriplet {
    std::string aspect;
    std::string opinion;
    Sentiment sentiment = Sentiment::neutral;

    bool operator==(const StringTriplet&) const = default;
};

enum class DiagnosticKind { MalformedGroup, BadSentiment, EmptyTerm, Unresolved };

struct Diagnostic {
    DiagnosticKind kind;
    std::string fragment;
    std::string reason;
};

struct ParsedTarget {
    std::vector<StringTriplet> triplets;
    std::vector<Diagnostic> diagnostics;

    std::size_t warning_count() const noexcept { return diagnostics.size(); }
};

namespace detail {

inline std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

/// Collapses runs of whitespace to one space and trims.
inline std::string squeeze(std::string_view s) {
    std::string out;
    for (const auto& tok : split_whitespace(s)) {
        if (!out.empty()) out += ' ';
        out += tok;
    }
    return out;
}

inline std::string join(const std::vector<std::string>& tokens, std::size_t begin, std::size_t end) {
    std::string out;
    for (std::size_t i = begin; i < end; ++i) {
        if (i > begin) out += ' ';
        out += tokens[i];
    }
    return out;
}

inline std::vector<std::string> split_on(std::string_view s, char sep) {
    std::vector<std::string> out;
    std::size_t begin = 0;
    for (;;) {
        const auto at = s.find(sep, begin);
        out.push_back(trim(s.substr(begin, at == std::string_view::npos ? std::string_view::npos : at - begin)));
        if (at == std::string_view::npos) break;
        begin = at + 1;
    }
    return out;
}

// Text between groups may only contain separators.
inline bool is_separator_text(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](char c) { return is_space(c) || c == ';' || c == '.' || c == ','; });
}

} // namespace detail

/// Character-level edit distance.
inline std::size_t levenshtein(std::string_view a, std::string_view b) {
    std::vector<std::size_t> row(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) row[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        std::size_t diag = row[0];
        row[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j) {
            const std::size_t up = row[j];
            row[j] = std::min({row[j] + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0u : 1u)});
            diag = up;
        }
    }
    return row[b.size()];
}

inline std::string encode_target(const Sentence& s, TargetStyle style) {
    std::string out;
    if (style == TargetStyle::extraction) {
        for (std::size_t k = 0; k < s.triplets.size(); ++k) {
            const auto& t = s.triplets[k];
            if (k > 0) out += "; ";
            out += '(' + s.text(t.aspect) + ", " + s.text(t.opinion) + ", " + std::string(to_word(t.sentiment)) + ')';
        }
        return out;
    }

    struct Group {
        Span aspect;
        std::string bracket;
    };
    std::vector<Group> groups;
    for (const auto& t : s.triplets) {
        auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) { return g.aspect == t.aspect; });
        if (it == groups.end()) {
            groups.push_back({t.aspect, '[' + s.text(t.aspect)});
            it = std::prev(groups.end());
        }
        it->bracket += " | " + std::string(to_word(t.sentiment)) + " | " + s.text(t.opinion);
    }
    for (auto& g : groups) g.bracket += ']';
    std::stable_sort(groups.begin(), groups.end(),
                     [](const Group& a, const Group& b) { return a.aspect.start < b.aspect.start; });

    // Overlapping aspect spans: a group starting inside an emitted bracket
    // is written right after it.
    std::size_t g = 0;
    int covered = -1;
    auto emit = [&out](std::string_view piece) {
        if (!out.empty()) out += ' ';
        out += piece;
    };
    for (int i = 0; i < static_cast<int>(s.size()); ++i) {
        while (g < groups.size() && groups[g].aspect.start <= i) {
            emit(groups[g].bracket);
            covered = std::max(covered, groups[g].aspect.end);
            ++g;
        }
        if (i > covered) emit(s.tokens[static_cast<std::size_t>(i)]);
    }
    return out;
}

namespace detail {

inline void parse_extraction_group(std::string_view body, ParsedTarget& out) {
    const std::string raw = "(" + std::string(body) + ")";
    const auto first = body.find(',');
    const auto last = body.rfind(',');
    if (first == std::string_view::npos || first == last) {
        out.diagnostics.push_back({DiagnosticKind::MalformedGroup, raw, "expected 3 comma-separated fields"});
        return;
    }
    StringTriplet t;
    t.aspect = squeeze(body.substr(0, first));
    t.opinion = squeeze(body.substr(first + 1, last - first - 1));
    const std::string word = trim(body.substr(last + 1));
    if (t.aspect.empty() || t.opinion.empty()) {
        out.diagnostics.push_back({DiagnosticKind::EmptyTerm, raw, "empty aspect or opinion"});
        return;
    }
    const auto s = sentiment_from_word(word);
    if (!s) {
        out.diagnostics.push_back({DiagnosticKind::BadSentiment, raw, "unknown sentiment '" + word + "'"});
        return;
    }
    t.sentiment = *s;
    out.triplets.push_back(std::move(t));
}

inline void parse_annotation_group(std::string_view body, ParsedTarget& out) {
    const std::string raw = "[" + std::string(body) + "]";
    const auto fields = split_on(body, '|');
    if (fields.size() < 3 || fields.size() % 2 == 0) {
        out.diagnostics.push_back({DiagnosticKind::MalformedGroup, raw, "expected aspect followed by sentiment/opinion pairs"});
        return;
    }
    const std::string aspect = squeeze(fields[0]);
    if (aspect.empty()) {
        out.diagnostics.push_back({DiagnosticKind::EmptyTerm, raw, "empty aspect"});
        return;
    }
    for (std::size_t k = 1; k + 1 < fields.size(); k += 2) {
        const auto s = sentiment_from_word(fields[k]);
        const std::string opinion = squeeze(fields[k + 1]);
        if (!s) {
            out.diagnostics.push_back({DiagnosticKind::BadSentiment, raw, "unknown sentiment '" + fields[k] + "'"});
            continue;
        }
        if (opinion.empty()) {
            out.diagnostics.push_back({DiagnosticKind::EmptyTerm, raw, "empty opinion"});
            continue;
        }
        out.triplets.push_back({aspect, opinion, *s});
    }
}

} // namespace detail

/// Total parser: never throws on any input. Well-formed groups become
/// triplets; everything else is reported in `diagnostics`.
inline ParsedTarget parse_target(std::string_view text, TargetStyle style) {
    ParsedTarget out;
    const char open = style == TargetStyle::extraction ? '(' : '[';
    const char close = style == TargetStyle::extraction ? ')' : ']';
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto begin = text.find(open, pos);
        const std::string_view between = text.substr(pos, begin == std::string_view::npos ? text.size() - pos : begin - pos);
        // Annotation style keeps the source sentence between brackets.
        if (style == TargetStyle::extraction && !detail::is_separator_text(between))
            out.diagnostics.push_back({DiagnosticKind::MalformedGroup, detail::trim(between), "text outside any group"});
        if (begin == std::string_view::npos) break;

        const auto end = text.find(close, begin + 1);
        const auto reopen = text.find(open, begin + 1);
        if (end == std::string_view::npos || (reopen != std::string_view::npos && reopen < end)) {
            const auto stop = reopen == std::string_view::npos ? text.size() : reopen;
            out.diagnostics.push_back({DiagnosticKind::MalformedGroup, std::string(text.substr(begin, stop - begin)),
                                       "unclosed group"});
            pos = stop;
            continue;
        }
        const auto body = text.substr(begin + 1, end - begin - 1);
        if (style == TargetStyle::extraction)
            detail::parse_extraction_group(body, out);
        else
            detail::parse_annotation_group(body, out);
        pos = end + 1;
    }
    return out;
}

struct TermMatch {
    std::string text;
    Span span;
    std::size_t distance = 0;
};

/// Maps a generated term onto the closest contiguous token run of the
/// sentence. Exact (whitespace-normalized) hits win at their earliest
/// position; otherwise runs of the term's token length +-1 are scored by
/// character edit distance, ties going to the earlier start and then the
/// shorter run.
inline TermMatch match_term(std::string_view term, const std::vector<std::string>& tokens) {
    if (tokens.empty()) throw Error(ErrorKind::NoCandidate, "sentence has no tokens");
    const auto term_tokens = detail::split_whitespace(term);
    const std::string target = detail::squeeze(term);
    const std::size_t k = std::max<std::size_t>(term_tokens.size(), 1);
    const std::size_t n = tokens.size();

    for (std::size_t start = 0; start + term_tokens.size() <= n && !term_tokens.empty(); ++start) {
        if (std::equal(term_tokens.begin(), term_tokens.end(), tokens.begin() + static_cast<std::ptrdiff_t>(start)))
            return {target, {static_cast<int>(start), static_cast<int>(start + k - 1)}, 0};
    }

    std::optional<TermMatch> best;
    const std::size_t min_len = std::max<std::size_t>(k - 1, 1);
    const std::size_t max_len = std::min(k + 1, n);
    for (std::size_t start = 0; start < n; ++start) {
        for (std::size_t len = min_len; len <= max_len && start + len <= n; ++len) {
            std::string candidate = detail::join(tokens, start, start + len);
            const std::size_t d = levenshtein(target, candidate);
            // Strict '<' keeps the earliest start, then the shortest length.
            if (!best || d < best->distance)
                best = TermMatch{std::move(candidate), {static_cast<int>(start), static_cast<int>(start + len - 1)}, d};
        }
    }
    return *best;
}

inline std::string normalize_term(std::string_view term, const std::vector<std::string>& tokens) {
    return match_term(term, tokens).text;
}

struct ResolvedTriplets {
    std::vector<Triplet> triplets;
    std::vector<Diagnostic> diagnostics;
};

/// Terms whose best match needs more than ceil(|term| / 2) character edits
/// are considered hallucinated and their triplet is dropped.
inline ResolvedTriplets resolve_triplets(const std::vector<StringTriplet>& parsed, const Sentence& s) {
    ResolvedTriplets out;
    auto resolve = [&](const std::string& term) -> std::optional<Span> {
        const TermMatch m = match_term(term, s.tokens);
        const std::size_t len = detail::squeeze(term).size();
        if (m.distance > (len + 1) / 2) return std::nullopt;
        return m.span;
    };
    for (const auto& st : parsed) {
        if (s.tokens.empty()) {
            out.diagnostics.push_back({DiagnosticKind::Unresolved, st.aspect, "empty sentence"});
            continue;
        }
        const auto a = resolve(st.aspect);
        const auto o = resolve(st.opinion);
        if (!a || !o) {
            out.diagnostics.push_back({DiagnosticKind::Unresolved, !a ? st.aspect : st.opinion,
                                       "no token run within the edit budget"});
            continue;
        }
        const Triplet t{*a, *o, st.sentiment};
        if (std::find(out.triplets.begin(), out.triplets.end(), t) == out.triplets.end()) out.triplets.push_back(t);
    }
    return out;
}

} // namespace pairlab
