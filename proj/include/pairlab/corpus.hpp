#pragma once

// ASTE-Data-V2 corpus model: sentences with (aspect, opinion, polarity)
// triplets, the "sentence####[(...)]" line format, per-split statistics
// and a seeded synthetic generator.

#include <algorithm>
#include <cctype>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "pairlab/error.hpp"

namespace pairlab {

enum class Sentiment { positive, neutral, negative };

constexpr std::string_view to_tag(Sentiment s) noexcept {
    switch (s) {
    case Sentiment::positive: return "POS";
    case Sentiment::neutral: return "NEU";
    case Sentiment::negative: return "NEG";
    }
    return "NEU";
}

constexpr std::string_view to_word(Sentiment s) noexcept {
    switch (s) {
    case Sentiment::positive: return "positive";
    case Sentiment::neutral: return "neutral";
    case Sentiment::negative: return "negative";
    }
    return "neutral";
}

inline std::optional<Sentiment> sentiment_from_tag(std::string_view tag) noexcept {
    if (tag == "POS") return Sentiment::positive;
    if (tag == "NEU") return Sentiment::neutral;
    if (tag == "NEG") return Sentiment::negative;
    return std::nullopt;
}

/// Case-insensitive match against the three polarity words.
inline std::optional<Sentiment> sentiment_from_word(std::string_view word) noexcept {
    std::string lower(word);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (lower == "positive") return Sentiment::positive;
    if (lower == "neutral") return Sentiment::neutral;
    if (lower == "negative") return Sentiment::negative;
    return std::nullopt;
}

/// Inclusive token range [start, end].
struct Span {
    int start = 0;
    int end = 0;

    int length() const noexcept { return end - start + 1; }
    bool valid_for(std::size_t n) const noexcept {
        return start >= 0 && start <= end && static_cast<std::size_t>(end) < n;
    }
    auto operator<=>(const Span&) const = default;
};

struct TermPair {
    Span aspect;
    Span opinion;
    auto operator<=>(const TermPair&) const = default;
};

struct Triplet {
    Span aspect;
    Span opinion;
    Sentiment sentiment = Sentiment::neutral;

    TermPair pair() const noexcept { return {aspect, opinion}; }
    auto operator<=>(const Triplet&) const = default;
};

struct Sentence {
    std::vector<std::string> tokens;
    std::vector<Triplet> triplets;

    std::size_t size() const noexcept { return tokens.size(); }

    std::string text(Span span) const {
        std::string out;
        for (int i = span.start; i <= span.end; ++i) {
            if (i > span.start) out += ' ';
            out += tokens[static_cast<std::size_t>(i)];
        }
        return out;
    }

    /// Distinct aspect spans in first-appearance order.
    std::vector<Span> aspects() const {
        std::vector<Span> out;
        for (const auto& t : triplets)
            if (std::find(out.begin(), out.end(), t.aspect) == out.end()) out.push_back(t.aspect);
        return out;
    }

    /// Distinct opinion spans in first-appearance order.
    std::vector<Span> opinions() const {
        std::vector<Span> out;
        for (const auto& t : triplets)
            if (std::find(out.begin(), out.end(), t.opinion) == out.end()) out.push_back(t.opinion);
        return out;
    }

    bool is_gold_pair(const TermPair& p) const noexcept {
        return std::any_of(triplets.begin(), triplets.end(),
                           [&](const Triplet& t) { return t.pair() == p; });
    }

    bool operator==(const Sentence&) const = default;
};

enum class Split { train, val, test };

constexpr std::string_view to_string(Split s) noexcept {
    switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
    }
    return "train";
}

inline std::optional<Split> split_from_string(std::string_view s) noexcept {
    if (s == "train") return Split::train;
    if (s == "val" || s == "dev") return Split::val;
    if (s == "test") return Split::test;
    return std::nullopt;
}

struct Dataset {
    std::string name;
    Split split = Split::train;
    std::vector<Sentence> sentences;

    bool operator==(const Dataset&) const = default;
};

namespace detail {

inline bool is_space(char c) noexcept {
    return std::isspace(static_cast<unsigned char>(c)) != 0;
}

inline std::vector<std::string> split_whitespace(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && is_space(text[i])) ++i;
        std::size_t j = i;
        while (j < text.size() && !is_space(text[j])) ++j;
        if (j > i) out.emplace_back(text.substr(i, j - i));
        i = j;
    }
    return out;
}

// Cursor over the python-literal triple list on the right of "####".
class TripleListReader {
public:
    explicit TripleListReader(std::string_view text) : text_(text) {}

    std::vector<std::pair<std::vector<int>, std::vector<int>>> index_lists;
    std::vector<Sentiment> sentiments;

    void read() {
        expect('[');
        if (peek() == ']') {
            ++pos_;
        } else {
            for (;;) {
                read_tuple();
                const char c = next();
                if (c == ']') break;
                if (c != ',') fail("expected ',' or ']' in triplet list");
            }
        }
        skip_ws();
        if (pos_ != text_.size()) fail("trailing characters after triplet list");
    }

private:
    void read_tuple() {
        expect('(');
        auto aspect = read_index_list();
        expect(',');
        auto opinion = read_index_list();
        expect(',');
        const std::string tag = read_quoted();
        expect(')');
        const auto s = sentiment_from_tag(tag);
        if (!s) throw Error(ErrorKind::BadTag, "unknown sentiment tag '" + tag + "'");
        index_lists.emplace_back(std::move(aspect), std::move(opinion));
        sentiments.push_back(*s);
    }

    std::vector<int> read_index_list() {
        expect('[');
        std::vector<int> out;
        if (peek() == ']') {
            ++pos_;
            return out;
        }
        for (;;) {
            skip_ws();
            const std::size_t begin = pos_;
            while (pos_ < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_]))) ++pos_;
            if (pos_ == begin) fail("expected a token index");
            out.push_back(std::stoi(std::string(text_.substr(begin, pos_ - begin))));
            const char c = next();
            if (c == ']') break;
            if (c != ',') fail("expected ',' or ']' in index list");
        }
        return out;
    }

    std::string read_quoted() {
        const char quote = next();
        if (quote != '\'' && quote != '"') fail("expected a quoted sentiment tag");
        const std::size_t begin = pos_;
        while (pos_ < text_.size() && text_[pos_] != quote) ++pos_;
        if (pos_ == text_.size()) fail("unterminated sentiment tag");
        std::string out(text_.substr(begin, pos_ - begin));
        ++pos_;
        return out;
    }

    void skip_ws() {
        while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
    }
    char peek() {
        skip_ws();
        return pos_ < text_.size() ? text_[pos_] : '\0';
    }
    char next() {
        skip_ws();
        if (pos_ >= text_.size()) fail("unexpected end of triplet list");
        return text_[pos_++];
    }
    void expect(char c) {
        if (next() != c) fail(std::string("expected '") + c + "'");
    }
    [[noreturn]] void fail(const std::string& what) const {
        throw Error(ErrorKind::MalformedLine, what + " at offset " + std::to_string(pos_));
    }

    std::string_view text_;
    std::size_t pos_ = 0;
};

inline Span span_from_indices(const std::vector<int>& idx, std::size_t n) {
    if (idx.empty()) throw Error(ErrorKind::BadIndex, "empty index list");
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] < 0 || static_cast<std::size_t>(idx[k]) >= n)
            throw Error(ErrorKind::BadIndex, "index " + std::to_string(idx[k]) +
                                                 " out of range for " + std::to_string(n) + " tokens");
        if (k > 0 && idx[k] != idx[k - 1] + 1)
            throw Error(ErrorKind::BadIndex, "non-contiguous index list");
    }
    return {idx.front(), idx.back()};
}

} // namespace detail

/// Parses one "tokens####[([a..], [o..], 'TAG'), ...]" record.
inline Sentence parse_dataset_line(std::string_view line) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.remove_suffix(1);
    const std::string_view sep = "####";
    const auto at = line.find(sep);
    if (at == std::string_view::npos) throw Error(ErrorKind::MalformedLine, "missing '####' separator");
    if (line.find(sep, at + sep.size()) != std::string_view::npos)
        throw Error(ErrorKind::MalformedLine, "more than one '####' separator");

    Sentence s;
    s.tokens = detail::split_whitespace(line.substr(0, at));
    if (s.tokens.empty()) throw Error(ErrorKind::MalformedLine, "empty sentence");

    detail::TripleListReader reader(line.substr(at + sep.size()));
    reader.read();
    for (std::size_t k = 0; k < reader.sentiments.size(); ++k) {
        const auto& [a, o] = reader.index_lists[k];
        s.triplets.push_back({detail::span_from_indices(a, s.size()),
                              detail::span_from_indices(o, s.size()), reader.sentiments[k]});
    }
    return s;
}

/// Inverse of parse_dataset_line, in the python-literal spelling of the data release.
inline std::string format_dataset_line(const Sentence& s) {
    std::string out;
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
        if (i > 0) out += ' ';
        out += s.tokens[i];
    }
    out += "####[";
    auto indices = [&out](Span span) {
        out += '[';
        for (int i = span.start; i <= span.end; ++i) {
            if (i > span.start) out += ", ";
            out += std::to_string(i);
        }
        out += ']';
    };
    for (std::size_t k = 0; k < s.triplets.size(); ++k) {
        if (k > 0) out += ", ";
        out += '(';
        indices(s.triplets[k].aspect);
        out += ", ";
        indices(s.triplets[k].opinion);
        out += ", '";
        out += to_tag(s.triplets[k].sentiment);
        out += "')";
    }
    out += ']';
    return out;
}

/// Reads a dataset file; blank lines are skipped, errors carry the 1-based line number.
inline Dataset load_dataset(const std::string& path, std::string name, Split split) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
    Dataset ds{std::move(name), split, {}};
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (std::all_of(line.begin(), line.end(), detail::is_space)) continue;
        try {
            ds.sentences.push_back(parse_dataset_line(line));
        } catch (const Error& e) {
            throw Error(e.kind(), path + ":" + std::to_string(lineno) + ": " + e.detail());
        }
    }
    if (in.bad()) throw Error(ErrorKind::Io, "read failure on '" + path + "'");
    return ds;
}

inline void save_dataset(const Dataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
    for (const auto& s : ds.sentences) out << format_dataset_line(s) << '\n';
    if (!out) throw Error(ErrorKind::Io, "write failure on '" + path + "'");
}

/// Per-split counts. The multi-* columns count sentences, not triplets.
struct StatsRow {
    std::size_t sentences = 0;
    std::size_t multi_aspect = 0;
    std::size_t multi_opinion = 0;
    std::size_t multi_both = 0;

    bool operator==(const StatsRow&) const = default;
};

inline StatsRow dataset_stats(const Dataset& ds) {
    StatsRow row;
    row.sentences = ds.sentences.size();
    for (const auto& s : ds.sentences) {
        const bool ma = s.aspects().size() > 1;
        const bool mo = s.opinions().size() > 1;
        row.multi_aspect += ma;
        row.multi_opinion += mo;
        row.multi_both += ma && mo;
    }
    return row;
}

struct SynthSpec {
    std::size_t vocab_size = 200;
    std::size_t sentences = 50;
    int min_aspects = 1;
    int max_aspects = 2;
    int min_opinions = 1;
    int max_opinions = 2;
    std::string name = "synth";
    Split split = Split::train;
};

/// Seeded synthetic corpus.
///
/// The vocabulary is split into aspect words ("asp<i>"), opinion words
/// ("op<i>") and fillers ("w<i>"). A sentence with A aspects and O opinions
/// gets max(A, O) gold triplets: triplet i links aspect min(i, A-1) with
/// opinion min(i, O-1), so 2x2 yields two gold pairs and two mismatched
/// candidates. Each clause reads "<opinion> <aspect>" and the polarity is a
/// fixed function of the opinion word. Terms never repeat inside a sentence.
inline Dataset synth_corpus(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.vocab_size == 0) throw Error(ErrorKind::InvalidSpec, "vocabulary size must be positive");
    if (spec.min_aspects < 1 || spec.min_opinions < 1 || spec.min_aspects > spec.max_aspects ||
        spec.min_opinions > spec.max_opinions)
        throw Error(ErrorKind::InvalidSpec, "aspect/opinion ranges must satisfy 1 <= min <= max");
    const std::size_t n_aspect_words = spec.vocab_size / 4;
    const std::size_t n_opinion_words = spec.vocab_size / 4;
    const std::size_t n_fillers = spec.vocab_size - n_aspect_words - n_opinion_words;
    if (n_aspect_words < static_cast<std::size_t>(spec.max_aspects) ||
        n_opinion_words < static_cast<std::size_t>(spec.max_opinions) || n_fillers < 1)
        throw Error(ErrorKind::InvalidSpec, "vocabulary too small for the requested term counts");

    std::mt19937_64 rng(seed);
    auto uniform = [&rng](std::size_t lo, std::size_t hi) {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
    };
    auto sample_distinct = [&](std::size_t pool, int count) {
        std::vector<std::size_t> picked;
        while (picked.size() < static_cast<std::size_t>(count)) {
            const std::size_t w = uniform(0, pool - 1);
            if (std::find(picked.begin(), picked.end(), w) == picked.end()) picked.push_back(w);
        }
        return picked;
    };

    Dataset ds{spec.name, spec.split, {}};
    ds.sentences.reserve(spec.sentences);
    for (std::size_t k = 0; k < spec.sentences; ++k) {
        const int na = static_cast<int>(uniform(spec.min_aspects, spec.max_aspects));
        const int no = static_cast<int>(uniform(spec.min_opinions, spec.max_opinions));
        const auto aspect_words = sample_distinct(n_aspect_words, na);
        const auto opinion_words = sample_distinct(n_opinion_words, no);

        Sentence s;
        std::vector<int> aspect_pos(na, -1), opinion_pos(no, -1);
        auto filler = [&] { s.tokens.push_back("w" + std::to_string(uniform(0, n_fillers - 1))); };
        filler();
        const int n_triplets = std::max(na, no);
        for (int i = 0; i < n_triplets; ++i) {
            const int a = std::min(i, na - 1);
            const int o = std::min(i, no - 1);
            if (i > 0) filler();
            if (opinion_pos[o] < 0) {
                opinion_pos[o] = static_cast<int>(s.tokens.size());
                s.tokens.push_back("op" + std::to_string(opinion_words[o]));
            }
            if (aspect_pos[a] < 0) {
                aspect_pos[a] = static_cast<int>(s.tokens.size());
                s.tokens.push_back("asp" + std::to_string(aspect_words[a]));
            }
            const auto polarity = static_cast<Sentiment>(opinion_words[o] % 3);
            s.triplets.push_back({{aspect_pos[a], aspect_pos[a]}, {opinion_pos[o], opinion_pos[o]}, polarity});
        }
        if (uniform(0, 1) == 1) filler();
        s.tokens.push_back(".");
        ds.sentences.push_back(std::move(s));
    }
    return ds;
}

} // namespace pairlab
