#pragma once

// Toy trainable encoder: hashed token embeddings with local window mixing
// stand in for the pretrained text encoder (H^e, one row per token), and a
// [CLS]-style pooled bag of embeddings stands in for the description
// encoder. Span pooling, the pair projection and the description projection
// sit on top.

#include <Eigen/Dense>

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "pairlab/corpus.hpp"
#include "pairlab/error.hpp"

namespace pairlab {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr std::string_view kDefaultPairText = "the opinion term describes the aspect term";
inline constexpr std::string_view kDefaultUnpairText = "the opinion term does not describe the aspect term";

/// Stable 64-bit FNV-1a; bucket ids must not depend on the platform's std::hash.
constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

struct EncoderConfig {
    std::size_t vocab_buckets = 4096;
    std::size_t hidden_dim = 64;
    std::size_t projection_dim = 64;
    int mix_window = 3;
    std::string pair_text{kDefaultPairText};
    std::string unpair_text{kDefaultUnpairText};

    bool operator==(const EncoderConfig&) const = default;
};

/// Mutable view of one parameter tensor, column-major like Eigen.
struct TensorView {
    std::string_view name;
    double* data;
    std::size_t rows;
    std::size_t cols;

    std::size_t size() const noexcept { return rows * cols; }
    Eigen::Map<Vec> flat() const { return {data, static_cast<Eigen::Index>(size())}; }
};

struct EncoderParams {
    EncoderConfig config;
    Mat token_embeddings;  // V x h
    Mat pair_weight;       // W_s: p x 2h
    Vec pair_bias;         // b_s: p
    Mat desc_weight;       // W_d: p x h
    Vec desc_bias;         // b_d: p
    Vec class_vector;      // h
    Vec linear_head;       // p, baseline pairing head
    double linear_bias = 0.0;
    double temperature = 0.07;
    /// Threshold on cos(h_c, d_pair) - cos(h_c, d_unpair) for the contrastive
    /// decision. Calibrated after training, never updated by gradients.
    double decision_margin = 0.0;
    /// Score above which the linear head calls a pair matched. Also calibrated.
    double linear_threshold = 0.5;

    std::size_t hidden_dim() const noexcept { return config.hidden_dim; }
    std::size_t projection_dim() const noexcept { return config.projection_dim; }

    std::size_t bucket(std::string_view token) const noexcept {
        return static_cast<std::size_t>(fnv1a(token) % config.vocab_buckets);
    }

    static EncoderParams zeros(const EncoderConfig& cfg) {
        if (cfg.vocab_buckets == 0 || cfg.hidden_dim == 0 || cfg.projection_dim == 0)
            throw Error(ErrorKind::InvalidConfig, "vocabulary and dimensions must be positive");
        if (cfg.mix_window < 1 || cfg.mix_window % 2 == 0)
            throw Error(ErrorKind::InvalidConfig, "mix window must be a positive odd integer");
        const auto V = static_cast<Eigen::Index>(cfg.vocab_buckets);
        const auto h = static_cast<Eigen::Index>(cfg.hidden_dim);
        const auto p = static_cast<Eigen::Index>(cfg.projection_dim);
        EncoderParams out;
        out.config = cfg;
        out.token_embeddings = Mat::Zero(V, h);
        out.pair_weight = Mat::Zero(p, 2 * h);
        out.pair_bias = Vec::Zero(p);
        out.desc_weight = Mat::Zero(p, h);
        out.desc_bias = Vec::Zero(p);
        out.class_vector = Vec::Zero(h);
        out.linear_head = Vec::Zero(p);
        out.linear_bias = 0.0;
        out.temperature = 0.0;
        return out;
    }

    /// Weights uniform in [-1/sqrt(h), 1/sqrt(h)]; biases start at zero.
    static EncoderParams init(const EncoderConfig& cfg, std::uint64_t seed, double temperature) {
        if (!(temperature > 0.0)) throw Error(ErrorKind::InvalidConfig, "temperature must be positive");
        EncoderParams out = zeros(cfg);
        std::mt19937_64 rng(seed);
        const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
        std::uniform_real_distribution<double> u(-bound, bound);
        auto fill = [&](auto& m) {
            for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
        };
        fill(out.token_embeddings);
        fill(out.pair_weight);
        fill(out.desc_weight);
        fill(out.class_vector);
        fill(out.linear_head);
        out.temperature = temperature;
        return out;
    }

    /// Every trainable tensor in a fixed order; the optimizer and the
    /// checkpoint writer rely on this order.
    std::vector<TensorView> tensors() {
        auto view = [](std::string_view name, auto& m) {
            return TensorView{name, m.data(), static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())};
        };
        return {
            view("token_embeddings", token_embeddings),
            view("pair_weight", pair_weight),
            view("pair_bias", pair_bias),
            view("desc_weight", desc_weight),
            view("desc_bias", desc_bias),
            view("class_vector", class_vector),
            view("linear_head", linear_head),
            TensorView{"linear_bias", &linear_bias, 1, 1},
            TensorView{"temperature", &temperature, 1, 1},
        };
    }

    std::vector<TensorView> tensors() const { return const_cast<EncoderParams*>(this)->tensors(); }

    bool all_finite() const {
        for (const auto& t : tensors())
            if (!t.flat().allFinite()) return false;
        return true;
    }

    bool operator==(const EncoderParams& o) const {
        if (config != o.config || decision_margin != o.decision_margin || linear_threshold != o.linear_threshold)
            return false;
        const auto a = tensors();
        const auto b = o.tensors();
        for (std::size_t k = 0; k < a.size(); ++k)
            if (a[k].rows != b[k].rows || a[k].cols != b[k].cols || a[k].flat() != b[k].flat()) return false;
        return true;
    }
};

struct EncodedSentence {
    Mat states;                        // n x h
    std::vector<std::size_t> buckets;  // embedding row of each token
    int window = 1;

    std::size_t size() const noexcept { return static_cast<std::size_t>(states.rows()); }

    /// Half-open token range mixed into row i.
    std::pair<std::size_t, std::size_t> window_of(std::size_t i) const noexcept {
        const std::size_t half = static_cast<std::size_t>(window / 2);
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(size(), i + half + 1);
        return {lo, hi};
    }
};

/// Row i is the mean embedding of the tokens in the window centred on i,
/// clipped at the sentence edges.
inline EncodedSentence encode_tokens(const Sentence& s, const EncoderParams& p) {
    EncodedSentence enc;
    enc.window = p.config.mix_window;
    enc.buckets.reserve(s.size());
    for (const auto& tok : s.tokens) enc.buckets.push_back(p.bucket(tok));
    enc.states = Mat::Zero(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(p.hidden_dim()));
    for (std::size_t i = 0; i < s.size(); ++i) {
        const auto [lo, hi] = enc.window_of(i);
        for (std::size_t j = lo; j < hi; ++j)
            enc.states.row(static_cast<Eigen::Index>(i)) += p.token_embeddings.row(static_cast<Eigen::Index>(enc.buckets[j]));
        enc.states.row(static_cast<Eigen::Index>(i)) /= static_cast<double>(hi - lo);
    }
    return enc;
}

/// Mean of rows start..end inclusive.
inline Vec pool_span(const EncodedSentence& enc, Span span) {
    if (!span.valid_for(enc.size()))
        throw Error(ErrorKind::BadSpan, "span (" + std::to_string(span.start) + ", " + std::to_string(span.end) +
                                            ") invalid for " + std::to_string(enc.size()) + " rows");
    return enc.states.middleRows(span.start, span.length()).colwise().mean().transpose();
}

/// h_c = W_s (h_a ++ h_o) + b_s
inline Vec pair_embed(const Vec& aspect, const Vec& opinion, const EncoderParams& p) {
    const auto h = static_cast<Eigen::Index>(p.hidden_dim());
    if (aspect.size() != h || opinion.size() != h)
        throw Error(ErrorKind::DimMismatch, "pair_embed expects two vectors of dimension " + std::to_string(h));
    return p.pair_weight.leftCols(h) * aspect + p.pair_weight.rightCols(h) * opinion + p.pair_bias;
}

struct DescriptionEncoding {
    std::vector<std::size_t> buckets;
    Vec pooled;     // class vector + mean token embedding
    Vec embedding;  // W_d pooled + b_d
};

inline DescriptionEncoding describe_detailed(std::string_view text, const EncoderParams& p) {
    const auto words = detail::split_whitespace(text);
    if (words.empty()) throw Error(ErrorKind::EmptyDescription, "description text is empty");
    DescriptionEncoding out;
    out.pooled = Vec::Zero(static_cast<Eigen::Index>(p.hidden_dim()));
    for (const auto& w : words) {
        out.buckets.push_back(p.bucket(w));
        out.pooled += p.token_embeddings.row(static_cast<Eigen::Index>(out.buckets.back())).transpose();
    }
    out.pooled /= static_cast<double>(words.size());
    out.pooled += p.class_vector;
    out.embedding = p.desc_weight * out.pooled + p.desc_bias;
    return out;
}

inline Vec describe(std::string_view text, const EncoderParams& p) { return describe_detailed(text, p).embedding; }

struct DescriptionSet {
    std::string pair_text;
    std::string unpair_text;
    Vec pair;
    Vec unpair;

    static DescriptionSet from(const EncoderParams& p) {
        return {p.config.pair_text, p.config.unpair_text, describe(p.config.pair_text, p),
                describe(p.config.unpair_text, p)};
    }
};

// ---------------------------------------------------------------------------
// Checkpoint: line-oriented text, every double written as a hex float so the
// round trip is bit-exact.
//
//   pairlab-checkpoint <version>
//   config <vocab_buckets> <hidden_dim> <projection_dim> <mix_window>
//   text pair <byte length> <text>
//   text unpair <byte length> <text>
//   margin <hex float>
//   threshold <hex float>
//   tensor <name> <rows> <cols>
//   <rows*cols hex floats, column-major, one per line>
//   end

inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline std::string hex_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
    return std::string(buf, res.ptr);
}

inline double parse_hex_double(std::string_view s) {
    double v = 0.0;
    bool negative = false;
    if (!s.empty() && s.front() == '-') {
        negative = true;
        s.remove_prefix(1);
    }
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::hex);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw Error(ErrorKind::BadCheckpoint, "bad number '" + std::string(s) + "'");
    return negative ? -v : v;
}

} // namespace detail

inline void write_checkpoint(std::ostream& out, const EncoderParams& p) {
    const auto& c = p.config;
    out << "pairlab-checkpoint " << kCheckpointVersion << '\n';
    out << "config " << c.vocab_buckets << ' ' << c.hidden_dim << ' ' << c.projection_dim << ' ' << c.mix_window << '\n';
    out << "text pair " << c.pair_text.size() << ' ' << c.pair_text << '\n';
    out << "text unpair " << c.unpair_text.size() << ' ' << c.unpair_text << '\n';
    out << "margin " << detail::hex_double(p.decision_margin) << '\n';
    out << "threshold " << detail::hex_double(p.linear_threshold) << '\n';
    for (const auto& t : p.tensors()) {
        out << "tensor " << t.name << ' ' << t.rows << ' ' << t.cols << '\n';
        for (std::size_t i = 0; i < t.size(); ++i) out << detail::hex_double(t.data[i]) << '\n';
    }
    out << "end\n";
}

inline EncoderParams read_checkpoint(std::istream& in) {
    auto bad = [](const std::string& what) { return Error(ErrorKind::BadCheckpoint, what); };
    std::string word;
    int version = 0;
    if (!(in >> word >> version) || word != "pairlab-checkpoint") throw bad("missing header");
    if (version != kCheckpointVersion) throw bad("unsupported version " + std::to_string(version));

    EncoderConfig cfg;
    if (!(in >> word >> cfg.vocab_buckets >> cfg.hidden_dim >> cfg.projection_dim >> cfg.mix_window) || word != "config")
        throw bad("missing config line");
    for (std::string* text : {&cfg.pair_text, &cfg.unpair_text}) {
        std::string which;
        std::size_t len = 0;
        if (!(in >> word >> which >> len) || word != "text") throw bad("missing description text");
        in.get();
        text->assign(len, '\0');
        if (!in.read(text->data(), static_cast<std::streamsize>(len))) throw bad("truncated description text");
    }

    EncoderParams p = EncoderParams::zeros(cfg);
    if (!(in >> word) || word != "margin") throw bad("missing margin line");
    if (!(in >> word)) throw bad("missing margin value");
    p.decision_margin = detail::parse_hex_double(word);
    if (!(in >> word) || word != "threshold") throw bad("missing threshold line");
    if (!(in >> word)) throw bad("missing threshold value");
    p.linear_threshold = detail::parse_hex_double(word);
    for (const auto& t : p.tensors()) {
        std::string name;
        std::size_t rows = 0, cols = 0;
        if (!(in >> word >> name >> rows >> cols) || word != "tensor") throw bad("missing tensor header");
        if (name != t.name || rows != t.rows || cols != t.cols)
            throw bad("tensor " + name + " does not match the expected layout of " + std::string(t.name));
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (!(in >> word)) throw bad("truncated tensor " + name);
            t.data[i] = detail::parse_hex_double(word);
        }
    }
    if (!(in >> word) || word != "end") throw bad("missing end marker");
    return p;
}

} // namespace pairlab
