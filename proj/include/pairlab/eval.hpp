#pragma once

// Exact-match scoring (triplets and aspect-opinion pairs), the known-terms
// pairing-strategy comparison and the 2-D embedding export.

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "pairlab/corpus.hpp"
#include "pairlab/encoder.hpp"
#include "pairlab/error.hpp"
#include "pairlab/pairing.hpp"

namespace pairlab {

struct EvalReport {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;

    /// Zero denominators give zero.
    static EvalReport from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
        EvalReport r{tp, fp, fn, 0.0, 0.0, 0.0};
        if (tp + fp > 0) r.precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        if (tp + fn > 0) r.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
        if (r.precision + r.recall > 0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
        return r;
    }
};

namespace detail {

template <class T, class GoldOf>
EvalReport micro_f1(const std::vector<std::vector<T>>& pred, const Dataset& gold, GoldOf gold_of) {
    if (pred.size() != gold.sentences.size())
        throw Error(ErrorKind::AlignmentError, std::to_string(pred.size()) + " predictions for " +
                                                   std::to_string(gold.sentences.size()) + " sentences");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const std::set<T> p(pred[i].begin(), pred[i].end());
        const std::set<T> g = gold_of(gold.sentences[i]);
        std::size_t hit = 0;
        for (const auto& x : p) hit += g.count(x);
        tp += hit;
        fp += p.size() - hit;
        fn += g.size() - hit;
    }
    return EvalReport::from_counts(tp, fp, fn);
}

} // namespace detail

/// A prediction counts only if aspect span, opinion span and polarity all match.
inline EvalReport triplet_f1(const std::vector<std::vector<Triplet>>& pred, const Dataset& gold) {
    return detail::micro_f1(pred, gold, [](const Sentence& s) {
        return std::set<Triplet>(s.triplets.begin(), s.triplets.end());
    });
}

/// Sentiment is ignored; only the two spans must match.
inline EvalReport pair_f1(const std::vector<std::vector<TermPair>>& pred, const Dataset& gold) {
    return detail::micro_f1(pred, gold, [](const Sentence& s) {
        std::set<TermPair> g;
        for (const auto& t : s.triplets) g.insert(t.pair());
        return g;
    });
}

inline std::vector<std::vector<TermPair>> pairs_of(const std::vector<std::vector<Triplet>>& triplets) {
    std::vector<std::vector<TermPair>> out(triplets.size());
    for (std::size_t i = 0; i < triplets.size(); ++i)
        for (const auto& t : triplets[i]) out[i].push_back(t.pair());
    return out;
}

enum class Strategy { random, linear, contrastive };

constexpr std::string_view to_string(Strategy s) noexcept {
    switch (s) {
    case Strategy::random: return "random";
    case Strategy::linear: return "linear";
    case Strategy::contrastive: return "contrastive";
    }
    return "random";
}

/// Runs one strategy over the gold-term cross product of every sentence
/// and keeps the candidates it calls matched. The random strategy draws one
/// coin per candidate, in dataset order, from a stream seeded with `seed`.
inline std::vector<std::vector<TermPair>> predict_pairs(const Dataset& ds, const EncoderParams& params,
                                                        Strategy strategy, std::uint64_t seed = 0) {
    std::vector<std::vector<TermPair>> out(ds.sentences.size());
    std::mt19937_64 stream(seed);
    const DescriptionSet descs = strategy == Strategy::contrastive ? DescriptionSet::from(params) : DescriptionSet{};
    for (std::size_t i = 0; i < ds.sentences.size(); ++i) {
        const Sentence& s = ds.sentences[i];
        if (s.triplets.empty()) continue;
        if (strategy == Strategy::random) {
            for (const auto& cand : candidate_pairs(s))
                if (random_pair_decision(PairExample{}, stream) == PairLabel::matched) out[i].push_back(cand);
            continue;
        }
        const auto enc = encode_tokens(s, params);
        for (const auto& ex : build_pair_examples(s, enc, params, i)) {
            const bool matched = strategy == Strategy::linear
                                     ? linear_pair_score(ex.h_c, params.linear_head, params.linear_bias) > params.linear_threshold
                                     : contrastive_pair_decision(ex.h_c, descs, params.decision_margin) == PairLabel::matched;
            if (matched) out[i].push_back({ex.aspect, ex.opinion});
        }
    }
    return out;
}

struct StrategyComparison {
    EvalReport random;
    EvalReport linear;
    EvalReport contrastive;
};

/// Known-terms protocol: aspects and opinions are given, only the pairing is
/// scored. `linear_params` and `contrastive_params` may be the same model.
inline StrategyComparison compare_strategies(const Dataset& ds, const EncoderParams& linear_params,
                                             const EncoderParams& contrastive_params, std::uint64_t seed) {
    return {pair_f1(predict_pairs(ds, linear_params, Strategy::random, seed), ds),
            pair_f1(predict_pairs(ds, linear_params, Strategy::linear), ds),
            pair_f1(predict_pairs(ds, contrastive_params, Strategy::contrastive), ds)};
}

inline StrategyComparison compare_strategies(const Dataset& ds, const EncoderParams& params, std::uint64_t seed) {
    return compare_strategies(ds, params, params, seed);
}

/// Mean pair F1 of coin-flip retrieval over `trials` independent draws of
/// the whole candidate set.
inline double random_f1_expectation(const Dataset& ds, std::size_t trials, std::uint64_t seed) {
    std::vector<bool> gold;
    for (const auto& s : ds.sentences)
        for (const auto& c : candidate_pairs(s)) gold.push_back(s.is_gold_pair(c));
    const auto n_gold = static_cast<std::size_t>(std::count(gold.begin(), gold.end(), true));
    std::mt19937_64 stream(seed);
    double sum = 0.0;
    for (std::size_t t = 0; t < trials; ++t) {
        std::size_t tp = 0, fp = 0;
        for (bool g : gold) {
            if ((stream() >> 63) == 0) continue;
            (g ? tp : fp) += 1;
        }
        sum += EvalReport::from_counts(tp, fp, n_gold - tp).f1;
    }
    return trials > 0 ? sum / static_cast<double>(trials) : 0.0;
}

// ---------------------------------------------------------------------------
// PCA projection

struct Pca {
    Vec mean;
    Mat components;  // dim x k, orthonormal columns
    Vec explained;   // all eigenvalues of the covariance, descending

    Vec project(const Vec& v) const { return components.transpose() * (v - mean); }
};

/// Top-k principal axes of mean-centred vectors. Each axis is signed so its
/// largest-magnitude loading is positive.
inline Pca fit_pca(const std::vector<Vec>& vectors, std::size_t k = 2) {
    std::vector<Vec> distinct;
    for (const auto& v : vectors) {
        if (std::none_of(distinct.begin(), distinct.end(), [&](const Vec& d) { return d == v; })) distinct.push_back(v);
        if (distinct.size() >= 3) break;
    }
    if (distinct.size() < 3) throw Error(ErrorKind::DegenerateCovariance, "PCA needs at least 3 distinct vectors");
    const auto dim = vectors.front().size();
    if (static_cast<Eigen::Index>(k) > dim) throw Error(ErrorKind::DimMismatch, "more components than dimensions");

    Mat x(static_cast<Eigen::Index>(vectors.size()), dim);
    for (std::size_t i = 0; i < vectors.size(); ++i) x.row(static_cast<Eigen::Index>(i)) = vectors[i].transpose();
    Pca pca;
    pca.mean = x.colwise().mean().transpose();
    x.rowwise() -= pca.mean.transpose();
    const Mat cov = (x.transpose() * x) / static_cast<double>(vectors.size());
    Eigen::SelfAdjointEigenSolver<Mat> solver(cov);
    if (solver.info() != Eigen::Success) throw Error(ErrorKind::NumericalError, "eigen decomposition failed");

    // Eigen sorts ascending.
    pca.explained = solver.eigenvalues().reverse();
    pca.components = Mat(dim, static_cast<Eigen::Index>(k));
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(k); ++c) {
        Vec axis = solver.eigenvectors().col(dim - 1 - c);
        Eigen::Index arg = 0;
        axis.cwiseAbs().maxCoeff(&arg);
        if (axis(arg) < 0) axis = -axis;
        pca.components.col(c) = axis;
    }
    return pca;
}

struct EmbeddingRow {
    std::size_t sentence_id = 0;
    Span aspect;
    Span opinion;
    PairLabel label = PairLabel::mismatched;
    double x = 0.0;
    double y = 0.0;
};

struct EmbeddingDump {
    std::vector<EmbeddingRow> rows;
    double pair_x = 0.0, pair_y = 0.0;
    double unpair_x = 0.0, unpair_y = 0.0;
    Pca pca;
};

/// Mean cosine gaps measured before projection:
///   matched:    mean cos(h_c, d_pair)   - mean cos(h_c, d_unpair)
///   mismatched: mean cos(h_c, d_unpair) - mean cos(h_c, d_pair)
struct CentroidGaps {
    double matched = 0.0;
    double mismatched = 0.0;
};

inline std::vector<PairExample> all_pair_examples(const Dataset& ds, const EncoderParams& params) {
    std::vector<PairExample> out;
    for (std::size_t i = 0; i < ds.sentences.size(); ++i) {
        const auto& s = ds.sentences[i];
        if (s.triplets.empty()) continue;
        auto ex = build_pair_examples(s, encode_tokens(s, params), params, i);
        std::move(ex.begin(), ex.end(), std::back_inserter(out));
    }
    return out;
}

inline CentroidGaps centroid_gaps(const std::vector<PairExample>& examples, const DescriptionSet& descs) {
    double m_gap = 0.0, u_gap = 0.0;
    std::size_t m = 0, u = 0;
    for (const auto& ex : examples) {
        const double diff = cosine(ex.h_c, descs.pair) - cosine(ex.h_c, descs.unpair);
        if (ex.matched()) {
            m_gap += diff;
            ++m;
        } else {
            u_gap -= diff;
            ++u;
        }
    }
    return {m ? m_gap / static_cast<double>(m) : 0.0, u ? u_gap / static_cast<double>(u) : 0.0};
}

namespace detail {

/// Cut maximizing F1 when "score > cut" means matched. Cuts sit halfway
/// between adjacent distinct scores; the first best cut in descending order
/// wins, so ties prefer predicting fewer pairs.
inline double best_f1_cut(std::vector<std::pair<double, bool>> scored) {
    if (scored.empty()) return 0.0;
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
    std::size_t n_gold = 0;
    for (const auto& s : scored) n_gold += s.second;

    double best_f1 = -1.0;
    double best_cut = scored.front().first + 1.0;
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < scored.size(); ++i) {
        (scored[i].second ? tp : fp) += 1;
        if (i + 1 < scored.size() && scored[i + 1].first == scored[i].first) continue;
        const double f1 = EvalReport::from_counts(tp, fp, n_gold - tp).f1;
        if (f1 > best_f1) {
            best_f1 = f1;
            best_cut = i + 1 < scored.size() ? 0.5 * (scored[i].first + scored[i + 1].first) : scored[i].first - 1.0;
        }
    }
    return best_cut;
}

} // namespace detail

/// Contrastive margin maximizing pair F1 on `ds`.
inline double calibrate_margin(const Dataset& ds, const EncoderParams& params) {
    const auto descs = DescriptionSet::from(params);
    std::vector<std::pair<double, bool>> scored;
    for (const auto& ex : all_pair_examples(ds, params))
        scored.emplace_back(cosine(ex.h_c, descs.pair) - cosine(ex.h_c, descs.unpair), ex.matched());
    return detail::best_f1_cut(std::move(scored));
}

/// Linear-head score threshold maximizing pair F1 on `ds`.
inline double calibrate_linear_threshold(const Dataset& ds, const EncoderParams& params) {
    std::vector<std::pair<double, bool>> scored;
    for (const auto& ex : all_pair_examples(ds, params))
        scored.emplace_back(linear_pair_score(ex.h_c, params.linear_head, params.linear_bias), ex.matched());
    return scored.empty() ? 0.5 : detail::best_f1_cut(std::move(scored));
}

/// Projects every candidate h_c and both description embeddings onto the
/// top-2 principal axes of the candidate embeddings.
inline EmbeddingDump export_embeddings(const Dataset& ds, const EncoderParams& params) {
    const auto examples = all_pair_examples(ds, params);
    const auto descs = DescriptionSet::from(params);
    std::vector<Vec> vectors;
    vectors.reserve(examples.size());
    for (const auto& ex : examples) vectors.push_back(ex.h_c);
    if (vectors.size() < 3) throw Error(ErrorKind::DegenerateCovariance, "PCA needs at least 3 distinct vectors");

    EmbeddingDump dump;
    dump.pca = fit_pca(vectors, 2);
    for (const auto& ex : examples) {
        const Vec xy = dump.pca.project(ex.h_c);
        dump.rows.push_back({ex.sentence_id, ex.aspect, ex.opinion, ex.label, xy(0), xy(1)});
    }
    const Vec p = dump.pca.project(descs.pair);
    const Vec u = dump.pca.project(descs.unpair);
    dump.pair_x = p(0);
    dump.pair_y = p(1);
    dump.unpair_x = u(0);
    dump.unpair_y = u(1);
    return dump;
}

/// Shortest decimal that round-trips the double.
inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline void write_embedding_csv(std::ostream& out, const EmbeddingDump& dump) {
    out << "sid,a_start,a_end,o_start,o_end,label,x,y\n";
    for (const auto& r : dump.rows) {
        out << r.sentence_id << ',' << r.aspect.start << ',' << r.aspect.end << ',' << r.opinion.start << ','
            << r.opinion.end << ',' << (r.label == PairLabel::matched ? "matched" : "mismatched") << ','
            << format_double(r.x) << ',' << format_double(r.y) << '\n';
    }
    out << "CENTER,pair," << format_double(dump.pair_x) << ',' << format_double(dump.pair_y) << '\n';
    out << "CENTER,unpair," << format_double(dump.unpair_x) << ',' << format_double(dump.unpair_y) << '\n';
}

} // namespace pairlab
