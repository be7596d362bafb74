#pragma once

// Pair candidates, the three pairing strategies (random, linear head,
// description contrast) and the losses that train them.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "pairlab/corpus.hpp"
#include "pairlab/encoder.hpp"
#include "pairlab/error.hpp"

namespace pairlab {

enum class PairLabel { matched, mismatched };

struct PairExample {
    Vec h_c;
    PairLabel label = PairLabel::mismatched;
    std::size_t sentence_id = 0;
    Span aspect;
    Span opinion;

    bool matched() const noexcept { return label == PairLabel::matched; }
};

struct PairBatch {
    std::vector<PairExample> examples;
    DescriptionSet descriptions;
};

/// Which description anchors the contrastive term.
enum class PairType { pair, unpair };

/// Candidate (aspect, opinion) combinations of a sentence: every distinct
/// gold aspect span crossed with every distinct gold opinion span.
inline std::vector<TermPair> candidate_pairs(const Sentence& s) {
    std::vector<TermPair> out;
    const auto aspects = s.aspects();
    const auto opinions = s.opinions();
    out.reserve(aspects.size() * opinions.size());
    for (const auto& a : aspects)
        for (const auto& o : opinions) out.push_back({a, o});
    return out;
}

inline std::vector<PairExample> build_pair_examples(const Sentence& s, const EncodedSentence& enc,
                                                    const EncoderParams& p, std::size_t sentence_id = 0) {
    if (s.triplets.empty()) throw Error(ErrorKind::NoTriplets, "sentence " + std::to_string(sentence_id) + " has no triplets");
    std::vector<PairExample> out;
    for (const auto& cand : candidate_pairs(s)) {
        PairExample ex;
        ex.h_c = pair_embed(pool_span(enc, cand.aspect), pool_span(enc, cand.opinion), p);
        ex.label = s.is_gold_pair(cand) ? PairLabel::matched : PairLabel::mismatched;
        ex.sentence_id = sentence_id;
        ex.aspect = cand.aspect;
        ex.opinion = cand.opinion;
        out.push_back(std::move(ex));
    }
    return out;
}

struct CosineGrad {
    double value = 0.0;
    Vec d_first;   // d cos / d a
    Vec d_second;  // d cos / d b
};

inline double cosine(const Vec& a, const Vec& b) {
    const double na = a.norm(), nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) throw Error(ErrorKind::NumericalError, "cosine of a zero-norm vector");
    return a.dot(b) / (na * nb);
}

inline CosineGrad cosine_with_grad(const Vec& a, const Vec& b) {
    const double na = a.norm(), nb = b.norm();
    if (!(na > 0.0) || !(nb > 0.0)) throw Error(ErrorKind::NumericalError, "cosine of a zero-norm vector");
    CosineGrad g;
    g.value = a.dot(b) / (na * nb);
    g.d_first = b / (na * nb) - g.value * a / (na * na);
    g.d_second = a / (na * nb) - g.value * b / (nb * nb);
    return g;
}

struct InfoNceResult {
    double loss = 0.0;
    std::size_t anchors = 0;
    std::size_t negatives = 0;
    std::vector<Vec> d_embeddings;  // one per batch example
    Vec d_description;
    double d_temperature = 0.0;
};

/// Contrastive objective anchored on description k. Examples whose label
/// matches k are anchors; the others are the in-batch negatives shared by
/// every anchor. Similarity is cosine; the result is the mean over anchors.
inline InfoNceResult infonce_loss(const PairBatch& batch, PairType k, double temperature) {
    if (!(temperature > 0.0)) throw Error(ErrorKind::NumericalError, "temperature must be positive");
    const Vec& desc = k == PairType::pair ? batch.descriptions.pair : batch.descriptions.unpair;
    const PairLabel anchor_label = k == PairType::pair ? PairLabel::matched : PairLabel::mismatched;

    const std::size_t n = batch.examples.size();
    std::vector<CosineGrad> cos;
    cos.reserve(n);
    std::vector<std::size_t> anchors, negatives;
    for (std::size_t i = 0; i < n; ++i) {
        (batch.examples[i].label == anchor_label ? anchors : negatives).push_back(i);
    }
    if (anchors.empty() || negatives.empty())
        throw Error(ErrorKind::DegenerateBatch, "contrastive loss needs at least one anchor and one negative");
    for (const auto& ex : batch.examples) cos.push_back(cosine_with_grad(ex.h_c, desc));

    InfoNceResult r;
    r.anchors = anchors.size();
    r.negatives = negatives.size();

    // Shared negative part of every denominator.
    double neg_max = -std::numeric_limits<double>::infinity();
    for (auto j : negatives) neg_max = std::max(neg_max, cos[j].value / temperature);
    double neg_sum = 0.0;
    for (auto j : negatives) neg_sum += std::exp(cos[j].value / temperature - neg_max);

    std::vector<double> d_logit(n, 0.0);
    const double inv_anchors = 1.0 / static_cast<double>(anchors.size());
    for (auto i : anchors) {
        const double zi = cos[i].value / temperature;
        const double m = std::max(zi, neg_max);
        const double ea = std::exp(zi - m);
        const double en = neg_sum * std::exp(neg_max - m);
        const double denom = ea + en;
        r.loss += (std::log(denom) + m - zi) * inv_anchors;
        d_logit[i] += (ea / denom - 1.0) * inv_anchors;
        for (auto j : negatives)
            d_logit[j] += std::exp(cos[j].value / temperature - m) / denom * inv_anchors;
    }

    r.d_embeddings.assign(n, Vec::Zero(desc.size()));
    r.d_description = Vec::Zero(desc.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (d_logit[i] == 0.0) continue;
        const double d_cos = d_logit[i] / temperature;
        r.d_embeddings[i] = d_cos * cos[i].d_first;
        r.d_description += d_cos * cos[i].d_second;
        r.d_temperature -= d_logit[i] * cos[i].value / (temperature * temperature);
    }
    return r;
}

struct CrossEntropyResult {
    double loss = 0.0;
    Vec grad;
};

/// -log softmax(logits)[true_index] with its gradient softmax - one_hot.
inline CrossEntropyResult cross_entropy(const Vec& logits, std::size_t true_index) {
    if (true_index >= static_cast<std::size_t>(logits.size()))
        throw Error(ErrorKind::IndexOutOfRange, "class index " + std::to_string(true_index) + " outside " +
                                                    std::to_string(logits.size()) + " logits");
    const double m = logits.maxCoeff();
    const Vec e = (logits.array() - m).exp().matrix();
    const double z = e.sum();
    CrossEntropyResult r;
    r.loss = std::log(z) + m - logits(static_cast<Eigen::Index>(true_index));
    r.grad = e / z;
    r.grad(static_cast<Eigen::Index>(true_index)) -= 1.0;
    return r;
}

inline double sigmoid(double x) noexcept {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

/// Pre-sigmoid score of the linear pairing baseline.
inline double linear_pair_logit(const Vec& h_c, const Vec& head, double bias) {
    if (h_c.size() != head.size())
        throw Error(ErrorKind::DimMismatch, "linear head has dimension " + std::to_string(head.size()) +
                                                 ", pair embedding " + std::to_string(h_c.size()));
    return head.dot(h_c) + bias;
}

inline double linear_pair_score(const Vec& h_c, const Vec& head, double bias) {
    return sigmoid(linear_pair_logit(h_c, head, bias));
}

/// Binary cross-entropy of the linear head, as two-class softmax over
/// logits [0, z]: softmax([0, z])[1] == sigmoid(z). Returns the loss and dL/dz.
inline std::pair<double, double> linear_pair_bce(double logit, PairLabel label) {
    Vec logits(2);
    logits << 0.0, logit;
    const auto ce = cross_entropy(logits, label == PairLabel::matched ? 1 : 0);
    return {ce.loss, ce.grad(1)};
}

/// Fair coin from the caller's seeded stream.
inline PairLabel random_pair_decision(const PairExample& /*candidate*/, std::mt19937_64& stream) {
    return (stream() >> 63) != 0 ? PairLabel::matched : PairLabel::mismatched;
}

/// Matched iff cos(h_c, d_pair) - cos(h_c, d_unpair) > margin; ties are
/// mismatched. With margin 0 this is "strictly closer to the pair
/// description", a half-space in h_c. A non-zero margin gives a cone, which
/// is what lets the rule separate the two gold pairs of a 2x2 sentence from
/// the two swapped ones (h_c is additive in aspect and opinion, so no
/// half-space can).
inline PairLabel contrastive_pair_decision(const Vec& h_c, const DescriptionSet& descs, double margin = 0.0) {
    return cosine(h_c, descs.pair) - cosine(h_c, descs.unpair) > margin ? PairLabel::matched : PairLabel::mismatched;
}

struct LossBreakdown {
    double extraction = 0.0;   // L_e
    double contrastive = 0.0;  // L_c
    double total = 0.0;        // alpha * L_e + beta * L_c
    double alpha = 0.0;
    double beta = 0.0;
};

inline LossBreakdown joint_loss(double extraction, double contrastive, double alpha, double beta) {
    if (alpha < 0.0 || beta < 0.0) throw Error(ErrorKind::InvalidConfig, "loss weights must be non-negative");
    return {extraction, contrastive, alpha * extraction + beta * contrastive, alpha, beta};
}

} // namespace pairlab
