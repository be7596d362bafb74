#pragma once

// Seeded training of the encoder and both pairing heads on
// L = alpha * L_e + beta * L_c, with a hand-rolled AdamW and a
// finite-difference gradient checker.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "pairlab/corpus.hpp"
#include "pairlab/encoder.hpp"
#include "pairlab/error.hpp"
#include "pairlab/eval.hpp"
#include "pairlab/pairing.hpp"

namespace pairlab {

enum class Profile { desk, paper_faithful };

constexpr std::string_view to_string(Profile p) noexcept {
    return p == Profile::desk ? "desk" : "paper-faithful";
}

inline std::optional<Profile> profile_from_string(std::string_view s) noexcept {
    if (s == "desk") return Profile::desk;
    if (s == "paper-faithful") return Profile::paper_faithful;
    return std::nullopt;
}

struct TrainConfig {
    double learning_rate = 3e-4;
    std::size_t batch_size = 16;
    int epochs = 20;
    double dropout = 0.5;
    double alpha = 0.9;
    double beta = 0.1;
    double tau_init = 0.07;
    std::uint64_t seed = 0;
    Profile profile = Profile::desk;

    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double weight_decay = 0.01;
    double min_temperature = 1e-3;

    EncoderConfig encoder;

    /// Paper-faithful uses a 128-wide projection; desk keeps 64.
    static TrainConfig for_profile(Profile profile) {
        TrainConfig cfg;
        cfg.profile = profile;
        cfg.encoder.projection_dim = profile == Profile::paper_faithful ? 128 : 64;
        return cfg;
    }

    void validate() const {
        auto bad = [](const std::string& what) { return Error(ErrorKind::InvalidConfig, what); };
        if (!(learning_rate > 0.0)) throw bad("learning rate must be positive");
        if (batch_size < 1) throw bad("batch size must be at least 1");
        if (epochs < 1) throw bad("epochs must be at least 1");
        if (dropout < 0.0 || dropout >= 1.0) throw bad("dropout must lie in [0, 1)");
        if (alpha < 0.0 || beta < 0.0 || !(alpha + beta > 0.0)) throw bad("need alpha, beta >= 0 and alpha + beta > 0");
        if (!(tau_init > 0.0)) throw bad("initial temperature must be positive");
        if (weight_decay < 0.0) throw bad("weight decay must be non-negative");
    }
};

// ---------------------------------------------------------------------------
// AdamW

struct OptimizerState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
    std::vector<Vec> first_moment;
    std::vector<Vec> second_moment;
    std::uint64_t step = 0;
};

/// Decoupled weight decay Adam with bias correction:
///   w <- w - lr * (m_hat / (sqrt(v_hat) + eps) + wd * w)
/// The temperature tensor is never decayed.
inline void adamw_step(const std::vector<TensorView>& params, const std::vector<TensorView>& grads,
                       OptimizerState& state, double lr) {
    if (!(lr > 0.0)) throw Error(ErrorKind::InvalidConfig, "learning rate must be positive");
    if (params.size() != grads.size()) throw Error(ErrorKind::ShapeMismatch, "parameter and gradient lists differ");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].rows != grads[k].rows || params[k].cols != grads[k].cols)
            throw Error(ErrorKind::ShapeMismatch, "gradient shape differs for " + std::string(params[k].name));
        if (!grads[k].flat().allFinite())
            throw Error(ErrorKind::NonFiniteGradient, "non-finite gradient in " + std::string(params[k].name));
    }
    if (state.first_moment.empty()) {
        for (const auto& p : params) {
            state.first_moment.push_back(Vec::Zero(static_cast<Eigen::Index>(p.size())));
            state.second_moment.push_back(Vec::Zero(static_cast<Eigen::Index>(p.size())));
        }
    }
    if (state.first_moment.size() != params.size())
        throw Error(ErrorKind::ShapeMismatch, "optimizer state does not match the parameter list");

    ++state.step;
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto w = params[k].flat();
        const auto g = grads[k].flat();
        Vec& m = state.first_moment[k];
        Vec& v = state.second_moment[k];
        if (m.size() != w.size()) throw Error(ErrorKind::ShapeMismatch, "moment shape differs for " + std::string(params[k].name));
        m = state.beta1 * m + (1.0 - state.beta1) * g;
        v = state.beta2 * v + (1.0 - state.beta2) * g.cwiseProduct(g);
        const double wd = params[k].name == "temperature" ? 0.0 : state.weight_decay;
        const Vec update = (m / c1).array() / ((v / c2).array().sqrt() + state.eps);
        w -= lr * (update + wd * w);
    }
}

inline void adamw_step(EncoderParams& params, const EncoderParams& grads, OptimizerState& state, double lr) {
    adamw_step(params.tensors(), grads.tensors(), state, lr);
}

// ---------------------------------------------------------------------------
// Forward and backward over a batch of sentences

struct BatchResult {
    LossBreakdown loss;
    EncoderParams grads;
    std::size_t candidates = 0;
};

/// Joint loss of a batch and its gradient w.r.t. every parameter tensor.
///
/// L_e is the mean binary cross-entropy of the linear pairing head over all
/// candidates. L_c is the mean of the pair- and unpair-anchored contrastive
/// losses; an anchor type with no anchors or no negatives in the batch is
/// left out of that mean, and L_c is 0 if both are. When `dropout_stream` is
/// set, inverted dropout with rate `cfg.dropout` masks the pooled span vectors.
inline BatchResult batch_loss(const EncoderParams& p, const std::vector<const Sentence*>& batch, const TrainConfig& cfg,
                              std::mt19937_64* dropout_stream) {
    const auto h = static_cast<Eigen::Index>(p.hidden_dim());
    BatchResult out{{}, EncoderParams::zeros(p.config), 0};
    EncoderParams& g = out.grads;

    struct Candidate {
        std::size_t sentence;
        Span aspect, opinion;
        Vec input;  // (h_a * mask_a) ++ (h_o * mask_o)
        Vec mask;
        Vec h_c;
        PairLabel label;
    };
    std::vector<EncodedSentence> encoded;
    std::vector<Candidate> cands;
    const double keep = 1.0 - cfg.dropout;
    std::bernoulli_distribution coin(keep);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const Sentence& s = *batch[b];
        encoded.push_back(encode_tokens(s, p));
        for (const auto& tp : candidate_pairs(s)) {
            Candidate c{b, tp.aspect, tp.opinion, Vec(2 * h), Vec::Ones(2 * h), Vec(), PairLabel::mismatched};
            c.input << pool_span(encoded.back(), tp.aspect), pool_span(encoded.back(), tp.opinion);
            if (dropout_stream && cfg.dropout > 0.0) {
                for (Eigen::Index i = 0; i < c.mask.size(); ++i) c.mask(i) = coin(*dropout_stream) ? 1.0 / keep : 0.0;
                c.input = c.input.cwiseProduct(c.mask);
            }
            c.h_c = p.pair_weight * c.input + p.pair_bias;
            c.label = s.is_gold_pair(tp) ? PairLabel::matched : PairLabel::mismatched;
            cands.push_back(std::move(c));
        }
    }
    out.candidates = cands.size();
    if (cands.empty()) return out;

    std::vector<Vec> d_hc(cands.size(), Vec::Zero(static_cast<Eigen::Index>(p.projection_dim())));

    // L_e: linear head.
    double le = 0.0;
    const double inv_n = 1.0 / static_cast<double>(cands.size());
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const double z = linear_pair_logit(cands[i].h_c, p.linear_head, p.linear_bias);
        const auto [loss, dz] = linear_pair_bce(z, cands[i].label);
        le += loss * inv_n;
        const double scaled = cfg.alpha * dz * inv_n;
        g.linear_head += scaled * cands[i].h_c;
        g.linear_bias += scaled;
        d_hc[i] += scaled * p.linear_head;
    }

    // L_c: description contrast.
    const DescriptionEncoding pair_desc = describe_detailed(p.config.pair_text, p);
    const DescriptionEncoding unpair_desc = describe_detailed(p.config.unpair_text, p);
    PairBatch pb;
    pb.descriptions = {p.config.pair_text, p.config.unpair_text, pair_desc.embedding, unpair_desc.embedding};
    for (std::size_t i = 0; i < cands.size(); ++i) {
        PairExample ex;
        ex.h_c = cands[i].h_c;
        ex.label = cands[i].label;
        pb.examples.push_back(std::move(ex));
    }
    const bool has_m = std::any_of(cands.begin(), cands.end(), [](const Candidate& c) { return c.label == PairLabel::matched; });
    const bool has_u = std::any_of(cands.begin(), cands.end(), [](const Candidate& c) { return c.label == PairLabel::mismatched; });
    std::vector<InfoNceResult> parts;
    std::vector<const DescriptionEncoding*> part_desc;
    if (has_m && has_u) {
        parts.push_back(infonce_loss(pb, PairType::pair, p.temperature));
        part_desc.push_back(&pair_desc);
        parts.push_back(infonce_loss(pb, PairType::unpair, p.temperature));
        part_desc.push_back(&unpair_desc);
    }
    double lc = 0.0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const double w = cfg.beta / static_cast<double>(parts.size());
        lc += parts[k].loss / static_cast<double>(parts.size());
        for (std::size_t i = 0; i < cands.size(); ++i) d_hc[i] += w * parts[k].d_embeddings[i];
        g.temperature += w * parts[k].d_temperature;
        const Vec d_emb = w * parts[k].d_description;
        const DescriptionEncoding& de = *part_desc[k];
        g.desc_weight += d_emb * de.pooled.transpose();
        g.desc_bias += d_emb;
        const Vec d_pooled = p.desc_weight.transpose() * d_emb;
        g.class_vector += d_pooled;
        const double share = 1.0 / static_cast<double>(de.buckets.size());
        for (auto bucket : de.buckets) g.token_embeddings.row(static_cast<Eigen::Index>(bucket)) += share * d_pooled.transpose();
    }
    out.loss = joint_loss(le, lc, cfg.alpha, cfg.beta);

    // Back through the pair projection, pooling and window mixing.
    std::vector<Mat> d_states;
    for (const auto& enc : encoded) d_states.push_back(Mat::Zero(enc.states.rows(), enc.states.cols()));
    for (std::size_t i = 0; i < cands.size(); ++i) {
        const auto& c = cands[i];
        g.pair_weight += d_hc[i] * c.input.transpose();
        g.pair_bias += d_hc[i];
        const Vec d_input = (p.pair_weight.transpose() * d_hc[i]).cwiseProduct(c.mask);
        Mat& ds = d_states[c.sentence];
        for (int r = c.aspect.start; r <= c.aspect.end; ++r)
            ds.row(r) += d_input.head(h).transpose() / static_cast<double>(c.aspect.length());
        for (int r = c.opinion.start; r <= c.opinion.end; ++r)
            ds.row(r) += d_input.tail(h).transpose() / static_cast<double>(c.opinion.length());
    }
    for (std::size_t b = 0; b < encoded.size(); ++b) {
        const auto& enc = encoded[b];
        for (std::size_t i = 0; i < enc.size(); ++i) {
            const auto [lo, hi] = enc.window_of(i);
            const double share = 1.0 / static_cast<double>(hi - lo);
            for (std::size_t j = lo; j < hi; ++j)
                g.token_embeddings.row(static_cast<Eigen::Index>(enc.buckets[j])) +=
                    share * d_states[b].row(static_cast<Eigen::Index>(i));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochMetrics {
    int epoch = 0;
    LossBreakdown loss;  // means over the epoch's batches
    double temperature = 0.0;
    double val_pair_f1 = 0.0;
};

struct TrainResult {
    EncoderParams best;
    EncoderParams last;
    int best_epoch = 0;
    std::vector<EpochMetrics> metrics;
    std::size_t skipped_sentences = 0;
};

/// The decision rule that scores an epoch: the contrastive one whenever the
/// contrastive term is trained, the linear head otherwise.
inline Strategy selection_strategy(const TrainConfig& cfg) noexcept {
    return cfg.beta > 0.0 ? Strategy::contrastive : Strategy::linear;
}

inline double validation_pair_f1(const Dataset& val, const EncoderParams& p, const TrainConfig& cfg) {
    return pair_f1(predict_pairs(val, p, selection_strategy(cfg)), val).f1;
}

/// Distinct, reproducible sub-streams derived from the run seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(salt)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

/// Trains from a fresh seeded initialization. Sentences without triplets are
/// skipped and counted. After every epoch both decision cuts are
/// re-calibrated on the training split; the first epoch with the best
/// validation pair F1 is kept (the training split stands in when `val` is
/// empty).
inline TrainResult train(const Dataset& ds, const Dataset& val, const TrainConfig& cfg,
                         const std::function<void(const EpochMetrics&)>& on_epoch = {}) {
    cfg.validate();
    TrainResult result{EncoderParams::init(cfg.encoder, derive_seed(cfg.seed, 1), cfg.tau_init), {}, 0, {}, 0};
    std::vector<const Sentence*> usable;
    for (const auto& s : ds.sentences) {
        if (s.triplets.empty())
            ++result.skipped_sentences;
        else
            usable.push_back(&s);
    }
    if (usable.empty()) throw Error(ErrorKind::EmptyDataset, "no training sentence has a triplet");
    const Dataset& scored = val.sentences.empty() ? ds : val;
    Dataset train_view{ds.name, ds.split, {}};
    for (const Sentence* s : usable) train_view.sentences.push_back(*s);

    EncoderParams& params = result.last;
    params = result.best;
    OptimizerState opt{cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps, cfg.weight_decay, {}, {}, 0};
    std::mt19937_64 shuffle_stream(derive_seed(cfg.seed, 2));
    std::mt19937_64 dropout_stream(derive_seed(cfg.seed, 3));
    double best_f1 = -1.0;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(usable.begin(), usable.end(), shuffle_stream);
        EpochMetrics m;
        m.epoch = epoch;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < usable.size(); start += cfg.batch_size) {
            const std::vector<const Sentence*> batch(usable.begin() + static_cast<std::ptrdiff_t>(start),
                                                     usable.begin() + static_cast<std::ptrdiff_t>(std::min(usable.size(), start + cfg.batch_size)));
            BatchResult br = batch_loss(params, batch, cfg, &dropout_stream);
            if (!std::isfinite(br.loss.total))
                throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch) + ", step " +
                                                          std::to_string(opt.step + 1) + ": loss is not finite");
            adamw_step(params, br.grads, opt, cfg.learning_rate);
            params.temperature = std::max(params.temperature, cfg.min_temperature);
            m.loss.extraction += br.loss.extraction;
            m.loss.contrastive += br.loss.contrastive;
            m.loss.total += br.loss.total;
            ++batches;
        }
        m.loss.extraction /= static_cast<double>(batches);
        m.loss.contrastive /= static_cast<double>(batches);
        m.loss.total /= static_cast<double>(batches);
        m.loss.alpha = cfg.alpha;
        m.loss.beta = cfg.beta;
        m.temperature = params.temperature;
        params.decision_margin = calibrate_margin(train_view, params);
        params.linear_threshold = calibrate_linear_threshold(train_view, params);
        m.val_pair_f1 = validation_pair_f1(scored, params, cfg);
        if (m.val_pair_f1 > best_f1) {
            best_f1 = m.val_pair_f1;
            result.best = params;
            result.best_epoch = epoch;
        }
        result.metrics.push_back(m);
        if (on_epoch) on_epoch(m);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Gradient verification

struct TensorCheck {
    std::string name;
    std::size_t checked = 0;
    double max_rel_error = 0.0;
    double max_abs_analytic = 0.0;
};

struct GradCheckReport {
    std::vector<TensorCheck> tensors;
    double max_rel_error = 0.0;
    double tolerance = 0.0;

    bool passed() const noexcept { return max_rel_error < tolerance; }
};

/// |a - n| / max(|a|, |n|, floor). The floor sits at the central-difference
/// roundoff level for a 1e-5 step on an O(1) loss.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

/// Compares `analytic` against central differences of `loss` for every
/// element of every tensor, except token-embedding rows outside `rows`.
inline GradCheckReport check_gradients(const EncoderParams& params, const EncoderParams& analytic,
                                       const std::function<double(const EncoderParams&)>& loss,
                                       const std::vector<std::size_t>& rows, double step, double tolerance) {
    GradCheckReport report;
    report.tolerance = tolerance;
    EncoderParams probe = params;
    const auto probe_views = probe.tensors();
    const auto analytic_views = analytic.tensors();
    for (std::size_t k = 0; k < probe_views.size(); ++k) {
        const TensorView& t = probe_views[k];
        TensorCheck tc{std::string(t.name), 0, 0.0, 0.0};
        auto check = [&](std::size_t idx) {
            const double saved = t.data[idx];
            t.data[idx] = saved + step;
            const double up = loss(probe);
            t.data[idx] = saved - step;
            const double down = loss(probe);
            t.data[idx] = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic_views[k].data[idx];
            tc.max_rel_error = std::max(tc.max_rel_error, relative_error(a, numeric));
            tc.max_abs_analytic = std::max(tc.max_abs_analytic, std::abs(a));
            ++tc.checked;
        };
        if (t.name == "token_embeddings") {
            for (auto r : rows)
                for (std::size_t c = 0; c < t.cols; ++c) check(c * t.rows + r);
        } else {
            for (std::size_t i = 0; i < t.size(); ++i) check(i);
        }
        report.max_rel_error = std::max(report.max_rel_error, tc.max_rel_error);
        report.tensors.push_back(std::move(tc));
    }
    return report;
}

/// Analytic vs central-difference gradients of the full joint loss on one
/// batch. Dropout, when configured, uses the same mask on every evaluation.
inline GradCheckReport grad_check(const EncoderParams& params, const std::vector<const Sentence*>& batch,
                                  const TrainConfig& cfg, double tolerance = 1e-4, double step = 1e-5,
                                  std::uint64_t mask_seed = 0) {
    auto loss_and_grads = [&](const EncoderParams& p) {
        std::mt19937_64 stream(mask_seed);
        return batch_loss(p, batch, cfg, cfg.dropout > 0.0 ? &stream : nullptr);
    };
    const BatchResult analytic = loss_and_grads(params);
    std::vector<std::size_t> rows;
    for (const Sentence* s : batch)
        for (const auto& tok : s->tokens) rows.push_back(params.bucket(tok));
    for (const auto* text : {&params.config.pair_text, &params.config.unpair_text})
        for (const auto& w : detail::split_whitespace(*text)) rows.push_back(params.bucket(w));
    std::sort(rows.begin(), rows.end());
    rows.erase(std::unique(rows.begin(), rows.end()), rows.end());
    return check_gradients(params, analytic.grads, [&](const EncoderParams& p) { return loss_and_grads(p).loss.total; },
                           rows, step, tolerance);
}

} // namespace pairlab
