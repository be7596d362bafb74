#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"
#include "pairlab/trainer.hpp"

using namespace pairlab;

namespace {

struct Scalars {
    std::vector<double> w, g;
    std::vector<TensorView> wv() { return {TensorView{"w", w.data(), w.size(), 1}}; }
    std::vector<TensorView> gv() { return {TensorView{"w", g.data(), g.size(), 1}}; }
};

OptimizerState adam(double wd) { return OptimizerState{0.9, 0.999, 1e-8, wd, {}, {}, 0}; }

TrainConfig small_config(double alpha, double beta, int epochs, std::uint64_t seed) {
    TrainConfig cfg = TrainConfig::for_profile(Profile::desk);
    cfg.encoder.vocab_buckets = 512;
    cfg.encoder.hidden_dim = 16;
    cfg.encoder.projection_dim = 16;
    cfg.alpha = alpha;
    cfg.beta = beta;
    cfg.epochs = epochs;
    cfg.seed = seed;
    return cfg;
}

std::vector<const Sentence*> pointers(const Dataset& ds, std::size_t n) {
    std::vector<const Sentence*> out;
    for (std::size_t i = 0; i < n && i < ds.sentences.size(); ++i) out.push_back(&ds.sentences[i]);
    return out;
}

EncoderConfig grad_config() {
    EncoderConfig cfg;
    cfg.vocab_buckets = 64;
    cfg.hidden_dim = 6;
    cfg.projection_dim = 5;
    return cfg;
}

} // namespace

TEST(AdamW, FirstBiasCorrectedStep) {
    Scalars s{{1.0}, {1.0}};
    auto st = adam(0.0);
    adamw_step(s.wv(), s.gv(), st, 0.1);
    // m_hat = 1, v_hat = 1: w = 1 - 0.1 * 1 / (1 + 1e-8)
    EXPECT_NEAR(s.w[0], 0.900000001, 1e-15);
    EXPECT_EQ(st.step, 1u);
}

TEST(AdamW, ZeroGradientWithoutDecayIsIdentity) {
    Scalars s{{1.0, -3.5, 0.25}, {0.0, 0.0, 0.0}};
    auto st = adam(0.0);
    for (int i = 0; i < 5; ++i) adamw_step(s.wv(), s.gv(), st, 0.1);
    EXPECT_EQ(s.w, (std::vector<double>{1.0, -3.5, 0.25}));
}

TEST(AdamW, DecoupledDecay) {
    Scalars s{{1.0}, {0.0}};
    auto st = adam(0.1);
    adamw_step(s.wv(), s.gv(), st, 0.1);
    EXPECT_NEAR(s.w[0], 0.99, 1e-15);
}

TEST(AdamW, TwoStepsMatchOracle) {
    Scalars s{{1.0, -2.0}, {0.5, -1.0}};
    auto st = adam(0.01);
    adamw_step(s.wv(), s.gv(), st, 0.01);
    s.g = {0.1, 0.3};
    adamw_step(s.wv(), s.gv(), st, 0.01);
    EXPECT_NEAR(s.w[0], 0.98177060063844523, 1e-14);
    EXPECT_NEAR(s.w[1], -1.9853225342429126, 1e-14);
}

TEST(AdamW, TemperatureIsNotDecayed) {
    EncoderParams p = EncoderParams::init(grad_config(), 1, 0.07);
    const EncoderParams before = p;
    EncoderParams g = EncoderParams::zeros(grad_config());
    auto st = adam(0.5);
    adamw_step(p, g, st, 0.1);
    EXPECT_EQ(p.temperature, 0.07);
    EXPECT_NEAR(p.pair_weight(0, 0), before.pair_weight(0, 0) * 0.95, 1e-15);
}

TEST(AdamW, Errors) {
    Scalars s{{1.0}, {std::nan("")}};
    auto st = adam(0.0);
    try {
        adamw_step(s.wv(), s.gv(), st, 0.1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NonFiniteGradient);
    }
    Scalars t{{1.0, 2.0}, {1.0}};
    try {
        adamw_step(t.wv(), t.gv(), st, 0.1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::ShapeMismatch);
    }
    Scalars u{{1.0}, {1.0}};
    EXPECT_THROW(adamw_step(u.wv(), u.gv(), st, 0.0), Error);
}

TEST(TrainConfig, ProfilesAndValidation) {
    const auto pf = TrainConfig::for_profile(Profile::paper_faithful);
    EXPECT_EQ(pf.learning_rate, 3e-4);
    EXPECT_EQ(pf.batch_size, 16u);
    EXPECT_EQ(pf.epochs, 20);
    EXPECT_EQ(pf.dropout, 0.5);
    EXPECT_EQ(pf.alpha, 0.9);
    EXPECT_EQ(pf.beta, 0.1);
    EXPECT_EQ(pf.tau_init, 0.07);
    EXPECT_EQ(pf.encoder.projection_dim, 128u);
    EXPECT_EQ(TrainConfig::for_profile(Profile::desk).encoder.projection_dim, 64u);

    auto bad = [](auto mutate) {
        TrainConfig c;
        mutate(c);
        try {
            c.validate();
        } catch (const Error& e) {
            return e.kind() == ErrorKind::InvalidConfig;
        }
        return false;
    };
    EXPECT_TRUE(bad([](TrainConfig& c) { c.learning_rate = 0; }));
    EXPECT_TRUE(bad([](TrainConfig& c) { c.batch_size = 0; }));
    EXPECT_TRUE(bad([](TrainConfig& c) { c.epochs = 0; }));
    EXPECT_TRUE(bad([](TrainConfig& c) { c.dropout = 1.0; }));
    EXPECT_TRUE(bad([](TrainConfig& c) { c.alpha = -1; }));
    EXPECT_TRUE(bad([](TrainConfig& c) { c.alpha = c.beta = 0; }));
    EXPECT_TRUE(bad([](TrainConfig& c) { c.tau_init = 0; }));
    EXPECT_EQ(profile_from_string("paper-faithful"), Profile::paper_faithful);
    EXPECT_FALSE(profile_from_string("fast"));
}

TEST(GradCheck, RelativeErrorFloor) {
    EXPECT_DOUBLE_EQ(relative_error(2.0, 1.0), 0.5);
    EXPECT_EQ(relative_error(0.0, 0.0), 0.0);
    EXPECT_NEAR(relative_error(1e-9, 1e-9 + 1e-11), 1e-5, 1e-15);
    EXPECT_DOUBLE_EQ(relative_error(1e-3, 1.1e-3), 0.1e-3 / 1.1e-3);
}

TEST(GradCheck, FreshParamsSmallBatch) {
    const Dataset ds = synth_corpus(test::two_by_two(4), 1);
    TrainConfig cfg;
    cfg.encoder = grad_config();
    cfg.alpha = 0.9;
    cfg.beta = 0.1;
    cfg.dropout = 0.0;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto p = EncoderParams::init(cfg.encoder, seed, 0.07 + 0.1 * static_cast<double>(seed));
        const auto report = grad_check(p, pointers(ds, 4), cfg);
        EXPECT_TRUE(report.passed()) << report.max_rel_error;
        for (const auto& t : report.tensors) EXPECT_GT(t.checked, 0u) << t.name;
    }
}

TEST(GradCheck, WithFixedDropoutMask) {
    SynthSpec spec = test::two_by_two(3);
    spec.max_aspects = 3;
    const Dataset ds = synth_corpus(spec, 2);
    TrainConfig cfg;
    cfg.encoder = grad_config();
    cfg.alpha = 0.5;
    cfg.beta = 1.0;
    cfg.dropout = 0.5;
    const auto p = EncoderParams::init(cfg.encoder, 4, 0.2);
    const auto report = grad_check(p, pointers(ds, 3), cfg, 1e-4, 1e-5, 99);
    EXPECT_TRUE(report.passed()) << report.max_rel_error;
}

TEST(GradCheck, ZeroBetaZeroesDescriptionBlock) {
    const Dataset ds = synth_corpus(test::two_by_two(4), 3);
    TrainConfig cfg;
    cfg.encoder = grad_config();
    cfg.alpha = 1.0;
    cfg.beta = 0.0;
    cfg.dropout = 0.0;
    const auto p = EncoderParams::init(cfg.encoder, 5, 0.07);
    const auto r = batch_loss(p, pointers(ds, 4), cfg, nullptr);
    EXPECT_TRUE(r.grads.desc_weight.isZero(0.0));
    EXPECT_TRUE(r.grads.desc_bias.isZero(0.0));
    EXPECT_TRUE(r.grads.class_vector.isZero(0.0));
    EXPECT_EQ(r.grads.temperature, 0.0);
    EXPECT_EQ(r.loss.total, r.loss.extraction);
}

TEST(GradCheck, CorruptedGradientFails) {
    const Dataset ds = synth_corpus(test::two_by_two(2), 4);
    TrainConfig cfg;
    cfg.encoder = grad_config();
    cfg.dropout = 0.0;
    const auto p = EncoderParams::init(cfg.encoder, 6, 0.07);
    const auto batch = pointers(ds, 2);
    auto analytic = batch_loss(p, batch, cfg, nullptr).grads;
    analytic.pair_weight(0, 0) += 1e-2;
    std::vector<std::size_t> rows;
    const auto report = check_gradients(p, analytic,
                                        [&](const EncoderParams& q) { return batch_loss(q, batch, cfg, nullptr).loss.total; },
                                        rows, 1e-5, 1e-4);
    EXPECT_FALSE(report.passed());
    EXPECT_GT(report.tensors[1].max_rel_error, 1e-4);
}

TEST(BatchLoss, SingleLabelBatchHasNoContrastiveTerm) {
    const Dataset ds{"x", Split::train, {parse_dataset_line("Nice keyboard .####[([1], [0], 'POS')]")}};
    TrainConfig cfg;
    cfg.encoder = grad_config();
    cfg.dropout = 0.0;
    const auto p = EncoderParams::init(cfg.encoder, 1, 0.07);
    const auto r = batch_loss(p, pointers(ds, 1), cfg, nullptr);
    EXPECT_EQ(r.candidates, 1u);
    EXPECT_EQ(r.loss.contrastive, 0.0);
    EXPECT_GT(r.loss.extraction, 0.0);
}

TEST(Train, DeterministicForSeed) {
    const Dataset tr = synth_corpus(test::two_by_two(40), 1);
    const Dataset va = synth_corpus(test::two_by_two(20, Split::val), 2);
    const auto cfg = small_config(0.9, 0.1, 4, 17);
    const auto a = train(tr, va, cfg), b = train(tr, va, cfg);
    ASSERT_EQ(a.metrics.size(), 4u);
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
        EXPECT_EQ(a.metrics[i].loss.total, b.metrics[i].loss.total);
        EXPECT_EQ(a.metrics[i].val_pair_f1, b.metrics[i].val_pair_f1);
        EXPECT_EQ(a.metrics[i].temperature, b.metrics[i].temperature);
    }
    EXPECT_TRUE(a.best == b.best);
    EXPECT_TRUE(a.last == b.last);
    const auto c = train(tr, va, small_config(0.9, 0.1, 4, 18));
    EXPECT_NE(a.metrics.back().loss.total, c.metrics.back().loss.total);
}

TEST(Train, LossTraceSettlesAfterEpochFive) {
    const Dataset tr = synth_corpus(test::two_by_two(120), 21);
    const auto r = train(tr, Dataset{}, small_config(0.9, 0.1, 30, 3));
    // Three-epoch moving average may not rise by more than 5% after epoch 5.
    std::vector<double> smooth;
    for (std::size_t i = 2; i < r.metrics.size(); ++i)
        smooth.push_back((r.metrics[i - 2].loss.total + r.metrics[i - 1].loss.total + r.metrics[i].loss.total) / 3);
    for (std::size_t i = 4; i < smooth.size(); ++i) EXPECT_LE(smooth[i], 1.05 * smooth[i - 1]) << "epoch " << i + 3;
    EXPECT_LT(r.metrics.back().loss.total, r.metrics.front().loss.total);
}

TEST(Train, BestEpochIsFirstMaximum) {
    const Dataset tr = synth_corpus(test::two_by_two(60), 5);
    const Dataset va = synth_corpus(test::two_by_two(30, Split::val), 6);
    const auto r = train(tr, va, small_config(0.0, 1.0, 8, 2));
    double best = -1;
    int best_epoch = 0;
    for (const auto& m : r.metrics)
        if (m.val_pair_f1 > best) {
            best = m.val_pair_f1;
            best_epoch = m.epoch;
        }
    EXPECT_EQ(r.best_epoch, best_epoch);
    EXPECT_NEAR(validation_pair_f1(va, r.best, small_config(0.0, 1.0, 8, 2)), best, 0.0);
}

TEST(Train, SkipsEmptySentencesAndRejectsEmptyData) {
    Dataset tr = synth_corpus(test::two_by_two(10), 1);
    tr.sentences.push_back(parse_dataset_line("a b####[]"));
    const auto r = train(tr, Dataset{}, small_config(0.9, 0.1, 1, 1));
    EXPECT_EQ(r.skipped_sentences, 1u);

    const Dataset empty{"e", Split::train, {parse_dataset_line("a b####[]")}};
    try {
        train(empty, Dataset{}, small_config(0.9, 0.1, 1, 1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyDataset);
    }
    auto bad = small_config(0.9, 0.1, 1, 1);
    bad.learning_rate = -1;
    EXPECT_THROW(train(tr, Dataset{}, bad), Error);
}

TEST(Train, TemperatureStaysAboveFloor) {
    const Dataset tr = synth_corpus(test::two_by_two(40), 9);
    auto cfg = small_config(0.0, 1.0, 5, 1);
    cfg.tau_init = 0.0011;
    cfg.learning_rate = 1e-2;
    const auto r = train(tr, Dataset{}, cfg);
    for (const auto& m : r.metrics) EXPECT_GE(m.temperature, cfg.min_temperature);
}

TEST(DeriveSeed, DistinctStreams) {
    EXPECT_NE(derive_seed(1, 1), derive_seed(1, 2));
    EXPECT_NE(derive_seed(1, 1), derive_seed(2, 1));
    EXPECT_EQ(derive_seed(7, 3), derive_seed(7, 3));
}
