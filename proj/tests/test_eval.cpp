#include <gtest/gtest.h>

#include <random>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "pairlab/eval.hpp"

using namespace pairlab;

namespace {

Triplet trip(int a, int o, Sentiment s = Sentiment::positive) { return {{a, a}, {o, o}, s}; }

Dataset gold_of(std::vector<std::vector<Triplet>> triplets) {
    Dataset ds;
    for (auto& t : triplets) {
        Sentence s;
        s.tokens.assign(10, "w");
        s.triplets = std::move(t);
        ds.sentences.push_back(std::move(s));
    }
    return ds;
}

/// Independent brute force: count matches over the flattened, tagged sets.
template <class T, class F>
std::tuple<std::size_t, std::size_t, std::size_t> brute(const std::vector<std::vector<T>>& pred, const Dataset& gold, F key) {
    std::set<std::pair<std::size_t, T>> p, g;
    for (std::size_t i = 0; i < pred.size(); ++i)
        for (const auto& x : pred[i]) p.insert({i, x});
    for (std::size_t i = 0; i < gold.sentences.size(); ++i)
        for (const auto& t : gold.sentences[i].triplets) g.insert({i, key(t)});
    std::size_t tp = 0;
    for (const auto& x : p) tp += g.count(x);
    return {tp, p.size() - tp, g.size() - tp};
}

} // namespace

TEST(TripletF1, Examples) {
    const Dataset gold = gold_of({{trip(1, 0), trip(2, 3), trip(4, 5)}});
    EXPECT_EQ(triplet_f1({gold.sentences[0].triplets}, gold).f1, 1.0);

    const auto two_of_three = triplet_f1({{trip(1, 0), trip(2, 3), trip(6, 7)}}, gold);
    EXPECT_EQ(two_of_three.precision, 2.0 / 3.0);
    EXPECT_EQ(two_of_three.recall, 2.0 / 3.0);
    EXPECT_EQ(two_of_three.f1, 2.0 / 3.0);

    const auto empty = triplet_f1({{}}, gold);
    EXPECT_EQ(empty.f1, 0.0);
    EXPECT_EQ(empty.fn, 3u);

    EXPECT_EQ(triplet_f1({{trip(1, 0, Sentiment::negative)}}, gold).tp, 0u);
    try {
        triplet_f1({}, gold);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::AlignmentError);
    }
}

TEST(PairF1, Examples) {
    const Dataset gold = gold_of({{trip(1, 0), trip(2, 3)}, {trip(4, 5), trip(6, 7)}});
    const auto wrong_sentiment = pair_f1(pairs_of({{trip(1, 0, Sentiment::negative), trip(2, 3, Sentiment::neutral)},
                                                   {trip(4, 5, Sentiment::negative), trip(6, 7, Sentiment::negative)}}),
                                         gold);
    EXPECT_EQ(wrong_sentiment.f1, 1.0);

    const auto half = pair_f1({{TermPair{{1, 1}, {0, 0}}}, {TermPair{{4, 4}, {5, 5}}}}, gold);
    EXPECT_EQ(half.precision, 1.0);
    EXPECT_EQ(half.recall, 0.5);
    EXPECT_EQ(half.f1, 2.0 / 3.0);

    EXPECT_EQ(pair_f1({{}}, gold_of({{}})).f1, 0.0);
}

TEST(F1, MatchesBruteForceOracle) {
    std::mt19937_64 rng(2024);
    auto random_triplets = [&](std::size_t max) {
        std::vector<Triplet> v;
        const std::size_t n = rng() % (max + 1);
        for (std::size_t i = 0; i < n; ++i)
            v.push_back(trip(static_cast<int>(rng() % 3), static_cast<int>(rng() % 3), static_cast<Sentiment>(rng() % 3)));
        return v;
    };
    for (int instance = 0; instance < 1000; ++instance) {
        const std::size_t sentences = 1 + rng() % 3;
        std::vector<std::vector<Triplet>> gold_t, pred;
        for (std::size_t i = 0; i < sentences; ++i) {
            gold_t.push_back(random_triplets(5));
            pred.push_back(random_triplets(5));
        }
        const Dataset gold = gold_of(gold_t);
        const auto t = triplet_f1(pred, gold);
        EXPECT_EQ(std::tie(t.tp, t.fp, t.fn), brute(pred, gold, [](const Triplet& x) { return x; }));
        const auto p = pair_f1(pairs_of(pred), gold);
        EXPECT_EQ(std::tie(p.tp, p.fp, p.fn), brute(pairs_of(pred), gold, [](const Triplet& x) { return x.pair(); }));
        auto unique_pairs = [](const std::vector<std::vector<Triplet>>& all) {
            for (const auto& v : all) {
                std::set<TermPair> seen;
                for (const auto& x : v)
                    if (!seen.insert(x.pair()).second) return false;
            }
            return true;
        };
        if (unique_pairs(gold_t) && unique_pairs(pred)) {
            EXPECT_GE(p.f1, t.f1);
        }
    }
}

TEST(EvalReport, ZeroDenominators) {
    const auto r = EvalReport::from_counts(0, 0, 0);
    EXPECT_EQ(r.precision, 0.0);
    EXPECT_EQ(r.recall, 0.0);
    EXPECT_EQ(r.f1, 0.0);
    EXPECT_EQ(EvalReport::from_counts(0, 3, 0).f1, 0.0);
}

TEST(CompareStrategies, DeterministicAndRandomDependsOnlyOnSeed) {
    const Dataset ds = synth_corpus(test::two_by_two(60), 3);
    const EncoderParams a = EncoderParams::init(EncoderConfig{}, 1, 0.07);
    const EncoderParams b = EncoderParams::init(EncoderConfig{}, 2, 0.07);
    const auto x = compare_strategies(ds, a, 5), y = compare_strategies(ds, a, 5);
    EXPECT_EQ(x.random.f1, y.random.f1);
    EXPECT_EQ(x.linear.f1, y.linear.f1);
    EXPECT_EQ(x.contrastive.f1, y.contrastive.f1);
    EXPECT_EQ(compare_strategies(ds, b, 5).random.tp, x.random.tp);
    EXPECT_NE(compare_strategies(ds, a, 6).random.tp, x.random.tp);
}

TEST(CompareStrategies, RandomNearMonteCarloExpectation) {
    const Dataset ds = synth_corpus(test::two_by_two(300), 11);
    const double expected = random_f1_expectation(ds, 100000, 1);
    EXPECT_NEAR(expected, 0.5, 0.02);
    double sum = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed)
        sum += pair_f1(predict_pairs(ds, EncoderParams::init(EncoderConfig{}, 1, 0.07), Strategy::random, seed), ds).f1;
    EXPECT_NEAR(sum / 20, expected, 0.02);
}

TEST(PredictPairs, LinearThresholdAndMargin) {
    const Dataset ds = synth_corpus(test::two_by_two(30), 1);
    EncoderParams p = EncoderParams::init(EncoderConfig{}, 3, 0.07);
    p.linear_threshold = -1.0;
    const auto all = pair_f1(predict_pairs(ds, p, Strategy::linear), ds);
    EXPECT_EQ(all.fp + all.tp, 120u);
    p.linear_threshold = 2.0;
    EXPECT_EQ(pair_f1(predict_pairs(ds, p, Strategy::linear), ds).tp, 0u);
    p.decision_margin = -3.0;
    EXPECT_EQ(pair_f1(predict_pairs(ds, p, Strategy::contrastive), ds).recall, 1.0);
    p.decision_margin = 3.0;
    EXPECT_EQ(pair_f1(predict_pairs(ds, p, Strategy::contrastive), ds).tp, 0u);
}

TEST(BestF1Cut, PicksSeparatingMidpoint) {
    EXPECT_NEAR(detail::best_f1_cut({{0.9, true}, {0.1, false}, {0.7, true}, {0.3, false}}), 0.5, 1e-15);
    // Everything matched is best when gold dominates.
    EXPECT_EQ(detail::best_f1_cut({{0.2, true}, {0.1, true}, {0.3, false}}), 0.1 - 1.0);
    // Ties are never split.
    const double cut = detail::best_f1_cut({{0.5, true}, {0.5, false}, {0.1, false}});
    EXPECT_NEAR(cut, 0.3, 1e-15);
    EXPECT_EQ(detail::best_f1_cut({}), 0.0);
}

TEST(Pca, RotationOnlyForCentredPlanarData) {
    std::vector<Vec> pts;
    for (auto [x, y] : std::vector<std::pair<double, double>>{{1, 2}, {-1, -2}, {3, -1}, {-3, 1}, {0.5, 0}, {-0.5, 0}})
        pts.push_back((Vec(2) << x, y).finished());
    const Pca pca = fit_pca(pts, 2);
    for (std::size_t i = 0; i < pts.size(); ++i)
        for (std::size_t j = 0; j < pts.size(); ++j)
            EXPECT_NEAR((pca.project(pts[i]) - pca.project(pts[j])).norm(), (pts[i] - pts[j]).norm(), 1e-12);
}

TEST(Pca, EigenvaluesMatchOracle) {
    std::vector<Vec> pts;
    for (auto r : std::vector<std::array<double, 3>>{{2, 0, 1}, {0, 1, 0}, {1, 1, 1}, {3, 2, 0}, {0, 0, 2}})
        pts.push_back((Vec(3) << r[0], r[1], r[2]).finished());
    const Pca pca = fit_pca(pts, 2);
    EXPECT_NEAR(pca.explained(0), 1.77489359, 1e-8);
    EXPECT_NEAR(pca.explained(1), 0.58873664, 1e-8);
    EXPECT_NEAR(pca.explained(2), 0.11636977, 1e-8);
}

TEST(Pca, OrthonormalAndOrdered) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> g;
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Vec> pts;
        const int dim = 3 + trial % 6;
        for (int i = 0; i < 40; ++i) pts.push_back(Vec::NullaryExpr(dim, [&] { return g(rng) * (1 + i % 3); }));
        const Pca pca = fit_pca(pts, 2);
        const Mat gram = pca.components.transpose() * pca.components;
        EXPECT_LT((gram - Mat::Identity(2, 2)).cwiseAbs().maxCoeff(), 1e-10);
        for (Eigen::Index i = 1; i < pca.explained.size(); ++i) EXPECT_LE(pca.explained(i), pca.explained(i - 1));
    }
}

TEST(Pca, Degenerate) {
    const Vec a = Vec::Ones(3);
    try {
        fit_pca({a, a, a, 2 * a}, 2);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DegenerateCovariance);
    }
}

TEST(ExportEmbeddings, RowCountAndCsvShape) {
    SynthSpec spec;
    spec.sentences = 40;
    spec.max_aspects = 3;
    const Dataset ds = synth_corpus(spec, 8);
    const EncoderParams p = EncoderParams::init(EncoderConfig{}, 1, 0.07);
    const auto dump = export_embeddings(ds, p);
    std::size_t expected = 0;
    for (const auto& s : ds.sentences) expected += s.aspects().size() * s.opinions().size();
    EXPECT_EQ(dump.rows.size(), expected);

    std::ostringstream csv;
    write_embedding_csv(csv, dump);
    std::istringstream in(csv.str());
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "sid,a_start,a_end,o_start,o_end,label,x,y");
    std::size_t rows = 0, centers = 0;
    while (std::getline(in, line)) (line.rfind("CENTER,", 0) == 0 ? centers : rows) += 1;
    EXPECT_EQ(rows, expected);
    EXPECT_EQ(centers, 2u);
    EXPECT_NE(csv.str().find("CENTER,pair,"), std::string::npos);
    EXPECT_NE(csv.str().find("CENTER,unpair,"), std::string::npos);
}

TEST(CentroidGaps, UntrainedIsSmallAndRecorded) {
    const Dataset ds = synth_corpus(test::two_by_two(100, Split::val), 12);
    const EncoderParams p = EncoderParams::init(EncoderConfig{}, 1, 0.07);
    const auto gaps = centroid_gaps(all_pair_examples(ds, p), DescriptionSet::from(p));
    RecordProperty("untrained_matched_gap", std::to_string(gaps.matched));
    RecordProperty("untrained_mismatched_gap", std::to_string(gaps.mismatched));
    EXPECT_TRUE(std::isfinite(gaps.matched));
    EXPECT_TRUE(std::isfinite(gaps.mismatched));
}

TEST(FormatDouble, ShortestRoundTrip) {
    for (double v : {0.1, -2.5, 1e-300, 123456.789, 0.0}) EXPECT_EQ(std::stod(format_double(v)), v);
}
