#include <cmath>

#include <gtest/gtest.h>

#include "maskmatch/common/error.hpp"
#include "maskmatch/eval/protocol.hpp"
#include "support/stubs.hpp"

using namespace maskmatch;
using namespace maskmatch::eval;

namespace {

// 1 for same identity, 0 otherwise.
class OracleScorer final : public pairs::PairScorer {
public:
    double similarity(const data::ImageRecord& a, const data::ImageRecord& b) const override {
        return a.identity_id == b.identity_id ? 1.0 : 0.0;
    }
};

class ConstantScorer final : public pairs::PairScorer {
public:
    double similarity(const data::ImageRecord&, const data::ImageRecord&) const override { return 0.5; }
};

class ExpOf final : public pairs::PairScorer {
public:
    explicit ExpOf(const pairs::PairScorer& inner) : inner_(inner) {}
    double similarity(const data::ImageRecord& a, const data::ImageRecord& b) const override {
        return std::exp(5.0 * inner_.similarity(a, b)) - 2.0;
    }

private:
    const pairs::PairScorer& inner_;
};

}  // namespace

TEST(ValidationPrecision, PerfectScorerAlwaysWins) {
    const auto index = testkit::toy_index({{"v", 8}});
    pairs::PairPool pool(index);
    Rng rng(1);
    const auto r = validation_precision(OracleScorer{}, pool, {100, 19}, rng);
    EXPECT_EQ(r.precision, 1.0);
    EXPECT_EQ(r.successes, 100u);
    EXPECT_EQ(r.imposters_per_step, 19u);
}

TEST(ValidationPrecision, TiesAreFailures) {
    const auto index = testkit::toy_index({{"v", 8}});
    pairs::PairPool pool(index);
    Rng rng(2);
    EXPECT_EQ(validation_precision(ConstantScorer{}, pool, {50, 19}, rng).precision, 0.0);
}

TEST(ValidationPrecision, RandomScorerSitsNearOneInTwenty) {
    const auto index = testkit::toy_index({{"v", 30}, {"w", 30}});
    pairs::PairPool pool(index);
    testkit::UniformRandomScorer scorer(3);
    Rng rng(4);
    const auto r = validation_precision(scorer, pool, {4000, 19}, rng);
    EXPECT_NEAR(r.precision, 0.05, 0.0104);  // 3 sigma at n = 4000
}

TEST(ValidationPrecision, InvariantUnderMonotoneTransform) {
    const auto index = testkit::toy_index({{"v", 12}}, 3);
    pairs::PairPool pool(index);
    testkit::HashScorer base(9);
    ExpOf transformed(base);
    Rng r1(5), r2(5);
    EXPECT_EQ(validation_precision(base, pool, {300, 19}, r1).successes,
              validation_precision(transformed, pool, {300, 19}, r2).successes);
}

TEST(ValidationPrecision, NeedsTwoIdentities) {
    const auto index = testkit::toy_index({{"v", 1}});
    pairs::PairPool pool(index);
    Rng rng(0);
    EXPECT_THROW(validation_precision(OracleScorer{}, pool, {}, rng), InsufficientIdentities);
}

TEST(ScorePairs, SplitsByLabelInOrder) {
    const auto index = testkit::toy_index({{"fei", 6}}, 2);
    const auto list = pairs::generate_benchmark_pairs(index, 20, 4);
    testkit::HashScorer scorer(1);
    const auto scores = score_pairs(scorer, list, index, 3);
    ASSERT_EQ(scores.authentic.size(), 10u);
    ASSERT_EQ(scores.imposter.size(), 10u);
    std::size_t a = 0, i = 0;
    for (const auto& p : list.pairs) {
        const double s = scorer.similarity(index.at(p.reference), index.at(p.probe));
        EXPECT_EQ(s, p.label == pairs::Label::authentic ? scores.authentic[a++] : scores.imposter[i++]);
    }
}

TEST(ScorePairs, UnknownImageNamesThePair) {
    const auto index = testkit::toy_index({{"fei", 4}}, 1);
    auto list = pairs::generate_benchmark_pairs(index, 4, 0);
    list.pairs[3].probe = "ghost";
    try {
        score_pairs(testkit::HashScorer(0), list, index);
        FAIL() << "expected MissingImage";
    } catch (const MissingImage& e) {
        EXPECT_EQ(e.pair_index(), 3u);
    }
}
