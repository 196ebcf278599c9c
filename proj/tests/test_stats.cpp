#include "cvrace/stats.hpp"
#include "cvrace/studentized_range.hpp"
#include "fixtures.hpp"
#include "support.hpp"

#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <doctest.h>

using namespace cvrace;
using namespace cvrace::stats;

namespace {

QuantileCache shared_quantiles;

double sqrt2_t(double alpha, double df)
{
    if (std::isinf(df)) {
        return std::sqrt(2.0) * boost::math::quantile(boost::math::normal(), 1.0 - alpha / 2);
    }
    return std::sqrt(2.0) * boost::math::quantile(boost::math::students_t(df), 1.0 - alpha / 2);
}

ScoreMatrix random_matrix(std::size_t m, std::size_t b, std::mt19937_64& gen, double sd = 1.0)
{
    std::normal_distribution<double> z(0.0, sd);
    std::vector<double> v(m * b);
    for (auto& x : v) {
        x = z(gen);
    }
    std::vector<std::string> blocks;
    for (std::size_t j = 0; j < b; ++j) {
        blocks.push_back("b" + std::to_string(j));
    }
    return {fixtures::model_names(m), blocks, BlockKind::splits, v};
}

std::vector<std::vector<double>> rows_of(const ScoreMatrix& s)
{
    std::vector<std::vector<double>> y;
    for (std::size_t i = 0; i < s.models(); ++i) {
        y.emplace_back(s.row(i).begin(), s.row(i).end());
    }
    return y;
}

} // namespace

TEST_CASE("block means are row averages")
{
    const ScoreMatrix c(fixtures::model_names(3), {"a", "b"}, BlockKind::splits, std::vector<double>(6, 4.25));
    for (double v : block_means(c)) {
        CHECK(v == 4.25);
    }
    std::mt19937_64 gen(1);
    const auto s = random_matrix(5, 7, gen);
    const auto means = block_means(s);
    for (std::size_t i = 0; i < 5; ++i) {
        double sum = 0;
        for (std::size_t j = 0; j < 7; ++j) {
            sum += s(i, j);
        }
        CHECK(means[i] == doctest::Approx(sum / 7).epsilon(1e-15));
    }
}

TEST_CASE("an additive matrix has no residual")
{
    std::vector<double> v;
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 5; ++j) {
            v.push_back(1.5 * i + 0.37 * j * j);
        }
    }
    const ScoreMatrix s(fixtures::model_names(4), {"1", "2", "3", "4", "5"}, BlockKind::splits, v);
    const auto a = block_anova_mse(s);
    CHECK(a.mse < 1e-28);
    CHECK(a.error_df == 12);
}

TEST_CASE("block mse matches the sum-of-squares decomposition")
{
    const ScoreMatrix hand(fixtures::model_names(3), {"1", "2", "3", "4"}, BlockKind::splits,
                           {3, 7, 1, 9, 4, 4, 6, 2, 8, 5, 5, 0});
    const auto a = block_anova_mse(hand);
    CHECK(a.error_df == 6);
    CHECK(a.mse == doctest::Approx(testing::long_form_block_mse(rows_of(hand))).epsilon(1e-13));
    std::mt19937_64 gen(5);
    for (int rep = 0; rep < 20; ++rep) {
        const auto s = random_matrix(2 + gen() % 8, 2 + gen() % 30, gen, 3.0);
        CHECK(block_anova_mse(s).mse == doctest::Approx(testing::long_form_block_mse(rows_of(s))).epsilon(1e-10));
    }
    CHECK_THROWS_AS((void)block_anova_mse(ScoreMatrix({"a"}, {"1", "2"}, BlockKind::splits, {1, 2})),
                    std::invalid_argument);
}

TEST_CASE("the nine-model two-split state yields mse 3.39, T 7.51 and drops models 1, 4 and 7")
{
    const auto s = fixtures::nine_model_two_split_matrix();
    const auto means = block_means(s);
    for (std::size_t i = 0; i < 9; ++i) {
        CHECK(means[i] == doctest::Approx(fixtures::nine_model_means[i]).epsilon(1e-14));
    }
    const auto a = block_anova_mse(s);
    CHECK(a.mse == doctest::Approx(3.39).epsilon(1e-12));
    CHECK(a.error_df == 8);
    CHECK(std::abs(tukey_value(0.05, 9, 2, 3.39) - 7.51) < 0.05);
    CHECK(std::abs(studentized_range_quantile(0.05, 9, 8) - 5.77) < 0.05);
    const auto out = tukey_eliminate(s, 0.05, Orientation::maximize);
    CHECK(out.eliminated == std::vector<std::size_t>{0, 3, 6});
    CHECK(out.eliminated_ids == std::vector<std::string>{"model1", "model4", "model7"});
    CHECK(out.best == 1);
    CHECK(out.tukey_T == doctest::Approx(out.q_value * std::sqrt(out.mse / 2)).epsilon(1e-15));
    CHECK(out.ci_half_width == out.tukey_T);
    for (const auto& ci : out.pairwise_intervals()) {
        CHECK(ci.upper - ci.difference == doctest::Approx(out.tukey_T));
        CHECK(ci.difference - ci.lower == doctest::Approx(out.tukey_T));
    }
}

TEST_CASE("studentized range quantiles grow with m and shrink with df")
{
    for (double alpha : {0.01, 0.05}) {
        double prev = 0;
        for (std::size_t m : {2u, 3u, 5u, 9u, 19u}) {
            const double q = studentized_range_quantile(alpha, m, 20);
            CHECK(q > prev);
            prev = q;
        }
        prev = 1e300;
        for (double df : {1.0, 2.0, 8.0, 59.0, 472.0, kInfiniteDf}) {
            const double q = studentized_range_quantile(alpha, 5, df);
            CHECK(q < prev);
            prev = q;
        }
    }
}

TEST_CASE("two-group quantile equals sqrt(2) times the t quantile")
{
    for (double alpha : {0.01, 0.05, 0.10}) {
        for (double df : {1.0, 3.0, 8.0, 59.0, 472.0, kInfiniteDf}) {
            CHECK(std::abs(studentized_range_quantile(alpha, 2, df) - sqrt2_t(alpha, df)) < 1e-3);
        }
    }
    CHECK(studentized_range_quantile(0.05, 2, 1e9) == doctest::Approx(2.7718).epsilon(1e-4));
}

TEST_CASE("quantile and cdf invert each other")
{
    for (std::size_t m : {3u, 9u}) {
        for (double df : {8.0, 472.0}) {
            const double q = studentized_range_quantile(0.05, m, df);
            CHECK(std::abs(studentized_range_cdf(q, m, df) - 0.95) < 1e-5);
        }
    }
    CHECK(studentized_range_cdf(0.0, 4, 10) == 0.0);
    CHECK(studentized_range_quantile(0.05, 5, 2e4) == doctest::Approx(studentized_range_quantile(0.05, 5, kInfiniteDf)).epsilon(1e-3));
    CHECK_THROWS_AS((void)studentized_range_quantile(1.5, 3, 10), std::invalid_argument);
    CHECK_THROWS_AS((void)studentized_range_quantile(0.05, 1, 10), std::invalid_argument);
}

TEST_CASE("Tukey value on an actives-blocked matrix matches a Monte Carlo quantile")
{
    std::mt19937_64 gen(60);
    std::bernoulli_distribution hit(0.6);
    std::vector<double> v(9 * 60);
    for (auto& x : v) {
        x = hit(gen) ? 1.0 : 0.0;
    }
    std::vector<std::string> blocks;
    for (int j = 0; j < 60; ++j) {
        blocks.push_back("a" + std::to_string(j));
    }
    const ScoreMatrix s(fixtures::model_names(9), blocks, BlockKind::actives, v);
    const auto a = block_anova_mse(s);
    REQUIRE(a.error_df == 472);

    std::mt19937_64 mc(472);
    std::normal_distribution<double> z;
    std::chi_squared_distribution<double> chi2(472);
    std::vector<double> ranges(400000);
    for (auto& r : ranges) {
        double lo = z(mc);
        double hi = lo;
        for (int i = 1; i < 9; ++i) {
            const double x = z(mc);
            lo = std::min(lo, x);
            hi = std::max(hi, x);
        }
        r = (hi - lo) / std::sqrt(chi2(mc) / 472);
    }
    const auto k = static_cast<std::size_t>(0.95 * ranges.size());
    std::nth_element(ranges.begin(), ranges.begin() + static_cast<std::ptrdiff_t>(k), ranges.end());
    const double q_mc = ranges[k];
    const double hand = q_mc * std::sqrt(a.mse / 60);
    CHECK(tukey_value(0.05, 9, 60, a.mse) == doctest::Approx(hand).epsilon(5e-3));
}

TEST_CASE("zero mse gives a zero Tukey value and strict elimination")
{
    CHECK(tukey_value(0.05, 4, 3, 0.0) == 0.0);
    const ScoreMatrix s({"a", "b", "c"}, {"1", "2"}, BlockKind::splits, {5, 6, 5, 6, 4, 5});
    const auto out = tukey_eliminate(s, 0.05, Orientation::maximize);
    CHECK(out.tukey_T == 0.0);
    CHECK(out.survivors == std::vector<std::size_t>{0, 1});
    CHECK(out.eliminated_ids == std::vector<std::string>{"c"});
}

TEST_CASE("equal means eliminate nothing and tied leaders survive")
{
    std::mt19937_64 gen(8);
    auto s = random_matrix(4, 6, gen);
    std::vector<double> v;
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 6; ++j) {
            v.push_back(s(0, j));
        }
    }
    const ScoreMatrix same(fixtures::model_names(4), s.block_ids(), BlockKind::splits, v);
    const auto out = tukey_eliminate(same, 0.05, Orientation::maximize);
    CHECK(out.eliminated.empty());
    CHECK(out.best == 0);
}

TEST_CASE("elimination happens exactly when the gap exceeds T")
{
    std::mt19937_64 gen(12);
    const auto base = random_matrix(2, 8, gen);
    std::vector<double> v(base.row(0).begin(), base.row(0).end());
    v.insert(v.end(), base.row(0).begin(), base.row(0).end());
    for (std::size_t j = 0; j < 8; ++j) {
        v[8 + j] += 0.3 * std::sin(static_cast<double>(j));
    }
    auto shifted = [&](double delta) {
        auto w = v;
        double mean_gap = 0;
        for (std::size_t j = 0; j < 8; ++j) {
            mean_gap += (w[8 + j] - w[j]) / 8;
        }
        for (std::size_t j = 0; j < 8; ++j) {
            w[8 + j] -= mean_gap + delta;
        }
        return ScoreMatrix({"a", "b"}, base.block_ids(), BlockKind::splits, w);
    };
    const auto ref = tukey_eliminate(shifted(0.0), 0.05, Orientation::maximize);
    const double t = ref.tukey_T;
    REQUIRE(t > 0);
    CHECK(tukey_eliminate(shifted(t * (1 + 1e-6)), 0.05, Orientation::maximize).eliminated_ids ==
          std::vector<std::string>{"b"});
    CHECK(tukey_eliminate(shifted(t * (1 - 1e-6)), 0.05, Orientation::maximize).eliminated.empty());
}

TEST_CASE("adding a constant to one block changes nothing")
{
    std::mt19937_64 gen(21);
    for (int rep = 0; rep < 20; ++rep) {
        const auto s = random_matrix(5, 6, gen);
        std::vector<double> v;
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 6; ++j) {
                v.push_back(s(i, j) + (j == 2 ? 17.0 : 0.0) + (i == 1 ? 0.6 : 0.0));
            }
        }
        const ScoreMatrix moved(s.model_ids(), s.block_ids(), BlockKind::splits, v);
        std::vector<double> base;
        for (std::size_t i = 0; i < 5; ++i) {
            for (std::size_t j = 0; j < 6; ++j) {
                base.push_back(s(i, j) + (i == 1 ? 0.6 : 0.0));
            }
        }
        const ScoreMatrix orig(s.model_ids(), s.block_ids(), BlockKind::splits, base);
        const auto a = tukey_eliminate(orig, 0.05, Orientation::maximize, std::ref(shared_quantiles));
        const auto b = tukey_eliminate(moved, 0.05, Orientation::maximize, std::ref(shared_quantiles));
        CHECK(a.eliminated == b.eliminated);
        CHECK(a.mse == doctest::Approx(b.mse).epsilon(1e-9));
    }
}

TEST_CASE("two-model elimination agrees with a paired t-test")
{
    std::mt19937_64 gen(100);
    int agree = 0;
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t b = 3 + gen() % 15;
        auto s = random_matrix(2, b, gen);
        std::vector<double> v(s.row(0).begin(), s.row(0).end());
        const double shift = std::uniform_real_distribution<double>(-1.5, 1.5)(gen);
        for (std::size_t j = 0; j < b; ++j) {
            v.push_back(s(1, j) + shift);
        }
        const ScoreMatrix m2({"a", "b"}, s.block_ids(), BlockKind::splits, v);
        double mean = 0;
        for (std::size_t j = 0; j < b; ++j) {
            mean += (v[j] - v[b + j]) / static_cast<double>(b);
        }
        double ss = 0;
        for (std::size_t j = 0; j < b; ++j) {
            const double e = v[j] - v[b + j] - mean;
            ss += e * e;
        }
        const double se = std::sqrt(ss / static_cast<double>(b - 1) / static_cast<double>(b));
        const double crit = boost::math::quantile(boost::math::students_t(static_cast<double>(b - 1)), 0.975);
        const bool t_rejects = std::abs(mean / se) > crit;
        const bool tukey_rejects = !tukey_eliminate(m2, 0.05, Orientation::maximize, std::ref(shared_quantiles)).eliminated.empty();
        agree += t_rejects == tukey_rejects;
    }
    CHECK(agree == 100);
}

TEST_CASE("minimized metrics eliminate the larger means")
{
    const ScoreMatrix s({"low", "high"}, {"1", "2", "3"}, BlockKind::splits, {1.0, 1.1, 0.9, 5.0, 5.2, 4.9});
    const auto out = tukey_eliminate(s, 0.05, Orientation::minimize);
    CHECK(out.eliminated_ids == std::vector<std::string>{"high"});
    CHECK(out.means[0] == doctest::Approx(1.0));
    CHECK(s.negated()(1, 1) == -5.2);
}

TEST_CASE("the quantile cache returns the solver's values")
{
    QuantileCache cache;
    const double a = cache(0.05, 4, 12);
    CHECK(a == studentized_range_quantile(0.05, 4, 12));
    CHECK(cache(0.05, 4, 12) == a);
    CHECK(tukey_value(0.05, 4, 5, 2.0, std::ref(cache)) == tukey_value(0.05, 4, 5, 2.0));
}

TEST_CASE("score matrices reject bad shapes and values")
{
    CHECK_THROWS_AS(ScoreMatrix({"a", "b"}, {"1"}, BlockKind::splits, {1.0}), std::invalid_argument);
    CHECK_THROWS_AS(ScoreMatrix({"a"}, {"1"}, BlockKind::splits, {std::nan("")}), std::invalid_argument);
    const ScoreMatrix s({"a", "b", "c"}, {"1", "2"}, BlockKind::splits, {1, 2, 3, 4, 5, 6});
    const std::vector<std::size_t> rows{2, 0};
    const auto t = s.select_models(rows);
    CHECK(t.model_ids() == std::vector<std::string>{"c", "a"});
    CHECK(t(0, 1) == 6);
}
