#include "cvrace/error.hpp"
#include "cvrace/metrics.hpp"
#include "support.hpp"

#include <doctest.h>

#include <numeric>

using namespace cvrace;

namespace {

PredictionVector pv(std::vector<double> s) { return {std::move(s), "m", 0}; }

// 25 actives above the tie group, 272 inactives above it, then eight scores
// tied across ranks 298-305 of which two are active, then the rest.
struct WorkedExample {
    std::vector<double> scores;
    std::vector<double> responses;
};

WorkedExample worked_example()
{
    WorkedExample w;
    double s = 1000;
    for (int i = 0; i < 25; ++i) {
        w.scores.push_back(s--);
        w.responses.push_back(1);
    }
    for (int i = 0; i < 272; ++i) {
        w.scores.push_back(s--);
        w.responses.push_back(0);
    }
    for (int i = 0; i < 8; ++i) {
        w.scores.push_back(0.5);
        w.responses.push_back(i == 2 || i == 6 ? 1 : 0);
    }
    for (int i = 0; i < 100; ++i) {
        w.scores.push_back(0.25 - i * 1e-3);
        w.responses.push_back(i < 33 ? 1 : 0);
    }
    return w;
}

} // namespace

TEST_CASE("the cutoff tie group earns a/(a+b) credit per active")
{
    const auto w = worked_example();
    const auto d = testing::response_only(w.responses);
    CHECK(hits_at_T(pv(w.scores), d, 300) == 25.75);
    const auto c = hit_contributions(pv(w.scores), d, 300);
    CHECK(c.contributions.size() == d.active_count());
    CHECK(std::count(c.contributions.begin(), c.contributions.end(), 1.0) == 25);
    CHECK(std::count(c.contributions.begin(), c.contributions.end(), 3.0 / 8.0) == 2);
    CHECK(std::count(c.contributions.begin(), c.contributions.end(), 0.0) == 33);
    CHECK(c.total() == 25.75);
    CHECK(c.block_ids == d.actives());
}

TEST_CASE("distinct scores count the actives in the selection")
{
    const std::vector<double> r{1, 0, 1, 0, 1, 0, 0, 1};
    const std::vector<double> s{0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2};
    const auto d = testing::response_only(r);
    CHECK(hits_at_T(pv(s), d, 3) == 2.0);
    CHECK(hits_at_T(pv(s), d, 8) == 4.0);
    const std::vector<double> low{0.1, 0.2, 0.1, 0.9, 0.1, 0.8, 0.7, 0.1};
    const auto c = hit_contributions(pv(low), d, 3);
    CHECK(c.total() == 0.0);
    for (double v : c.contributions) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("tie-adjusted hits equal the enumeration over tie resolutions")
{
    std::mt19937_64 gen(2024);
    for (int rep = 0; rep < 300; ++rep) {
        const std::size_t n = 6 + gen() % 20;
        const int levels = 2 + static_cast<int>(gen() % 5);
        auto scores = testing::quantized_scores(n, levels, gen);
        std::vector<double> r(n, 0.0);
        r[0] = 1;
        for (std::size_t i = 1; i < n; ++i) {
            r[i] = (gen() % 3 == 0) ? 1.0 : 0.0;
        }
        const auto d = testing::response_only(r);
        const std::size_t t = 1 + gen() % std::min<std::size_t>(10, n);
        const double h = hits_at_T(pv(scores), d, t);
        REQUIRE(h == doctest::Approx(testing::enumerated_hits(scores, r, t)).epsilon(1e-12));
        const auto c = hit_contributions(pv(scores), d, t);
        CHECK(std::abs(c.total() - h) < 1e-12);
        CHECK(h >= 0.0);
        CHECK(h <= std::min<double>(t, d.active_count()) + 1e-12);
        for (double v : c.contributions) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("hits are unchanged by a strictly increasing transform of the scores")
{
    std::mt19937_64 gen(7);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 25;
        auto s = testing::quantized_scores(n, 4, gen);
        std::vector<double> r(n);
        for (auto& v : r) {
            v = gen() % 4 == 0 ? 1.0 : 0.0;
        }
        r[3] = 1;
        const auto d = testing::response_only(r);
        std::vector<double> t(n);
        std::transform(s.begin(), s.end(), t.begin(), [](double x) { return 3.0 * x * x * x + 2.0; });
        for (std::size_t sel : {1u, 5u, 10u}) {
            CHECK(hits_at_T(pv(s), d, sel) == hits_at_T(pv(t), d, sel));
        }
    }
}

TEST_CASE("float noise below twelve significant digits does not split a tie")
{
    const std::vector<double> r{1, 0, 0, 1};
    const auto d = testing::response_only(r);
    const std::vector<double> s{0.1 + 0.2, 0.3, 0.3, 0.0};
    CHECK(hits_at_T(pv(s), d, 1) == doctest::Approx(1.0 / 3.0));
    TieOptions raw;
    raw.significant_digits = 0;
    CHECK(hits_at_T(pv(s), d, 1, raw) == 1.0);
}

TEST_CASE("initial enhancement is the hit rate over the base rate")
{
    SyntheticSpec spec;
    spec.n = 4275;
    spec.d = 1;
    spec.active_rate = 60.0 / 4275.0;
    const auto d = generate_synthetic(spec);
    REQUIRE(d.active_count() == 60);
    CHECK(initial_enhancement(31.4, 300, d) == doctest::Approx(31.4 / 300.0 / (60.0 / 4275.0)).epsilon(1e-14));
    CHECK(initial_enhancement(31.4, 300, d) == doctest::Approx(7.4575).epsilon(1e-6));
    CHECK(initial_enhancement(300.0 * 60.0 / 4275.0, 300, d) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(initial_enhancement(0.0, 300, d) == 0.0);
    const auto ie = MetricSpec::initial_enhancement(300);
    std::vector<double> s(d.size());
    std::iota(s.begin(), s.end(), 0.0);
    const auto p = pv(s);
    CHECK(contributions(ie, p, d).total() == doctest::Approx(evaluate(ie, p, d)).epsilon(1e-12));
}

TEST_CASE("mse and misclassification match direct computation")
{
    const std::vector<double> r{1, 0, 1, 0};
    const auto d = testing::response_only(r);
    CHECK(evaluate(MetricSpec::mse(), pv(r), d) == 0.0);
    CHECK(evaluate(MetricSpec::misclassification(), pv(r), d) == 0.0);
    CHECK(evaluate(MetricSpec::mse(), pv({0.5, 0.5, 0.5, 0.5}), d) == 0.25);

    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> y(40);
    std::vector<double> s(40);
    for (std::size_t i = 0; i < y.size(); ++i) {
        y[i] = u(gen);
        s[i] = u(gen);
    }
    const auto c = testing::response_only(y);
    double direct = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        direct += (s[i] - y[i]) * (s[i] - y[i]);
    }
    direct /= static_cast<double>(y.size());
    CHECK(evaluate(MetricSpec::mse(), pv(s), c) == doctest::Approx(direct).epsilon(1e-14));
    CHECK(contributions(MetricSpec::mse(), pv(s), c).total() == doctest::Approx(direct).epsilon(1e-12));

    const std::vector<double> pred{0.9, 0.6, 0.4, 0.5};
    CHECK(evaluate(MetricSpec::misclassification(), pv(pred), d) == 0.5);
    CHECK(contributions(MetricSpec::misclassification(), pv(pred), d).total() == 0.5);
}

TEST_CASE("metric specs parse, orient and validate")
{
    const auto h = MetricSpec::parse("hits@300");
    CHECK(h.kind() == MetricKind::hits);
    CHECK(h.selection_size() == 300);
    CHECK(h.orientation() == Orientation::maximize);
    CHECK(h.block_scheme() == BlockScheme::actives);
    CHECK(h.name() == "hits@300");
    CHECK(MetricSpec::parse("ie@50").kind() == MetricKind::initial_enhancement);
    CHECK(MetricSpec::parse("mse").orientation() == Orientation::minimize);
    CHECK(MetricSpec::parse("misclass").block_scheme() == BlockScheme::all_observations);
    for (const char* bad : {"hits", "hits@", "hits@x", "hits@0", "auc", "ie@-3"}) {
        CHECK_THROWS_AS((void)MetricSpec::parse(bad), ConfigError);
    }
    const auto cont = testing::response_only({0.1, 0.7, 0.3});
    CHECK_THROWS_AS(MetricSpec::hits(2).check_compatible(cont), DataError);
    CHECK_NOTHROW(MetricSpec::mse().check_compatible(cont));
    const auto bin = testing::response_only({0, 1, 0});
    CHECK_THROWS_AS(MetricSpec::hits(5).check_compatible(bin), DataError);
    CHECK_THROWS_AS((void)hits_at_T(pv({0.1, 0.2, 0.3}), cont, 1), DataError);
    CHECK_THROWS_AS((void)evaluate(MetricSpec::mse(), pv({0.1, 0.2}), bin), std::invalid_argument);
}

TEST_CASE("custom metrics plug into evaluate and contributions")
{
    auto cm = std::make_shared<CustomMetric>();
    cm->name = "sum";
    cm->blocks = BlockScheme::all_observations;
    cm->value = [](const PredictionVector& p, const Dataset&) {
        return std::accumulate(p.scores.begin(), p.scores.end(), 0.0);
    };
    cm->contributions = [](const PredictionVector& p, const Dataset& d) {
        ContributionVector c;
        c.contributions = p.scores;
        c.block_ids.resize(d.size());
        std::iota(c.block_ids.begin(), c.block_ids.end(), 0u);
        return c;
    };
    const auto m = MetricSpec::custom(cm);
    const auto d = testing::response_only({0, 1, 0});
    CHECK(m.decomposable());
    CHECK(m.name() == "sum");
    CHECK(evaluate(m, pv({1, 2, 3}), d) == 6.0);
    CHECK(contributions(m, pv({1, 2, 3}), d).total() == 6.0);
}
