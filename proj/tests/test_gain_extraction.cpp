#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <limits>
#include <map>

#include "ltf/gain_extraction.hpp"
#include "ltf/market_sim.hpp"

using namespace ltf;

namespace {

std::vector<PanelObservation> one_subject(const std::vector<double>& forecasts, const std::vector<double>& prices) {
    std::vector<PanelObservation> p;
    for (std::size_t i = 0; i < forecasts.size(); ++i)
        p.push_back({"x", "t", "m", "s1", static_cast<int>(i + 1), forecasts[i], prices[i]});
    return p;
}

MarketRun noiseless_run(const AgentSpec& spec, std::uint64_t seed) {
    MarketConfig c;
    c.agents.assign(6, spec);
    for (std::size_t i = 0; i < c.agents.size(); ++i) c.agents[i].initial_forecast = 40.0 + 5.0 * double(i);
    c.map = linear_map(1.0 / 1.05, 66.0, 50, 1.0);
    c.seed = seed;
    return run_market(c);
}

/// Extracted G per (subject, period) lookup.
std::map<std::pair<std::string, int>, std::optional<double>> gains_by_key(const std::vector<DerivedRow>& rows) {
    std::map<std::pair<std::string, int>, std::optional<double>> out;
    for (const auto& r : rows) out[{r.obs.subject_id, r.obs.period}] = r.derived.gain;
    return out;
}

}  // namespace

TEST_CASE("gain examples") {
    CHECK(*gain(55, 50, 60) == 0.5);
    CHECK(*gain(45, 50, 60) == -0.5);
    CHECK_FALSE(gain(55, 50, 50).has_value());
    CHECK_FALSE(gain(55, 50, 50.0 + 1e-10).has_value());
}

TEST_CASE("indicator examples") {
    CHECK(*y_indicator(0.3) == 1);
    CHECK(*y_indicator(-0.3) == 0);
    CHECK_FALSE(y_indicator(0.0).has_value());
    CHECK_FALSE(y_indicator(std::nullopt).has_value());
    CHECK(*r_indicator(2, 3) == 1);
    CHECK(*r_indicator(2, -1) == 0);
    CHECK_FALSE(r_indicator(0, 3).has_value());
}

TEST_CASE("strict median split") {
    const std::vector<double> four{1, 2, 3, 4};
    CHECK(subject_median_split(four) == std::vector<int>{1, 1, 0, 0});
    const std::vector<double> equal{2, 2, 2};
    CHECK(subject_median_split(equal) == std::vector<int>{0, 0, 0});
    const std::vector<double> three{0.2, 5.0, 0.3};
    CHECK(subject_median_split(three) == std::vector<int>{1, 0, 0});
}

TEST_CASE("derive_panel aligns each error with the gain change it triggers") {
    // e = 10, 6, -4, 2
    const auto rows = derive_panel(one_subject({50, 55, 58, 56}, {60, 61, 54, 58}));
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].derived.e == 10.0);
    CHECK_FALSE(rows[0].derived.gain.has_value());
    CHECK_FALSE(rows[0].derived.r.has_value());
    CHECK(*rows[1].derived.gain == doctest::Approx(0.5));        // (55 - 50) / 10
    CHECK(*rows[2].derived.gain == doctest::Approx(0.5));        // (58 - 55) / 6
    CHECK(*rows[3].derived.gain == doctest::Approx(0.5));        // (56 - 58) / -4
    CHECK(*rows[1].derived.r == 1);
    CHECK(*rows[2].derived.r == 0);
    CHECK(*rows[3].derived.r == 0);
    CHECK(*rows[1].derived.delta_gain == doctest::Approx(0.0).epsilon(1e-12));
    CHECK_FALSE(rows[0].derived.delta_gain.has_value());
    CHECK_FALSE(rows[3].derived.delta_gain.has_value());
    CHECK(*rows[1].previous == rows[0].obs);
}

TEST_CASE("two-period subject has no gain change") {
    const auto rows = derive_panel(one_subject({50, 55}, {60, 61}));
    for (const auto& r : rows) CHECK_FALSE(r.derived.delta_gain.has_value());
}

TEST_CASE("duplicate observations are rejected") {
    auto panel = one_subject({50, 55, 58}, {60, 61, 54});
    panel.push_back(panel[1]);
    CHECK_THROWS_AS(derive_panel(panel), std::invalid_argument);
}

TEST_CASE("missing observations carry no derived values") {
    const double na = std::numeric_limits<double>::quiet_NaN();
    const auto rows = derive_panel(one_subject({50, na, 58, 56, 57}, {60, 61, 54, 58, 59}));
    CHECK(std::isnan(rows[1].derived.e));
    CHECK_FALSE(rows[1].derived.gain.has_value());
    CHECK_FALSE(rows[2].derived.gain.has_value());
    CHECK_FALSE(rows[2].derived.r.has_value());
    CHECK(rows[3].derived.gain.has_value());
    CHECK(rows[1].derived.se == 0);
}

TEST_CASE("extraction inverts noiseless ADA and RMBL agents") {
    for (const auto& spec : {ada_spec(0.5, 50.0), rmbl_spec(0.5, 0.1, 1.0, 50.0), idbd_spec(0.5, 0.1, 50.0)}) {
        const auto run = noiseless_run(spec, 17);
        const auto extracted = gains_by_key(derive_panel(run.panel));
        int defined = 0;
        for (std::size_t i = 0; i < run.panel.size(); ++i) {
            const auto& g = extracted.at({run.panel[i].subject_id, run.panel[i].period});
            if (!g) continue;
            ++defined;
            const double tol = spec.rule == Rule::ADA ? 1e-12 : 1e-9;
            CHECK(std::abs(*g - run.internal_gain[i]) < tol);
        }
        CHECK(defined > 250);
    }
}

TEST_CASE("missing R count equals the count of zero error products") {
    auto panel = one_subject({50, 60, 55, 55, 52}, {60, 60, 58, 55, 50});
    const auto rows = derive_panel(panel);
    int missing = 0;
    int zero_products = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        missing += !rows[i].derived.r.has_value();
        zero_products += rows[i].derived.e * rows[i - 1].derived.e == 0.0;
    }
    CHECK(missing == zero_products);
    CHECK(missing == 4);
}

TEST_CASE("every small-error row is strictly below its subject's median") {
    MarketConfig c;
    c.agents.assign(6, rmbl_spec(0.5, 0.1, 1.0, 50.0, 0.25));
    c.map = linear_map(-1.0 / 1.05, 66.0, 50, 1.0);
    c.seed = 8;
    const auto rows = derive_panel(run_market(c).panel);
    std::map<std::string, std::vector<double>> by_subject;
    for (const auto& r : rows) by_subject[r.obs.subject_id].push_back(r.derived.abs_e);
    for (const auto& r : rows) {
        const double m = median(by_subject[r.obs.subject_id]);
        CHECK((r.derived.se == 1) == (r.derived.abs_e < m));
    }
}
