#include <doctest.h>

#include <random>
#include <vector>

#include "ltf/learning_rules.hpp"
#include "oracles.hpp"

using namespace ltf;

namespace {

AgentState state_with(double last_forecast, std::optional<double> last_error, double gain = 0.5) {
    AgentState s;
    s.gain_param = logit(gain);
    s.last_forecast = last_forecast;
    s.last_error = last_error;
    return s;
}

}  // namespace

TEST_CASE("ada_forecast moves a constant fraction toward the last price") {
    AgentState s = state_with(50.0, std::nullopt);
    CHECK(ada_forecast(s, 60.0, 0.5) == 55.0);
    CHECK(s.last_forecast == 55.0);
    CHECK(*s.last_error == 10.0);

    AgentState fixed = state_with(50.0, std::nullopt);
    CHECK(ada_forecast(fixed, 50.0, 0.3) == 50.0);

    AgentState naive = state_with(50.0, std::nullopt);
    CHECK(ada_forecast(naive, 60.0, 1.0 - 1e-15) == doctest::Approx(60.0).epsilon(1e-12));
}

TEST_CASE("ada forecast lies between the previous forecast and the last price") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> p(0.0, 100.0);
    std::uniform_real_distribution<double> g(0.01, 0.99);
    for (int i = 0; i < 1000; ++i) {
        const double prev = p(rng);
        const double price = p(rng);
        AgentState s = state_with(prev, std::nullopt);
        const double f = ada_forecast(s, price, g(rng));
        CHECK(f >= std::min(prev, price));
        CHECK(f <= std::max(prev, price));
    }
}

TEST_CASE("omega and gain_gradient examples") {
    CHECK(omega(3.0, 5.0) == 4.0);
    CHECK(omega(3.0, 9.0) == 0.0);
    CHECK(omega(0.0, 0.0) == 0.0);
    CHECK(gain_gradient(4.0, 3.0, 2.0) == 96.0);
    CHECK(gain_gradient(4.0, 3.0, -2.0) == -96.0);
    CHECK(gain_gradient(0.0, 3.0, 2.0) == 0.0);
}

TEST_CASE("gain_gradient is the descent direction of squared excess error") {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 100; ++i) {
        const auto s = oracle::random_gradient_state(rng);
        CHECK(oracle::gradient_relative_error(s) < 1e-6);
    }
}

TEST_CASE("rmbl_step keeps the gain bit-identical inside the satisficing region") {
    const auto spec = rmbl_spec(0.5, 0.1, 9.0, 50.0);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> err(-3.0, 3.0);
    for (int i = 0; i < 500; ++i) {
        AgentState s = state_with(50.0, err(rng), 0.3 + 0.4 * (i % 2));
        const double before = s.gain_param;
        const auto out = rmbl_step(s, 50.0 + err(rng), spec);
        CHECK(out.state.gain_param == before);
    }
}

TEST_CASE("rmbl_step raises the gain after same-sign errors and lowers it after sign flips") {
    const auto spec = rmbl_spec(0.5, 0.1, 1.0, 50.0);
    const AgentState s = state_with(50.0, 2.0);
    const auto up = rmbl_step(s, 53.0, spec);  // e_t = 3, e_tm1 = 2
    CHECK(up.state.gain() > s.gain());
    const auto down = rmbl_step(s, 47.0, spec);  // e_t = -3
    CHECK(down.state.gain() < s.gain());
    CHECK(up.forecast == doctest::Approx(50.0 + up.state.gain() * 3.0));
    CHECK(*up.state.last_error == 3.0);
    CHECK(*up.state.prev_error == 2.0);
}

TEST_CASE("rmbl_step leaves the gain unchanged without a previous error or with a zero error") {
    const auto spec = idbd_spec(0.5, 0.1, 50.0);
    const AgentState fresh = state_with(50.0, std::nullopt);
    CHECK(rmbl_step(fresh, 60.0, spec).state.gain_param == fresh.gain_param);
    const AgentState zero_prev = state_with(50.0, 0.0);
    CHECK(rmbl_step(zero_prev, 60.0, spec).state.gain_param == zero_prev.gain_param);
    const AgentState any = state_with(50.0, 4.0);
    CHECK(rmbl_step(any, 50.0, spec).state.gain_param == any.gain_param);
}

TEST_CASE("IDBD equals RMBL with a zero threshold") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> price(60.0, 5.0);
    for (int run = 0; run < 20; ++run) {
        auto rmbl = rmbl_spec(0.4, 0.05, 0.0, 50.0);
        auto idbd = idbd_spec(0.4, 0.05, 50.0);
        Agent a(rmbl);
        Agent b(idbd);
        for (int t = 0; t < 60; ++t) {
            const double p = price(rng);
            CHECK(a.observe(p, 0.0, 0.0) == b.observe(p, 0.0, 0.0));
            CHECK(a.state().gain_param == b.state().gain_param);
        }
    }
}

TEST_CASE("sigmoid gain stays strictly inside (0, 1)") {
    auto spec = idbd_spec(0.5, 50.0, 50.0);
    Agent a(spec);
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> p(0.0, 1000.0);
    for (int t = 0; t < 500; ++t) {
        a.observe(p(rng), 0.0, 0.0);
        CHECK(a.state().gain() > 0.0);
        CHECK(a.state().gain() < 1.0);
    }
}

TEST_CASE("sac_forecast") {
    const std::vector<double> constant{60, 60, 60};
    CHECK(sac_forecast(constant) == 60.0);
    const std::vector<double> single{60};
    CHECK(sac_forecast(single) == 60.0);

    // mean 55, c_0 = 20 * 25 / 21, c_1 = -19 * 25 / 21, rho_1 = -0.95
    std::vector<double> alternating;
    for (int i = 0; i < 10; ++i) {
        alternating.push_back(50);
        alternating.push_back(60);
    }
    CHECK(sac_forecast(alternating) == doctest::Approx(50.25).epsilon(1e-12));
}

TEST_CASE("least_squares_forecast") {
    const std::vector<double> constant{42, 42, 42, 42};
    CHECK(least_squares_forecast(constant) == 42.0);

    std::vector<double> ar{10.0};
    for (int i = 0; i < 30; ++i) ar.push_back(0.5 * ar.back() + 20.0);
    double mean = 0.0;
    for (double v : ar) mean += v;
    mean /= static_cast<double>(ar.size());
    const double slope = (least_squares_forecast(ar) - mean) / (ar.back() - mean);
    CHECK(std::abs(slope - 0.5) < 1e-9);

    // two observations: the slope sum is degenerate, so the forecast is the mean
    const std::vector<double> two{50, 60};
    CHECK(least_squares_forecast(two) == 55.0);
}

TEST_CASE("agent parameter validation") {
    CHECK_THROWS_AS(validate(ada_spec(1.5, 50.0)), std::invalid_argument);
    CHECK_THROWS_AS(validate(rmbl_spec(0.5, -0.1, 1.0, 50.0)), std::invalid_argument);
    auto idbd = idbd_spec(0.5, 0.1, 50.0);
    idbd.threshold = 1.0;
    CHECK_THROWS_AS(validate(idbd), std::invalid_argument);
    CHECK(parse_rule("LeastSquares") == Rule::LeastSquares);
    CHECK_THROWS_AS(parse_rule("nope"), std::invalid_argument);
}
