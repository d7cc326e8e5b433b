// Independent reference computations used by the unit and acceptance tests.
#ifndef LTF_TESTS_ORACLES_HPP
#define LTF_TESTS_ORACLES_HPP

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "ltf/config.hpp"
#include "ltf/learning_rules.hpp"
#include "ltf/market_sim.hpp"

namespace oracle {

/// Conditional log-likelihood of one group by explicit enumeration of all
/// outcome vectors with the observed total, plus its gradient and Hessian.
struct Conditional {
    double ll = 0.0;
    Eigen::VectorXd score;
    Eigen::MatrixXd hessian;
};

inline Conditional enumerate_conditional(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                         const Eigen::VectorXd& theta) {
    const int n = static_cast<int>(x.rows());
    const int k = static_cast<int>(x.cols());
    const int total = static_cast<int>(std::lround(y.sum()));
    double denom = 0.0;
    Eigen::VectorXd first = Eigen::VectorXd::Zero(k);
    Eigen::MatrixXd second = Eigen::MatrixXd::Zero(k, k);
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        if (__builtin_popcount(mask) != total) continue;
        Eigen::VectorXd sx = Eigen::VectorXd::Zero(k);
        for (int i = 0; i < n; ++i) {
            if (mask & (1u << i)) sx += x.row(i).transpose();
        }
        const double w = std::exp(sx.dot(theta));
        denom += w;
        first += w * sx;
        second += w * sx * sx.transpose();
    }
    const Eigen::VectorXd observed = x.transpose() * y;
    const Eigen::VectorXd mean = first / denom;
    Conditional c;
    c.ll = observed.dot(theta) - std::log(denom);
    c.score = observed - mean;
    c.hessian = -(second / denom - mean * mean.transpose());
    return c;
}

/// e_t as a function of the gain that produced p*_{t-1} = p*_{t-2} + G e_{t-1}.
struct GradientState {
    double price = 0.0;          // p_t
    double base_forecast = 0.0;  // p*_{t-2}
    double e_prev = 0.0;         // e_{t-1}
    double gain = 0.5;           // G
    double threshold = 0.0;      // Z
};

inline GradientState random_gradient_state(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> price(40.0, 80.0);
    std::uniform_real_distribution<double> err(-6.0, 6.0);
    std::uniform_real_distribution<double> gain(0.05, 0.95);
    std::uniform_real_distribution<double> z(0.0, 4.0);
    return {price(rng), price(rng), err(rng), gain(rng), z(rng)};
}

/// Relative gap between gain_gradient and -d(Omega^2)/dG by central differences
/// in extended precision.
inline double gradient_relative_error(const GradientState& s) {
    using LD = long double;
    auto omega_sq = [&](LD g) {
        const LD e_t = LD(s.price) - (LD(s.base_forecast) + g * LD(s.e_prev));
        const LD om = e_t * e_t - LD(s.threshold);
        return om * om;
    };
    const LD h = 1e-6L;
    const LD fd = (omega_sq(LD(s.gain) + h) - omega_sq(LD(s.gain) - h)) / (2 * h);
    const double e_t = s.price - (s.base_forecast + s.gain * s.e_prev);
    const double analytic = ltf::gain_gradient(ltf::omega(e_t, s.threshold), e_t, s.e_prev);
    const double descent = static_cast<double>(-fd);
    const double scale = std::max({std::abs(analytic), std::abs(descent), 1e-300});
    return std::abs(analytic - descent) / scale;
}

/// One simulated block per call for the closed-loop recovery runs.
inline ltf::RunConfig closed_loop_config(ltf::Rule rule, bool positive_feedback, std::uint64_t seed,
                                         int markets = 20, double forecast_noise_sd = 0.25) {
    ltf::RunConfig config;
    config.seed = seed;
    config.variants = {ltf::Variant::BinaryContinuous};
    ltf::MarketBlock block;
    block.name = std::string(ltf::to_string(rule)) + (positive_feedback ? "_pos" : "_neg");
    block.experiment = block.name;
    block.treatment = positive_feedback ? "positive" : "negative";
    block.replications = markets;
    block.horizon = 50;
    block.map = ltf::linear_map(positive_feedback ? 1.0 / 1.05 : -1.0 / 1.05, 66.0, 50, 1.0);
    block.population.rule = rule;
    block.population.count = 6;
    block.population.gain_init = 0.5;
    block.population.meta_rate = rule == ltf::Rule::ADA ? 0.0 : 0.1;
    block.population.threshold_low = 0.25;
    block.population.threshold_high = 4.0;
    block.population.forecast_noise_sd = forecast_noise_sd;
    config.markets.push_back(block);
    return config;
}

}  // namespace oracle

#endif  // LTF_TESTS_ORACLES_HPP
