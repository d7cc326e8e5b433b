#include "ltf/learning_rules.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace ltf {

std::string_view to_string(Rule rule) {
    switch (rule) {
        case Rule::ADA: return "ADA";
        case Rule::RMBL: return "RMBL";
        case Rule::IDBD: return "IDBD";
        case Rule::SAC: return "SAC";
        case Rule::LeastSquares: return "LeastSquares";
        case Rule::Fundamentalist: return "Fundamentalist";
    }
    return "?";
}

Rule parse_rule(std::string_view text) {
    for (Rule r : {Rule::ADA, Rule::RMBL, Rule::IDBD, Rule::SAC, Rule::LeastSquares, Rule::Fundamentalist}) {
        if (text == to_string(r)) return r;
    }
    throw std::invalid_argument("unknown rule '" + std::string(text) + "'");
}

void validate(const AgentSpec& spec) {
    const bool uses_gain = spec.rule == Rule::ADA || spec.rule == Rule::RMBL || spec.rule == Rule::IDBD;
    if (uses_gain && !(spec.gain_init > 0.0 && spec.gain_init < 1.0))
        throw std::invalid_argument("gain_init must lie in (0,1)");
    if (spec.meta_rate < 0.0) throw std::invalid_argument("meta_rate must be >= 0");
    if (spec.threshold < 0.0) throw std::invalid_argument("threshold must be >= 0");
    if (spec.forecast_noise_sd < 0.0) throw std::invalid_argument("forecast_noise_sd must be >= 0");
    if (spec.rule == Rule::ADA && spec.meta_rate != 0.0)
        throw std::invalid_argument("ADA agents have meta_rate 0");
    if (spec.rule == Rule::IDBD && spec.threshold != 0.0)
        throw std::invalid_argument("IDBD agents have threshold 0");
    if (!std::isfinite(spec.initial_forecast)) throw std::invalid_argument("initial_forecast must be finite");
}

AgentSpec ada_spec(double gain, double initial_forecast, double noise_sd) {
    return {Rule::ADA, gain, 0.0, 0.0, noise_sd, initial_forecast};
}

AgentSpec rmbl_spec(double gain_init, double meta_rate, double threshold, double initial_forecast,
                    double noise_sd) {
    return {Rule::RMBL, gain_init, meta_rate, threshold, noise_sd, initial_forecast};
}

AgentSpec idbd_spec(double gain_init, double meta_rate, double initial_forecast, double noise_sd) {
    return {Rule::IDBD, gain_init, meta_rate, 0.0, noise_sd, initial_forecast};
}

AgentState initial_state(const AgentSpec& spec) {
    AgentState s;
    const bool uses_gain = spec.rule == Rule::ADA || spec.rule == Rule::RMBL || spec.rule == Rule::IDBD;
    s.gain_param = uses_gain ? logit(spec.gain_init) : 0.0;
    s.last_forecast = spec.initial_forecast;
    return s;
}

double ada_forecast(AgentState& state, double last_price, double gain_const) {
    const double error = last_price - state.last_forecast;
    state.prev_error = state.last_error;
    state.last_error = error;
    state.history.push_back(last_price);
    state.last_forecast = state.last_forecast + gain_const * error;
    return state.last_forecast;
}

StepResult rmbl_step(const AgentState& state, double realized_price, const AgentSpec& spec,
                     double forecast_noise) {
    if (spec.rule != Rule::RMBL && spec.rule != Rule::IDBD)
        throw std::invalid_argument("rmbl_step requires an RMBL or IDBD agent");

    AgentState next = state;
    const double e_t = realized_price - state.last_forecast;
    const double om = omega(e_t, spec.threshold);

    if (om > 0.0 && state.last_error && *state.last_error != 0.0 && e_t != 0.0) {
        const double g = state.gain();
        // chain rule through the logistic link
        const double step = spec.meta_rate * gain_gradient(om, e_t, *state.last_error) * g * (1.0 - g);
        next.gain_param = std::clamp(state.gain_param + step, -kMaxGainParam, kMaxGainParam);
    }

    const double forecast = state.last_forecast + next.gain() * e_t + forecast_noise;
    next.last_forecast = forecast;
    next.prev_error = state.last_error;
    next.last_error = e_t;
    next.history.push_back(realized_price);
    return {forecast, std::move(next)};
}

namespace {

double mean(std::span<const double> xs) {
    return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

double sac_forecast(std::span<const double> price_history) {
    if (price_history.empty()) throw std::invalid_argument("sac_forecast needs at least one price");
    const double alpha = mean(price_history);
    const double last = price_history.back();
    if (price_history.size() < 3) return alpha;

    // c_j sums share the 1/(T+1) factor, which cancels in rho_1 = c_1 / c_0
    double c0 = 0.0;
    double c1 = 0.0;
    for (std::size_t t = 0; t < price_history.size(); ++t) {
        const double dev = price_history[t] - alpha;
        c0 += dev * dev;
        if (t + 1 < price_history.size()) c1 += dev * (price_history[t + 1] - alpha);
    }
    if (c0 == 0.0) return alpha;
    return alpha + (c1 / c0) * (last - alpha);
}

double least_squares_forecast(std::span<const double> price_history) {
    if (price_history.empty()) throw std::invalid_argument("least_squares_forecast needs at least one price");
    const double alpha = mean(price_history);
    const double last = price_history.back();
    const std::size_t n = price_history.size();
    if (n < 3) return alpha;

    const auto lags = price_history.first(n - 1);
    const auto leads = price_history.subspan(1);
    const double lag_mean = mean(lags);
    const double lead_mean = mean(leads);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        const double x = lags[i] - lag_mean;
        num += x * (leads[i] - lead_mean);
        den += x * x;
    }
    if (den == 0.0) return alpha;
    return alpha + (num / den) * (last - alpha);
}

Agent::Agent(AgentSpec spec)
    : spec_(spec), state_(initial_state(spec)), gain_in_use_(std::numeric_limits<double>::quiet_NaN()) {
    validate(spec_);
}

double Agent::observe(double realized_price, double next_fundamental, double noise) {
    switch (spec_.rule) {
        case Rule::ADA: {
            gain_in_use_ = spec_.gain_init;
            state_.last_forecast = ada_forecast(state_, realized_price, spec_.gain_init) + noise;
            return state_.last_forecast;
        }
        case Rule::RMBL:
        case Rule::IDBD: {
            auto [forecast, next] = rmbl_step(state_, realized_price, spec_, noise);
            state_ = std::move(next);
            gain_in_use_ = state_.gain();
            return forecast;
        }
        case Rule::SAC:
        case Rule::LeastSquares:
        case Rule::Fundamentalist: {
            const double error = realized_price - state_.last_forecast;
            state_.prev_error = state_.last_error;
            state_.last_error = error;
            state_.history.push_back(realized_price);
            double forecast = next_fundamental;
            if (spec_.rule == Rule::SAC) forecast = sac_forecast(state_.history);
            if (spec_.rule == Rule::LeastSquares) forecast = least_squares_forecast(state_.history);
            state_.last_forecast = forecast + noise;
            return state_.last_forecast;
        }
    }
    return realized_price;
}

}  // namespace ltf
