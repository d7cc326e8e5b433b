#include "ltf/market_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace ltf {

std::string_view to_string(FeedbackKind kind) {
    switch (kind) {
        case FeedbackKind::AssetPricing: return "asset-pricing";
        case FeedbackKind::LinearPositive: return "linear-positive";
        case FeedbackKind::LinearNegative: return "linear-negative";
    }
    return "?";
}

FeedbackKind parse_feedback_kind(std::string_view text) {
    for (auto k : {FeedbackKind::AssetPricing, FeedbackKind::LinearPositive, FeedbackKind::LinearNegative}) {
        if (text == to_string(k)) return k;
    }
    throw std::invalid_argument("unknown feedback kind '" + std::string(text) + "'");
}

FeedbackMap asset_pricing_map(double r, double d, double noise_sd) {
    FeedbackMap map;
    map.kind = FeedbackKind::AssetPricing;
    map.r = r;
    map.d = d;
    map.lambda = 1.0 / (1.0 + r);
    map.noise_sd = noise_sd;
    return map;
}

FeedbackMap linear_map(double lambda, double fundamental, int horizon, double noise_sd) {
    FeedbackMap map;
    map.kind = lambda > 0.0 ? FeedbackKind::LinearPositive : FeedbackKind::LinearNegative;
    map.lambda = lambda;
    map.schedule = {{1, horizon, fundamental}};
    map.noise_sd = noise_sd;
    return map;
}

std::vector<ScheduleSegment> three_phase_schedule() {
    return {{1, 20, 56.0}, {21, 43, 41.0}, {44, 65, 62.0}};
}

void validate(const FeedbackMap& map, int horizon) {
    if (!(map.noise_sd >= 0.0)) throw std::invalid_argument("price noise sd must be >= 0");
    switch (map.kind) {
        case FeedbackKind::AssetPricing:
            if (!(map.r > 0.0) || !(map.d > 0.0)) throw std::invalid_argument("asset map needs r > 0 and d > 0");
            if (!map.schedule.empty())
                throw std::invalid_argument("asset map derives its fundamental from d/r; drop the schedule");
            return;
        case FeedbackKind::LinearPositive:
            if (!(map.lambda > 0.0 && map.lambda < 1.0))
                throw std::invalid_argument("linear-positive map needs 0 < lambda < 1");
            break;
        case FeedbackKind::LinearNegative:
            if (!(map.lambda < 0.0 && map.lambda > -1.0))
                throw std::invalid_argument("linear-negative map needs -1 < lambda < 0");
            break;
    }
    if (map.schedule.empty()) throw std::invalid_argument("linear map needs a fundamental schedule");
    int expected = 1;
    for (const auto& seg : map.schedule) {
        if (seg.first != expected || seg.last < seg.first)
            throw std::invalid_argument("schedule segments must partition 1..T without gaps or overlaps");
        expected = seg.last + 1;
    }
    if (expected - 1 < horizon) throw std::invalid_argument("schedule ends before the horizon");
}

double fundamental_value(const FeedbackMap& map, int t) {
    if (t < 1) throw std::out_of_range("period must be >= 1");
    if (map.schedule.empty()) {
        if (map.kind == FeedbackKind::AssetPricing) return map.d / map.r;
        throw std::out_of_range("no fundamental schedule");
    }
    for (const auto& seg : map.schedule) {
        if (t >= seg.first && t <= seg.last) return seg.value;
    }
    throw std::out_of_range("period " + std::to_string(t) + " outside the fundamental schedule");
}

double realize_price(double mean_forecast, const FeedbackMap& map, int t, double noise) {
    if (map.kind == FeedbackKind::AssetPricing) {
        if (t < 1) throw std::out_of_range("period must be >= 1");
        return (mean_forecast + map.d) / (1.0 + map.r) + noise;
    }
    const double f = fundamental_value(map, t);
    return f + map.lambda * (mean_forecast - f) + noise;
}

double payoff(double forecast, double price) {
    const double err = price - forecast;
    return std::max(100.0 - (100.0 / 49.0) * err * err, 0.0);
}

void validate(const MarketConfig& config) {
    if (config.agents.size() < 2) throw std::invalid_argument("a market needs at least 2 agents");
    if (config.horizon < 2) throw std::invalid_argument("horizon must be >= 2");
    for (const auto& a : config.agents) validate(a);
    validate(config.map, config.horizon);
    for (const auto& b : {config.first_period_bounds, config.later_bounds}) {
        if (!(b.low <= b.high)) throw std::invalid_argument("forecast bounds must satisfy low <= high");
    }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

MarketRun run_market(const MarketConfig& config) {
    validate(config);
    const std::size_t n = config.agents.size();
    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> std_normal(0.0, 1.0);

    std::vector<Agent> agents;
    agents.reserve(n);
    for (const auto& spec : config.agents) agents.emplace_back(spec);

    MarketRun run;
    run.metadata.seed = config.seed;
    for (std::size_t i = 0; i < n; ++i) {
        run.metadata.subject_ids.push_back("s" + std::to_string(i + 1));
        run.metadata.rules.push_back(config.agents[i].rule);
        run.metadata.thresholds.push_back(config.agents[i].threshold);
        run.metadata.gain_inits.push_back(config.agents[i].gain_init);
    }
    run.panel.reserve(n * static_cast<std::size_t>(config.horizon));
    run.internal_gain.reserve(run.panel.capacity());

    auto clamp = [&](double f, const ForecastBounds& b) {
        const double c = std::clamp(f, b.low, b.high);
        if (c != f) ++run.metadata.clamped_forecasts;
        return c;
    };

    std::vector<double> forecasts(n);
    std::vector<double> gains(n, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t i = 0; i < n; ++i) {
        forecasts[i] = clamp(agents[i].first_forecast(), config.first_period_bounds);
        agents[i].set_submitted(forecasts[i]);
    }

    for (int t = 1; t <= config.horizon; ++t) {
        double mean = 0.0;
        for (double f : forecasts) mean += f;
        mean /= static_cast<double>(n);
        const double noise = config.map.noise_sd > 0.0 ? config.map.noise_sd * std_normal(rng) : 0.0;
        const double price = realize_price(mean, config.map, t, noise);

        for (std::size_t i = 0; i < n; ++i) {
            run.panel.push_back({config.experiment, config.treatment, config.market_id,
                                 run.metadata.subject_ids[i], t, forecasts[i], price});
            run.internal_gain.push_back(gains[i]);
        }
        if (t == config.horizon) break;

        const double next_fundamental = fundamental_value(config.map, t + 1);
        for (std::size_t i = 0; i < n; ++i) {
            const double sd = config.agents[i].forecast_noise_sd;
            const double eps = sd > 0.0 ? sd * std_normal(rng) : 0.0;
            const double raw = agents[i].observe(price, next_fundamental, eps);
            forecasts[i] = clamp(raw, config.later_bounds);
            agents[i].set_submitted(forecasts[i]);
            gains[i] = agents[i].gain_in_use();
        }
    }
    return run;
}

std::vector<AgentSpec> draw_agents(std::span<const PopulationSpec> populations, std::mt19937_64& rng,
                                   ForecastBounds first_period_bounds) {
    std::vector<AgentSpec> out;
    for (const auto& pop : populations) {
        if (pop.count < 0) throw std::invalid_argument("population count must be >= 0");
        std::uniform_real_distribution<double> initial(first_period_bounds.low, first_period_bounds.high);
        for (int k = 0; k < pop.count; ++k) {
            AgentSpec spec;
            spec.rule = pop.rule;
            spec.gain_init = pop.gain_init;
            spec.forecast_noise_sd = pop.forecast_noise_sd;
            spec.meta_rate = (pop.rule == Rule::RMBL || pop.rule == Rule::IDBD) ? pop.meta_rate : 0.0;
            if (pop.rule == Rule::RMBL) {
                if (!(pop.threshold_low > 0.0 && pop.threshold_low <= pop.threshold_high))
                    throw std::invalid_argument("RMBL threshold range must satisfy 0 < low <= high");
                spec.threshold = std::uniform_real_distribution<double>(pop.threshold_low, pop.threshold_high)(rng);
            }
            spec.initial_forecast = pop.initial_forecast ? *pop.initial_forecast : initial(rng);
            out.push_back(spec);
        }
    }
    return out;
}

}  // namespace ltf
