// Learning-to-forecast markets: the realized price is a function of the mean
// forecast of the population, and every agent sees the same price.
#ifndef LTF_MARKET_SIM_HPP
#define LTF_MARKET_SIM_HPP

#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ltf/learning_rules.hpp"
#include "ltf/panel.hpp"

namespace ltf {

enum class FeedbackKind { AssetPricing, LinearPositive, LinearNegative };

std::string_view to_string(FeedbackKind kind);
FeedbackKind parse_feedback_kind(std::string_view text);

/// Fundamental value over an inclusive range of periods.
struct ScheduleSegment {
    int first = 1;
    int last = 1;
    double value = 0.0;
};

struct FeedbackMap {
    FeedbackKind kind = FeedbackKind::AssetPricing;
    double r = 0.05;
    double d = 3.3;
    double lambda = 1.0 / 1.05;
    std::vector<ScheduleSegment> schedule;
    double noise_sd = 1.0;
};

FeedbackMap asset_pricing_map(double r = 0.05, double d = 3.3, double noise_sd = 1.0);
FeedbackMap linear_map(double lambda, double fundamental, int horizon, double noise_sd = 1.0);

/// Schedule of the three-phase asset experiments: 56 up to t=20, 41 up to t=43, 62 up to t=65.
std::vector<ScheduleSegment> three_phase_schedule();

/// Throws std::invalid_argument on a malformed map. A non-empty schedule must
/// cover 1..horizon exactly.
void validate(const FeedbackMap& map, int horizon);

/// Throws std::out_of_range when t is not covered by the schedule.
double fundamental_value(const FeedbackMap& map, int t);

double realize_price(double mean_forecast, const FeedbackMap& map, int t, double noise);

/// Per-period score from the experimental instructions; zero once |error| >= 7.
double payoff(double forecast, double price);

struct ForecastBounds {
    double low = 0.0;
    double high = 1000.0;
};

struct MarketConfig {
    std::string experiment = "exp";
    std::string treatment = "base";
    std::string market_id = "m1";
    int horizon = 50;
    std::vector<AgentSpec> agents;
    FeedbackMap map;
    std::uint64_t seed = 0;
    ForecastBounds first_period_bounds{0.0, 100.0};
    ForecastBounds later_bounds{0.0, 1000.0};
};

void validate(const MarketConfig& config);

struct RunMetadata {
    std::uint64_t seed = 0;
    std::vector<std::string> subject_ids;
    std::vector<Rule> rules;
    std::vector<double> thresholds;
    std::vector<double> gain_inits;
    int clamped_forecasts = 0;
};

struct MarketRun {
    std::vector<PanelObservation> panel;  // period-major, agents in config order
    /// Gain the agent used to form each panel forecast (NaN in period 1 and for gainless rules).
    std::vector<double> internal_gain;
    RunMetadata metadata;
};

/// Deterministic in (config, config.seed).
MarketRun run_market(const MarketConfig& config);

/// A homogeneous block of agents inside one market.
struct PopulationSpec {
    Rule rule = Rule::ADA;
    int count = 6;
    double gain_init = 0.5;
    double meta_rate = 0.1;
    double threshold_low = 0.25;
    double threshold_high = 4.0;
    double forecast_noise_sd = 0.25;
    std::optional<double> initial_forecast;  // default: uniform on the first-period bounds
};

/// Draws thresholds (RMBL only) and initial forecasts for each population.
std::vector<AgentSpec> draw_agents(std::span<const PopulationSpec> populations, std::mt19937_64& rng,
                                   ForecastBounds first_period_bounds = {0.0, 100.0});

/// splitmix64 mix of a base seed and a stream index.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream);

}  // namespace ltf

#endif  // LTF_MARKET_SIM_HPP
