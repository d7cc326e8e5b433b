// Forecasting rules for learning-to-forecast agents.
//
// Every rule maps the realized price history to a point forecast of the next
// price. The gain of the dynamic rules (RMBL, IDBD) lives in an unconstrained
// parameter beta and is read through the logistic function, so it always stays
// inside (0, 1).
#ifndef LTF_LEARNING_RULES_HPP
#define LTF_LEARNING_RULES_HPP

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ltf {

enum class Rule { ADA, RMBL, IDBD, SAC, LeastSquares, Fundamentalist };

std::string_view to_string(Rule rule);
Rule parse_rule(std::string_view text);

/// Bound on |beta|; sigmoid(30) is still strictly below 1 in double precision.
inline constexpr double kMaxGainParam = 30.0;

template <typename Scalar>
Scalar sigmoid(Scalar x) {
    using std::exp;
    if (x >= Scalar(0)) {
        const Scalar z = exp(-x);
        return Scalar(1) / (Scalar(1) + z);
    }
    const Scalar z = exp(x);
    return z / (Scalar(1) + z);
}

template <typename Scalar>
Scalar logit(Scalar p) {
    using std::log;
    return log(p / (Scalar(1) - p));
}

struct AgentSpec {
    Rule rule = Rule::ADA;
    double gain_init = 0.5;        // ADA: the constant gain. RMBL/IDBD: starting gain.
    double meta_rate = 0.0;        // step on the gain parameter
    double threshold = 0.0;        // Z, squared-error satisficing level
    double forecast_noise_sd = 0.0;
    double initial_forecast = 50.0;
};

/// Throws std::invalid_argument when the parameters break a rule invariant.
void validate(const AgentSpec& spec);

AgentSpec ada_spec(double gain, double initial_forecast, double noise_sd = 0.0);
AgentSpec rmbl_spec(double gain_init, double meta_rate, double threshold, double initial_forecast,
                    double noise_sd = 0.0);
/// The IDBD rule is the RMBL rule with the threshold removed.
AgentSpec idbd_spec(double gain_init, double meta_rate, double initial_forecast, double noise_sd = 0.0);

struct AgentState {
    double gain_param = 0.0;
    double last_forecast = 0.0;
    std::optional<double> last_error;
    std::optional<double> prev_error;
    std::vector<double> history;

    double gain() const { return sigmoid(gain_param); }
};

AgentState initial_state(const AgentSpec& spec);

/// Adaptive expectations: moves the previous forecast a constant fraction of
/// the way toward the last price. Updates the forecast memory of `state`.
double ada_forecast(AgentState& state, double last_price, double gain_const);

/// Squared error in excess of the satisficing threshold.
inline double omega(double error, double threshold) { return error * error - threshold; }

/// Direction and size of the gain change. Positive means raise the gain.
///
/// Equals 4 * omega * e_t * e_tm1, the descent direction of omega^2 with
/// respect to the gain when e_t = p_t - p*_{t-1} - G * e_tm1.
inline double gain_gradient(double omega_value, double e_t, double e_tm1) {
    return 4.0 * omega_value * e_t * e_tm1;
}

struct StepResult {
    double forecast;
    AgentState state;
};

/// One period of the reference-model rule (spec.rule must be RMBL or IDBD).
///
/// `forecast_noise` is added to the deterministic forecast; pass 0 for the
/// noiseless rule.
StepResult rmbl_step(const AgentState& state, double realized_price, const AgentSpec& spec,
                     double forecast_noise = 0.0);

/// Sample-autocorrelation learning: mean + rho_1 * (last - mean).
double sac_forecast(std::span<const double> price_history);

/// Least-squares learning: mean + slope * (last - mean), slope from
/// regressing p_i on p_{i-1} around the lag and lead means.
double least_squares_forecast(std::span<const double> price_history);

/// A forecasting agent with its rule and evolving state.
class Agent {
public:
    explicit Agent(AgentSpec spec);

    const AgentSpec& spec() const { return spec_; }
    const AgentState& state() const { return state_; }

    /// Gain that produced the most recent forecast. NaN before any update and
    /// for rules without a gain.
    double gain_in_use() const { return gain_in_use_; }

    /// Forecast for the first period (before any price is known).
    double first_forecast() const { return spec_.initial_forecast; }

    /// Feeds the realized price and returns the forecast for the next period.
    /// `next_fundamental` is used only by the fundamentalist rule.
    double observe(double realized_price, double next_fundamental, double noise);

    /// Overrides the remembered forecast, e.g. after the market clamps it.
    void set_submitted(double forecast) { state_.last_forecast = forecast; }

private:
    AgentSpec spec_;
    AgentState state_;
    double gain_in_use_;
};

}  // namespace ltf

#endif  // LTF_LEARNING_RULES_HPP
