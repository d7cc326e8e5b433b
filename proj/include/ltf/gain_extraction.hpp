// Derived regression variables from a raw forecast/price panel.
//
// Row t of a subject carries
//   e      = p_t - p*_t,           E = |e|
//   G      = (p*_t - p*_{t-1}) / (p_{t-1} - p*_{t-1})
//   dG     = G_{t+1} - G_t         (gain change that follows the period-t error)
//   Y      = 1[dG > 0], 0 for dG < 0
//   R      = 1[e_t * e_{t-1} > 0], 0 for < 0
//   SE     = 1[E_t < median of the subject's E]
// so every regression row pairs the period-t error with the response it triggered.
#ifndef LTF_GAIN_EXTRACTION_HPP
#define LTF_GAIN_EXTRACTION_HPP

#include <optional>
#include <span>
#include <vector>

#include "ltf/panel.hpp"

namespace ltf {

inline constexpr double kGainDenominatorTolerance = 1e-9;

struct DerivedObservation {
    double e = 0.0;
    double abs_e = 0.0;
    std::optional<double> gain;
    std::optional<double> delta_gain;
    std::optional<int> y;
    std::optional<int> r;
    int se = 0;
};

struct DerivedRow {
    PanelObservation obs;
    DerivedObservation derived;
    /// Previous period's row of the same subject, when it exists.
    std::optional<PanelObservation> previous;
};

std::optional<double> gain(double forecast_t, double forecast_tm1, double price_tm1);
std::optional<int> y_indicator(std::optional<double> delta_gain);
std::optional<int> r_indicator(double e_t, double e_tm1);

/// Strict below-median flags; the even-count median is the midpoint of the
/// two central order statistics.
std::vector<int> subject_median_split(std::span<const double> abs_errors);

double median(std::vector<double> values);

/// A row whose forecast or price is NaN (missing) gets NaN errors, no gain and
/// no R, and is left out of its subject's median.
/// Throws std::invalid_argument on a duplicate (subject, period). Output is
/// sorted by (experiment, treatment, market, subject, period).
std::vector<DerivedRow> derive_panel(std::span<const PanelObservation> panel);

}  // namespace ltf

#endif  // LTF_GAIN_EXTRACTION_HPP
