#include "ltf/gain_extraction.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace ltf {

std::optional<double> gain(double forecast_t, double forecast_tm1, double price_tm1) {
    const double den = price_tm1 - forecast_tm1;
    if (std::abs(den) < kGainDenominatorTolerance) return std::nullopt;
    return (forecast_t - forecast_tm1) / den;
}

std::optional<int> y_indicator(std::optional<double> delta_gain) {
    if (!delta_gain) return std::nullopt;
    if (*delta_gain > 0.0) return 1;
    if (*delta_gain < 0.0) return 0;
    return std::nullopt;
}

std::optional<int> r_indicator(double e_t, double e_tm1) {
    const double prod = e_t * e_tm1;
    if (prod > 0.0) return 1;
    if (prod < 0.0) return 0;
    return std::nullopt;
}

double median(std::vector<double> values) {
    if (values.empty()) throw std::invalid_argument("median of an empty series");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

std::vector<int> subject_median_split(std::span<const double> abs_errors) {
    const double m = median({abs_errors.begin(), abs_errors.end()});
    std::vector<int> flags;
    flags.reserve(abs_errors.size());
    for (double e : abs_errors) flags.push_back(e < m ? 1 : 0);
    return flags;
}

std::vector<DerivedRow> derive_panel(std::span<const PanelObservation> panel) {
    std::vector<DerivedRow> rows;
    rows.reserve(panel.size());
    for (const auto& obs : panel) rows.push_back({obs, {}, std::nullopt});

    std::sort(rows.begin(), rows.end(), [](const DerivedRow& a, const DerivedRow& b) {
        if (a.obs.subject_key() != b.obs.subject_key()) return a.obs.subject_key() < b.obs.subject_key();
        return a.obs.period < b.obs.period;
    });

    std::size_t begin = 0;
    while (begin < rows.size()) {
        std::size_t end = begin + 1;
        while (end < rows.size() && rows[end].obs.subject_key() == rows[begin].obs.subject_key()) ++end;

        auto observed = [&](std::size_t i) {
            return std::isfinite(rows[i].obs.forecast) && std::isfinite(rows[i].obs.price);
        };
        for (std::size_t i = begin; i < end; ++i) {
            auto& row = rows[i];
            if (i > begin && rows[i - 1].obs.period == row.obs.period) {
                throw std::invalid_argument("duplicate observation for subject '" + row.obs.subject_id +
                                            "' in market '" + row.obs.market_id + "' at period " +
                                            std::to_string(row.obs.period));
            }
            row.derived.e = row.obs.price - row.obs.forecast;
            row.derived.abs_e = std::abs(row.derived.e);
            if (i > begin && rows[i - 1].obs.period + 1 == row.obs.period && observed(i) && observed(i - 1)) {
                const auto& prev = rows[i - 1];
                row.previous = prev.obs;
                row.derived.gain = gain(row.obs.forecast, prev.obs.forecast, prev.obs.price);
                row.derived.r = r_indicator(row.derived.e, prev.obs.price - prev.obs.forecast);
            }
        }
        for (std::size_t i = begin; i + 1 < end; ++i) {
            auto& row = rows[i];
            const auto& next = rows[i + 1];
            if (next.obs.period == row.obs.period + 1 && row.derived.gain && next.derived.gain) {
                row.derived.delta_gain = *next.derived.gain - *row.derived.gain;
                row.derived.y = y_indicator(row.derived.delta_gain);
            }
        }

        // missing observations carry NaN errors and never count as small
        std::vector<double> abs_errors;
        for (std::size_t i = begin; i < end; ++i) {
            if (observed(i)) abs_errors.push_back(rows[i].derived.abs_e);
        }
        if (!abs_errors.empty()) {
            const auto flags = subject_median_split(abs_errors);
            std::size_t k = 0;
            for (std::size_t i = begin; i < end; ++i) rows[i].derived.se = observed(i) ? flags[k++] : 0;
        }

        begin = end;
    }
    return rows;
}

}  // namespace ltf
