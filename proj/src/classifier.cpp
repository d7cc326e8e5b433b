#include "ltf/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

#include "ltf/linalg.hpp"

namespace ltf {

namespace {

template <typename Enum, std::size_t N>
Enum parse_enum(std::string_view text, const Enum (&values)[N], std::string_view what) {
    for (Enum v : values) {
        if (to_string(v) == text) return v;
    }
    throw std::invalid_argument("unknown " + std::string(what) + " '" + std::string(text) + "'");
}

constexpr Verdict kAllVerdicts[] = {Verdict::RMBL, Verdict::IDBD, Verdict::ADA, Verdict::Unclassified};
constexpr ZLocation kAllZ[] = {ZLocation::AtMedian, ZLocation::BelowMedian, ZLocation::NotApplicable};

bool significant(const CoefficientEvidence& c, double alpha) { return c.p < alpha; }
bool sig_positive(const CoefficientEvidence& c, double alpha) { return significant(c, alpha) && c.value > 0.0; }
bool sig_negative(const CoefficientEvidence& c, double alpha) { return significant(c, alpha) && c.value < 0.0; }

CoefficientEvidence coefficient(const FitResult& fit, Eigen::Index j) {
    return {fit.coefficients(j), fit.standard_errors(j), fit.p_values(j)};
}

Classification begin(const Evidence& evidence, bool ada_slope_flag, double alpha) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    Classification c;
    c.alpha = alpha;
    c.ada_slope_flag = ada_slope_flag;
    c.evidence = evidence;
    if (!evidence.unusable_reason.empty()) c.reason = evidence.unusable_reason;
    return c;
}

/// Shared tail of both systems; returns true when a verdict was set.
bool idbd_or_ada(Classification& c, const Evidence& e) {
    const double a = c.alpha;
    if (!significant(e.delta, a) && sig_positive(e.gamma, a)) {
        c.verdict = Verdict::IDBD;
        return true;
    }
    if (!significant(e.delta, a) && !significant(e.gamma, a)) {
        if (c.ada_slope_flag) {
            c.verdict = Verdict::ADA;
            return true;
        }
        c.reason = "delta and gamma insignificant but the revision slope is not inside (0, 1)";
        return false;
    }
    return false;
}

}  // namespace

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::BinaryContinuous: return "BinaryContinuous";
        case Variant::BinaryDiscrete: return "BinaryDiscrete";
        case Variant::OlsContinuous: return "ContinuousOLS-Continuous";
        case Variant::OlsDiscrete: return "ContinuousOLS-Discrete";
        case Variant::HuberContinuous: return "HuberM-Continuous";
        case Variant::HuberDiscrete: return "HuberM-Discrete";
    }
    return "?";
}

std::string_view to_string(Verdict v) {
    switch (v) {
        case Verdict::RMBL: return "RMBL";
        case Verdict::IDBD: return "IDBD";
        case Verdict::ADA: return "ADA";
        case Verdict::Unclassified: return "Unclassified";
    }
    return "?";
}

std::string_view to_string(ZLocation z) {
    switch (z) {
        case ZLocation::AtMedian: return "AtMedian";
        case ZLocation::BelowMedian: return "BelowMedian";
        case ZLocation::NotApplicable: return "NotApplicable";
    }
    return "?";
}

std::string_view to_string(Split s) { return s == Split::Below ? "below" : "at-or-above"; }

Variant parse_variant(std::string_view text) { return parse_enum(text, kAllVariants, "variant"); }
Verdict parse_verdict(std::string_view text) { return parse_enum(text, kAllVerdicts, "verdict"); }
ZLocation parse_z_location(std::string_view text) { return parse_enum(text, kAllZ, "z location"); }

DesignSpec design_of(Variant v) {
    switch (v) {
        case Variant::BinaryContinuous: return {Outcome::BinaryY, ErrorForm::Continuous};
        case Variant::BinaryDiscrete: return {Outcome::BinaryY, ErrorForm::Discrete};
        case Variant::OlsContinuous:
        case Variant::HuberContinuous: return {Outcome::ContinuousDeltaG, ErrorForm::Continuous};
        case Variant::OlsDiscrete:
        case Variant::HuberDiscrete: return {Outcome::ContinuousDeltaG, ErrorForm::Discrete};
    }
    return {};
}

Evidence evidence_from_fit(const FitResult& fit) {
    Evidence e;
    e.n_obs = fit.n_obs;
    if (fit.coefficients.size() != 3) throw std::invalid_argument("classification needs a three-term fit");
    e.beta = coefficient(fit, 0);
    e.gamma = coefficient(fit, 1);
    e.delta = coefficient(fit, 2);
    if (!fit.converged) {
        e.unusable_reason = "fit did not converge" + (fit.message.empty() ? std::string() : ": " + fit.message);
        return e;
    }
    if (!fit.estimable[1] || !fit.estimable[2]) {
        e.unusable_reason = "gamma or delta not estimable";
        return e;
    }
    try {
        const auto combo = wald_linear_combo(fit, Eigen::Vector3d(0.0, 1.0, 1.0));
        e.combo = CoefficientEvidence{combo.estimate, combo.se, combo.p_value};
    } catch (const std::invalid_argument& err) {
        e.unusable_reason = err.what();
    }
    return e;
}

double p_from_printed(double value, double se, int stars) {
    if (stars < 0 || stars > 3) throw std::invalid_argument("stars must be between 0 and 3");
    double p;
    if (se > 0.0) {
        p = linalg::normal_two_sided_p(value / se);
    } else {
        p = value == 0.0 ? 1.0 : 0.0;
    }
    static constexpr double kLow[] = {0.1, 0.05, 0.01, 0.0};
    static constexpr double kHigh[] = {1.0, 0.1, 0.05, 0.01};
    const double lo = kLow[stars];
    const double hi = stars == 0 ? 1.0 : std::nextafter(kHigh[stars], 0.0);
    return std::clamp(p, lo, hi);
}

CoefficientEvidence printed_coefficient(double value, double se, int stars) {
    return {value, se, p_from_printed(value, se, stars)};
}

Classification classify_continuous(const Evidence& e, bool ada_slope_flag, double alpha) {
    Classification c = begin(e, ada_slope_flag, alpha);
    c.variant = Variant::BinaryContinuous;
    if (!e.unusable_reason.empty()) return c;
    if (sig_positive(e.delta, alpha) && !sig_negative(e.gamma, alpha)) {
        c.verdict = Verdict::RMBL;
        return c;
    }
    if (!idbd_or_ada(c, e) && c.reason.empty()) c.reason = "pattern matches no hypothesis";
    return c;
}

Classification classify_discrete(const Evidence& e, bool ada_slope_flag, double alpha) {
    Classification c = begin(e, ada_slope_flag, alpha);
    c.variant = Variant::BinaryDiscrete;
    if (!e.unusable_reason.empty()) return c;
    if (sig_negative(e.delta, alpha) && sig_positive(e.gamma, alpha)) {
        c.verdict = Verdict::RMBL;
        if (e.combo) {
            if (!significant(*e.combo, alpha)) {
                c.z_location = ZLocation::AtMedian;
            } else if (e.combo->value > 0.0) {
                c.z_location = ZLocation::BelowMedian;
            }
        }
        return c;
    }
    if (!idbd_or_ada(c, e) && c.reason.empty()) c.reason = "pattern matches no hypothesis";
    return c;
}

Classification classify_continuous(const FitResult& fit, bool ada_slope_flag, double alpha) {
    return classify_continuous(evidence_from_fit(fit), ada_slope_flag, alpha);
}

Classification classify_discrete(const FitResult& fit, bool ada_slope_flag, double alpha) {
    return classify_discrete(evidence_from_fit(fit), ada_slope_flag, alpha);
}

Classification classify(Variant variant, const Evidence& evidence, bool ada_slope_flag, double alpha) {
    Classification c = design_of(variant).error_form == ErrorForm::Continuous
                           ? classify_continuous(evidence, ada_slope_flag, alpha)
                           : classify_discrete(evidence, ada_slope_flag, alpha);
    c.variant = variant;
    return c;
}

std::vector<SplitCoefficient> split_sample_coefficients(std::span<const DerivedRow> rows,
                                                        std::vector<std::string>& warnings, Outcome outcome) {
    std::map<std::string, std::vector<DerivedRow>> by_experiment;
    for (const auto& r : rows) by_experiment[r.obs.experiment].push_back(r);

    std::vector<SplitCoefficient> out;
    for (const auto& [experiment, exp_rows] : by_experiment) {
        for (Split split : {Split::Below, Split::AtOrAbove}) {
            const int flag = split == Split::Below ? 1 : 0;
            const auto data = build_r_only(exp_rows, outcome, flag);
            if (data.y.size() == 0) {
                warnings.push_back("experiment '" + experiment + "': empty " + std::string(to_string(split)) +
                                   "-median split");
                continue;
            }
            const FitResult fit = outcome == Outcome::BinaryY ? fit_binary(data) : fit_fe_ols_cluster(data);
            if (!fit.estimable[0]) {
                warnings.push_back("experiment '" + experiment + "': R not estimable in the " +
                                   std::string(to_string(split)) + "-median split");
                continue;
            }
            SplitCoefficient sc;
            sc.experiment = experiment;
            sc.split = split;
            sc.gamma = fit.coefficients(0);
            sc.se = fit.standard_errors(0);
            sc.p = fit.p_values(0);
            sc.n_obs = fit.n_obs;
            sc.converged = fit.converged;
            double sum = 0.0;
            long n = 0;
            for (const auto& r : exp_rows) {
                if (r.derived.se == flag && std::isfinite(r.derived.abs_e)) {
                    sum += r.derived.abs_e;
                    ++n;
                }
            }
            sc.mean_abs_error = n > 0 ? sum / static_cast<double>(n) : 0.0;
            if (!fit.converged) {
                warnings.push_back("experiment '" + experiment + "': split fit did not converge (" + fit.message +
                                   ")");
            }
            out.push_back(sc);
        }
    }
    return out;
}

}  // namespace ltf
