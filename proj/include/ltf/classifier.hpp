// Hypothesis system that maps fitted learning-speed regressions to a rule.
//
//                 continuous (E)                 discrete (SE)
//   RMBL     delta > 0 sig, gamma not sig < 0    delta < 0 sig, gamma > 0 sig
//   IDBD     delta insig,   gamma > 0 sig        delta insig,   gamma > 0 sig
//   ADA      delta, gamma insig, revision slope in (0, 1)
//
// Rules are tested in that order; anything else is Unclassified. For a
// discrete RMBL verdict the sign of gamma + delta locates the satisficing
// threshold relative to the subject's median absolute error.
#ifndef LTF_CLASSIFIER_HPP
#define LTF_CLASSIFIER_HPP

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ltf/gain_extraction.hpp"
#include "ltf/panel_econometrics.hpp"

namespace ltf {

enum class Variant { BinaryContinuous, BinaryDiscrete, OlsContinuous, OlsDiscrete, HuberContinuous, HuberDiscrete };
enum class Verdict { RMBL, IDBD, ADA, Unclassified };
enum class ZLocation { AtMedian, BelowMedian, NotApplicable };

inline constexpr Variant kAllVariants[] = {Variant::BinaryContinuous, Variant::BinaryDiscrete,
                                           Variant::OlsContinuous,    Variant::OlsDiscrete,
                                           Variant::HuberContinuous,  Variant::HuberDiscrete};

std::string_view to_string(Variant v);
std::string_view to_string(Verdict v);
std::string_view to_string(ZLocation z);
Variant parse_variant(std::string_view text);
Verdict parse_verdict(std::string_view text);
ZLocation parse_z_location(std::string_view text);

DesignSpec design_of(Variant v);

/// Point estimate, standard error and two-sided p-value of one coefficient.
struct CoefficientEvidence {
    double value = 0.0;
    double se = 0.0;
    double p = 1.0;
};

/// What the classifier needs from a fit: the three slopes and, optionally,
/// the gamma + delta Wald test.
struct Evidence {
    CoefficientEvidence beta;
    CoefficientEvidence gamma;
    CoefficientEvidence delta;
    std::optional<CoefficientEvidence> combo;
    long n_obs = 0;
    /// Empty when the evidence can be classified; otherwise why not.
    std::string unusable_reason;
};

Evidence evidence_from_fit(const FitResult& fit);

/// p-value of a printed coefficient: the normal p-value of value/se, moved into
/// the significance bracket its stars imply (0: [0.1, 1], 1: [0.05, 0.1),
/// 2: [0.01, 0.05), 3: [0, 0.01)). Rounded printed values can otherwise
/// contradict their own stars.
double p_from_printed(double value, double se, int stars);
CoefficientEvidence printed_coefficient(double value, double se, int stars);

struct Classification {
    std::string experiment;
    Variant variant = Variant::BinaryContinuous;
    Verdict verdict = Verdict::Unclassified;
    ZLocation z_location = ZLocation::NotApplicable;
    double alpha = 0.05;
    bool ada_slope_flag = false;
    Evidence evidence;
    std::string reason;
};

Classification classify_continuous(const Evidence& evidence, bool ada_slope_flag, double alpha);
Classification classify_discrete(const Evidence& evidence, bool ada_slope_flag, double alpha);
Classification classify_continuous(const FitResult& fit, bool ada_slope_flag, double alpha);
Classification classify_discrete(const FitResult& fit, bool ada_slope_flag, double alpha);

/// Dispatches on the error form of the variant and stamps the variant.
Classification classify(Variant variant, const Evidence& evidence, bool ada_slope_flag, double alpha);

enum class Split { Below, AtOrAbove };
std::string_view to_string(Split s);

struct SplitCoefficient {
    std::string experiment;
    Split split = Split::Below;
    double gamma = 0.0;
    double se = 0.0;
    double p = 1.0;
    double mean_abs_error = 0.0;
    long n_obs = 0;
    bool converged = false;
};

/// Outcome on R alone, fitted separately below and at-or-above each subject's
/// median |e|, per experiment. Empty splits are skipped with a warning.
std::vector<SplitCoefficient> split_sample_coefficients(std::span<const DerivedRow> rows,
                                                        std::vector<std::string>& warnings,
                                                        Outcome outcome = Outcome::BinaryY);

}  // namespace ltf

#endif  // LTF_CLASSIFIER_HPP
