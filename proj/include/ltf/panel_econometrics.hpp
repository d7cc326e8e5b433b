// Panel estimators for the learning-speed regressions.
//
// Every design regresses an outcome (Y or dG) on three terms in a fixed order:
//   beta  : the error measure (E or SE)
//   gamma : R, the positive-autocorrelation indicator
//   delta : the interaction (error measure x R)
// with subject fixed effects and subject clusters.
#ifndef LTF_PANEL_ECONOMETRICS_HPP
#define LTF_PANEL_ECONOMETRICS_HPP

#include <Eigen/Dense>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ltf/gain_extraction.hpp"

namespace ltf {

enum class Outcome { BinaryY, ContinuousDeltaG };
enum class ErrorForm { Continuous, Discrete };
enum class Estimator { CondLogit, PooledLogitFallback, WithinOLS, HuberM };

std::string_view to_string(Estimator e);

struct DesignSpec {
    Outcome outcome = Outcome::BinaryY;
    ErrorForm error_form = ErrorForm::Continuous;
};

/// Outcome vector, regressor matrix and cluster (subject) index per row.
struct RegressionData {
    Eigen::VectorXd y;
    Eigen::MatrixXd x;
    std::vector<int> cluster;
    int n_clusters = 0;
    std::vector<std::string> terms;
};

/// Rows with a missing outcome or missing R are skipped.
RegressionData build_design(std::span<const DerivedRow> rows, const DesignSpec& spec);

/// Outcome on R alone, restricted to rows whose SE flag equals `se_flag`.
RegressionData build_r_only(std::span<const DerivedRow> rows, Outcome outcome, int se_flag);

struct FitResult {
    Estimator estimator = Estimator::CondLogit;
    std::vector<std::string> terms;
    Eigen::VectorXd coefficients;
    Eigen::MatrixXd covariance;
    Eigen::VectorXd standard_errors;
    Eigen::VectorXd p_values;
    std::vector<bool> estimable;
    double intercept = std::numeric_limits<double>::quiet_NaN();  // pooled fits only
    long n_obs = 0;
    int n_subjects = 0;
    int dropped_subjects = 0;
    bool converged = false;
    bool separated = false;
    int iterations = 0;
    double score_inf_norm = std::numeric_limits<double>::quiet_NaN();
    double r_squared = std::numeric_limits<double>::quiet_NaN();
    std::string message;

    /// Covariance restricted to estimable coefficients.
    Eigen::MatrixXd estimable_covariance() const;
};

/// Plain logit by Newton-Raphson with step halving, used both for the pooled
/// fallback and for closed-form checks.
struct NewtonLogitResult {
    Eigen::VectorXd theta;
    Eigen::MatrixXd neg_hessian;
    Eigen::VectorXd score;
    double log_likelihood = 0.0;
    int iterations = 0;
    bool converged = false;
    bool separated = false;
};

NewtonLogitResult newton_logit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int max_iter = 100,
                               double score_tol = 1e-8);

/// Conditional log-likelihood of one subject's outcomes and its first two
/// derivatives, via the sum over all outcome vectors with the same total.
struct ConditionalTerm {
    double log_likelihood = 0.0;
    Eigen::VectorXd score;
    Eigen::MatrixXd hessian;
};

ConditionalTerm conditional_logit_term(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                       const Eigen::VectorXd& theta);

FitResult fit_fe_logit(const RegressionData& data);
FitResult fit_re_fallback(const RegressionData& data);

/// Conditional logit, falling back to the pooled cluster-robust logit when the
/// conditional fit does not converge.
FitResult fit_binary(const RegressionData& data);

FitResult fit_fe_ols_cluster(const RegressionData& data);

inline constexpr double kDefaultHuberTuning = 1.345;
FitResult fit_fe_huber(const RegressionData& data, double tuning = kDefaultHuberTuning);

struct LinearComboTest {
    double estimate = 0.0;
    double se = 0.0;
    double p_value = 1.0;
};

/// Throws std::invalid_argument when the covariance has an eigenvalue below -1e-10.
LinearComboTest wald_linear_combo(const FitResult& fit, const Eigen::VectorXd& weights);

struct AdaSlopeResult {
    FitResult fit;
    double slope = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    bool inside_unit_interval = false;
    bool rank_deficient = false;
};

/// Within-subject slope of the forecast revision on the lagged forecast error.
AdaSlopeResult estimate_ada_slope(std::span<const DerivedRow> rows);

struct SubjectMedian {
    std::string experiment;
    std::string subject;
    double median_abs_error = 0.0;
};

std::vector<SubjectMedian> subject_medians(std::span<const DerivedRow> rows);

/// Subject-level median |e| on experiment indicators, HC1 standard errors,
/// `base` absorbed into the constant.
FitResult compare_thresholds(std::span<const SubjectMedian> medians, const std::string& base);

}  // namespace ltf

#endif  // LTF_PANEL_ECONOMETRICS_HPP
