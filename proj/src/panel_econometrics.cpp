#include "ltf/panel_econometrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "ltf/learning_rules.hpp"
#include "ltf/linalg.hpp"

namespace ltf {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kPsdTolerance = -1e-10;
constexpr double kSeparationMagnitude = 15.0;
constexpr double kZ975 = 1.959963984540054;
constexpr double kMadToSigma = 0.6744897501960817;

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

using SubjectKey = std::tuple<std::string, std::string, std::string, std::string>;

SubjectKey key_of(const PanelObservation& o) { return {o.experiment, o.treatment, o.market_id, o.subject_id}; }

double softplus(double s) { return s > 0.0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

/// Expands estimates on the kept columns into full-size vectors with NaN for
/// dropped terms and fills standard errors and p-values.
void fill_coefficients(FitResult& fit, std::size_t n_terms, const std::vector<Index>& keep, const VectorXd& beta,
                       const MatrixXd& cov) {
    const auto k = static_cast<Index>(n_terms);
    fit.coefficients = VectorXd::Constant(k, kNaN);
    fit.covariance = MatrixXd::Constant(k, k, kNaN);
    fit.standard_errors = VectorXd::Constant(k, kNaN);
    fit.p_values = VectorXd::Constant(k, kNaN);
    fit.estimable.assign(n_terms, false);
    for (std::size_t a = 0; a < keep.size(); ++a) {
        const auto ia = static_cast<Index>(a);
        fit.estimable[static_cast<std::size_t>(keep[a])] = true;
        fit.coefficients(keep[a]) = beta(ia);
        for (std::size_t b = 0; b < keep.size(); ++b) fit.covariance(keep[a], keep[b]) = cov(ia, static_cast<Index>(b));
        const double var = cov(ia, ia);
        const double se = std::sqrt(std::max(var, 0.0));
        fit.standard_errors(keep[a]) = se;
        if (se > 0.0) {
            fit.p_values(keep[a]) = linalg::normal_two_sided_p(beta(ia) / se);
        } else {
            fit.p_values(keep[a]) = beta(ia) == 0.0 ? 1.0 : 0.0;
        }
    }
    // symmetrize against round-off in the sandwich products
    fit.covariance = (0.5 * (fit.covariance + fit.covariance.transpose())).eval();
}

struct Evaluation {
    double ll = 0.0;
    VectorXd score;
    MatrixXd neg_hessian;
};

struct NewtonOutcome {
    VectorXd theta;
    Evaluation last;
    int iterations = 0;
    bool converged = false;
    bool separated = false;
    std::string message;
};

/// Damped Newton ascent on a concave objective.
template <typename Eval>
NewtonOutcome newton_maximize(Eval&& eval, VectorXd theta, int max_iter, double tol) {
    NewtonOutcome out;
    double prev_step = std::numeric_limits<double>::infinity();
    Evaluation ev = eval(theta);
    for (int it = 0; it < max_iter; ++it) {
        out.iterations = it;
        if (!std::isfinite(ev.ll)) {
            out.message = "non-finite objective";
            break;
        }
        if (theta.size() == 0 || ev.score.lpNorm<Eigen::Infinity>() < tol) {
            out.converged = true;
            break;
        }
        Eigen::LDLT<MatrixXd> ldlt(ev.neg_hessian);
        if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().array() <= 0.0).any()) {
            out.message = "singular information matrix";
            break;
        }
        const VectorXd step = ldlt.solve(ev.score);
        const double step_norm = step.norm();
        if (theta.cwiseAbs().maxCoeff() > kSeparationMagnitude && step_norm >= prev_step) {
            out.separated = true;
            out.message = "separation: coefficients diverge";
            break;
        }
        prev_step = step_norm;

        double t = 1.0;
        VectorXd candidate = theta + step;
        Evaluation ev_c = eval(candidate);
        for (int h = 0; h < 40 && !(ev_c.ll >= ev.ll - 1e-12 * std::max(1.0, std::abs(ev.ll))); ++h) {
            t *= 0.5;
            candidate = theta + t * step;
            ev_c = eval(candidate);
        }
        theta = std::move(candidate);
        ev = std::move(ev_c);
        out.iterations = it + 1;
    }
    if (!out.converged && !out.separated && out.message.empty() && ev.score.size() > 0 &&
        ev.score.lpNorm<Eigen::Infinity>() < tol) {
        out.converged = true;
    }
    // a vanishing score far out along a ray is the likelihood flattening at infinity
    if (out.converged && theta.size() > 0 && theta.cwiseAbs().maxCoeff() > kSeparationMagnitude) {
        out.converged = false;
        out.separated = true;
        out.message = "separation: coefficients diverge";
    }
    if (!out.converged && !out.separated && out.message.empty()) out.message = "iteration limit reached";
    out.theta = std::move(theta);
    out.last = std::move(ev);
    return out;
}

std::vector<std::vector<Index>> rows_by_cluster(const RegressionData& d) {
    std::vector<std::vector<Index>> groups(static_cast<std::size_t>(d.n_clusters));
    for (Index i = 0; i < d.y.size(); ++i) groups[static_cast<std::size_t>(d.cluster[static_cast<std::size_t>(i)])].push_back(i);
    return groups;
}

double cr1_factor(int clusters, Index n, Index k) {
    const double m = clusters;
    return (m / (m - 1.0)) * (static_cast<double>(n - 1) / static_cast<double>(n - k));
}

struct WithinData {
    MatrixXd x;
    VectorXd y;
    std::vector<Index> keep;
    int clusters = 0;
};

WithinData within_transform(const RegressionData& d) {
    WithinData w;
    w.x = linalg::demean_by_cluster(d.x, d.cluster, d.n_clusters);
    w.y = linalg::demean_by_cluster(MatrixXd(d.y), d.cluster, d.n_clusters).col(0);
    w.keep = linalg::independent_columns(w.x);
    std::vector<bool> seen(static_cast<std::size_t>(d.n_clusters), false);
    for (int c : d.cluster) seen[static_cast<std::size_t>(c)] = true;
    w.clusters = static_cast<int>(std::count(seen.begin(), seen.end(), true));
    return w;
}

/// Sandwich covariance with CR1 scaling, or HC1 when there is a single cluster.
MatrixXd robust_covariance(const MatrixXd& x, const VectorXd& weighted_resid, const MatrixXd& bread_inv,
                           std::span<const int> cluster, int n_clusters, int used_clusters, std::string& note) {
    const Index n = x.rows();
    const Index k = x.cols();
    if (used_clusters >= 2) {
        const MatrixXd meat = linalg::cluster_meat(x, weighted_resid, cluster, n_clusters);
        return cr1_factor(used_clusters, n, k) * bread_inv * meat * bread_inv;
    }
    note = "single cluster: HC1 covariance";
    const MatrixXd meat = linalg::hc_meat(x, weighted_resid);
    const double factor = n > k ? static_cast<double>(n) / static_cast<double>(n - k) : kNaN;
    return factor * bread_inv * meat * bread_inv;
}

}  // namespace

std::string_view to_string(Estimator e) {
    switch (e) {
        case Estimator::CondLogit: return "CondLogit";
        case Estimator::PooledLogitFallback: return "PooledLogitFallback";
        case Estimator::WithinOLS: return "WithinOLS";
        case Estimator::HuberM: return "HuberM";
    }
    return "?";
}

MatrixXd FitResult::estimable_covariance() const {
    std::vector<Index> keep;
    for (std::size_t j = 0; j < estimable.size(); ++j) {
        if (estimable[j]) keep.push_back(static_cast<Index>(j));
    }
    MatrixXd out(static_cast<Index>(keep.size()), static_cast<Index>(keep.size()));
    for (std::size_t a = 0; a < keep.size(); ++a)
        for (std::size_t b = 0; b < keep.size(); ++b)
            out(static_cast<Index>(a), static_cast<Index>(b)) = covariance(keep[a], keep[b]);
    return out;
}

namespace {

RegressionData assemble(std::span<const DerivedRow> rows, std::vector<std::string> terms,
                        auto&& include, auto&& outcome, auto&& regressors) {
    RegressionData d;
    d.terms = std::move(terms);
    std::map<SubjectKey, int> ids;
    std::vector<double> ys;
    std::vector<std::vector<double>> xs;
    for (const auto& row : rows) {
        if (!include(row)) continue;
        auto [it, inserted] = ids.try_emplace(key_of(row.obs), static_cast<int>(ids.size()));
        d.cluster.push_back(it->second);
        ys.push_back(outcome(row));
        xs.push_back(regressors(row));
    }
    d.n_clusters = static_cast<int>(ids.size());
    const auto n = static_cast<Index>(ys.size());
    const auto k = static_cast<Index>(d.terms.size());
    d.y = Eigen::Map<const VectorXd>(ys.data(), n);
    d.x.resize(n, k);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < k; ++j) d.x(i, j) = xs[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return d;
}

}  // namespace

RegressionData build_design(std::span<const DerivedRow> rows, const DesignSpec& spec) {
    const bool binary = spec.outcome == Outcome::BinaryY;
    const bool continuous = spec.error_form == ErrorForm::Continuous;
    std::vector<std::string> terms = continuous ? std::vector<std::string>{"E", "R", "E_x_R"}
                                                : std::vector<std::string>{"SE", "R", "SE_x_R"};
    return assemble(
        rows, std::move(terms),
        [&](const DerivedRow& r) {
            return r.derived.r.has_value() && (binary ? r.derived.y.has_value() : r.derived.delta_gain.has_value());
        },
        [&](const DerivedRow& r) { return binary ? double(*r.derived.y) : *r.derived.delta_gain; },
        [&](const DerivedRow& r) {
            const double main = continuous ? r.derived.abs_e : double(r.derived.se);
            const double rr = *r.derived.r;
            return std::vector<double>{main, rr, main * rr};
        });
}

RegressionData build_r_only(std::span<const DerivedRow> rows, Outcome outcome, int se_flag) {
    const bool binary = outcome == Outcome::BinaryY;
    return assemble(
        rows, {"R"},
        [&](const DerivedRow& r) {
            return r.derived.se == se_flag && r.derived.r.has_value() &&
                   (binary ? r.derived.y.has_value() : r.derived.delta_gain.has_value());
        },
        [&](const DerivedRow& r) { return binary ? double(*r.derived.y) : *r.derived.delta_gain; },
        [&](const DerivedRow& r) { return std::vector<double>{double(*r.derived.r)}; });
}

NewtonLogitResult newton_logit(const MatrixXd& x, const VectorXd& y, int max_iter, double score_tol) {
    auto eval = [&](const VectorXd& theta) {
        Evaluation ev;
        const VectorXd s = x * theta;
        VectorXd p(s.size());
        double ll = 0.0;
        for (Index i = 0; i < s.size(); ++i) {
            p(i) = sigmoid(s(i));
            ll += y(i) * s(i) - softplus(s(i));
        }
        ev.ll = ll;
        ev.score = x.transpose() * (y - p);
        const VectorXd w = (p.array() * (1.0 - p.array())).matrix();
        ev.neg_hessian = x.transpose() * w.asDiagonal() * x;
        return ev;
    };
    auto out = newton_maximize(eval, VectorXd::Zero(x.cols()), max_iter, score_tol);
    NewtonLogitResult res;
    res.theta = out.theta;
    res.neg_hessian = out.last.neg_hessian;
    res.score = out.last.score;
    res.log_likelihood = out.last.ll;
    res.iterations = out.iterations;
    res.converged = out.converged;
    res.separated = out.separated;
    return res;
}

ConditionalTerm conditional_logit_term(const MatrixXd& x, const VectorXd& y, const VectorXd& theta) {
    const Index n = x.rows();
    const Index k = x.cols();
    const int total = static_cast<int>(std::lround(y.sum()));

    // the conditional likelihood is invariant to a common shift of the rows
    const MatrixXd xc = x.rowwise() - x.colwise().mean();
    const VectorXd s = xc * theta;

    // f[j]: sum over j-subsets of prod w; g[j], h[j]: its gradient and Hessian
    std::vector<double> f(static_cast<std::size_t>(total) + 1, 0.0);
    std::vector<VectorXd> g(f.size(), VectorXd::Zero(k));
    std::vector<MatrixXd> h(f.size(), MatrixXd::Zero(k, k));
    f[0] = 1.0;
    double log_scale = 0.0;
    for (Index t = 0; t < n; ++t) {
        const double w = std::exp(s(t));
        const VectorXd xt = xc.row(t).transpose();
        const int top = static_cast<int>(std::min<Index>(t + 1, total));
        for (int j = top; j >= 1; --j) {
            const auto uj = static_cast<std::size_t>(j);
            h[uj] += w * (h[uj - 1] + xt * g[uj - 1].transpose() + g[uj - 1] * xt.transpose() +
                          f[uj - 1] * xt * xt.transpose());
            g[uj] += w * (g[uj - 1] + f[uj - 1] * xt);
            f[uj] += w * f[uj - 1];
        }
        const double biggest = *std::max_element(f.begin(), f.end());
        if (biggest > 1e100 || biggest < 1e-100) {
            for (std::size_t j = 0; j < f.size(); ++j) {
                f[j] /= biggest;
                g[j] /= biggest;
                h[j] /= biggest;
            }
            log_scale += std::log(biggest);
        }
    }
    const auto ut = static_cast<std::size_t>(total);
    const VectorXd gbar = g[ut] / f[ut];
    ConditionalTerm term;
    term.log_likelihood = y.dot(s) - (std::log(f[ut]) + log_scale);
    term.score = xc.transpose() * y - gbar;
    term.hessian = -(h[ut] / f[ut] - gbar * gbar.transpose());
    return term;
}

FitResult fit_fe_logit(const RegressionData& d) {
    FitResult fit;
    fit.estimator = Estimator::CondLogit;
    fit.terms = d.terms;
    const auto groups = rows_by_cluster(d);

    std::vector<MatrixXd> gx;
    std::vector<VectorXd> gy;
    for (const auto& rows : groups) {
        if (rows.empty()) continue;
        MatrixXd x(static_cast<Index>(rows.size()), d.x.cols());
        VectorXd y(static_cast<Index>(rows.size()));
        for (std::size_t i = 0; i < rows.size(); ++i) {
            x.row(static_cast<Index>(i)) = d.x.row(rows[i]);
            y(static_cast<Index>(i)) = d.y(rows[i]);
        }
        const double total = y.sum();
        if (total == 0.0 || total == static_cast<double>(y.size())) {
            ++fit.dropped_subjects;
            continue;
        }
        gx.push_back(std::move(x));
        gy.push_back(std::move(y));
    }
    fit.n_subjects = static_cast<int>(gx.size());
    for (const auto& y : gy) fit.n_obs += y.size();

    MatrixXd stacked(fit.n_obs, d.x.cols());
    {
        Index at = 0;
        for (const auto& x : gx) {
            stacked.middleRows(at, x.rows()) = x.rowwise() - x.colwise().mean();
            at += x.rows();
        }
    }
    const auto keep = linalg::independent_columns(stacked);
    for (auto& x : gx) x = linalg::select_columns(x, keep);

    auto eval = [&](const VectorXd& theta) {
        Evaluation ev;
        const auto k = theta.size();
        ev.score = VectorXd::Zero(k);
        ev.neg_hessian = MatrixXd::Zero(k, k);
        for (std::size_t g = 0; g < gx.size(); ++g) {
            const auto term = conditional_logit_term(gx[g], gy[g], theta);
            ev.ll += term.log_likelihood;
            ev.score += term.score;
            ev.neg_hessian -= term.hessian;
        }
        return ev;
    };

    if (fit.n_subjects == 0 || keep.empty()) {
        fit.message = "no within-subject variation to estimate";
        fill_coefficients(fit, d.terms.size(), {}, VectorXd(), MatrixXd());
        return fit;
    }
    auto out = newton_maximize(eval, VectorXd::Zero(static_cast<Index>(keep.size())), 100, 1e-8);
    fit.converged = out.converged;
    fit.separated = out.separated;
    fit.iterations = out.iterations;
    fit.message = out.message;
    fit.score_inf_norm = out.last.score.lpNorm<Eigen::Infinity>();

    MatrixXd cov = MatrixXd::Constant(out.theta.size(), out.theta.size(), kNaN);
    Eigen::LDLT<MatrixXd> ldlt(out.last.neg_hessian);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        cov = ldlt.solve(MatrixXd::Identity(out.theta.size(), out.theta.size()));
    }
    fill_coefficients(fit, d.terms.size(), keep, out.theta, cov);
    if (keep.size() < d.terms.size()) {
        if (!fit.message.empty()) fit.message += "; ";
        fit.message += "dropped terms without within-subject variation";
    }
    return fit;
}

FitResult fit_re_fallback(const RegressionData& d) {
    FitResult fit;
    fit.estimator = Estimator::PooledLogitFallback;
    fit.terms = d.terms;
    fit.n_obs = d.y.size();
    const Index n = d.y.size();
    MatrixXd x(n, d.x.cols() + 1);
    x.col(0).setOnes();
    x.rightCols(d.x.cols()) = d.x;

    auto keep_all = linalg::independent_columns(x);
    if (keep_all.empty() || keep_all.front() != 0) keep_all.insert(keep_all.begin(), 0);
    const MatrixXd xk = linalg::select_columns(x, keep_all);
    std::vector<bool> seen(static_cast<std::size_t>(d.n_clusters), false);
    for (int c : d.cluster) seen[static_cast<std::size_t>(c)] = true;
    const int clusters = static_cast<int>(std::count(seen.begin(), seen.end(), true));
    fit.n_subjects = clusters;

    const auto res = newton_logit(xk, d.y);
    fit.converged = res.converged;
    fit.separated = res.separated;
    fit.iterations = res.iterations;
    fit.score_inf_norm = res.score.lpNorm<Eigen::Infinity>();
    fit.intercept = res.theta(0);
    if (!res.converged) fit.message = res.separated ? "separation: coefficients diverge" : "iteration limit reached";

    MatrixXd cov = MatrixXd::Constant(xk.cols(), xk.cols(), kNaN);
    Eigen::LDLT<MatrixXd> ldlt(res.neg_hessian);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
        const MatrixXd bread = ldlt.solve(MatrixXd::Identity(xk.cols(), xk.cols()));
        VectorXd resid(n);
        for (Index i = 0; i < n; ++i) resid(i) = d.y(i) - sigmoid(xk.row(i).dot(res.theta));
        if (clusters >= 2) {
            const MatrixXd meat = linalg::cluster_meat(xk, resid, d.cluster, d.n_clusters);
            cov = (static_cast<double>(clusters) / (clusters - 1.0)) * bread * meat * bread;
        } else {
            cov = bread;
            fit.message += fit.message.empty() ? "single cluster: model covariance" : "; single cluster";
        }
    }
    std::vector<Index> keep;
    for (std::size_t a = 1; a < keep_all.size(); ++a) keep.push_back(keep_all[a] - 1);
    const Index m = static_cast<Index>(keep.size());
    fill_coefficients(fit, d.terms.size(), keep, res.theta.tail(m), cov.bottomRightCorner(m, m));
    return fit;
}

FitResult fit_binary(const RegressionData& data) {
    FitResult fe = fit_fe_logit(data);
    if (fe.converged) return fe;
    FitResult pooled = fit_re_fallback(data);
    pooled.message = "conditional logit failed (" + fe.message + "); pooled fallback" +
                     (pooled.message.empty() ? "" : ": " + pooled.message);
    return pooled;
}

FitResult fit_fe_ols_cluster(const RegressionData& d) {
    FitResult fit;
    fit.estimator = Estimator::WithinOLS;
    fit.terms = d.terms;
    fit.n_obs = d.y.size();
    const auto w = within_transform(d);
    fit.n_subjects = w.clusters;
    if (w.keep.empty()) {
        fit.message = "no within-subject variation to estimate";
        fill_coefficients(fit, d.terms.size(), {}, VectorXd(), MatrixXd());
        return fit;
    }
    const MatrixXd xk = linalg::select_columns(w.x, w.keep);
    const VectorXd beta = xk.colPivHouseholderQr().solve(w.y);
    const VectorXd resid = w.y - xk * beta;
    const MatrixXd bread = (xk.transpose() * xk).ldlt().solve(MatrixXd::Identity(xk.cols(), xk.cols()));
    const MatrixXd cov = robust_covariance(xk, resid, bread, d.cluster, d.n_clusters, w.clusters, fit.message);

    fit.converged = true;
    fit.score_inf_norm = (2.0 * xk.transpose() * resid).lpNorm<Eigen::Infinity>();
    const double sst = w.y.squaredNorm();
    fit.r_squared = sst > 0.0 ? 1.0 - resid.squaredNorm() / sst : kNaN;
    fill_coefficients(fit, d.terms.size(), w.keep, beta, cov);
    if (w.keep.size() < d.terms.size()) {
        if (!fit.message.empty()) fit.message += "; ";
        fit.message += "rank deficient after demeaning";
    }
    return fit;
}

namespace {

double mad_scale(const VectorXd& r) {
    std::vector<double> v(r.data(), r.data() + r.size());
    const double center = median(v);
    for (auto& x : v) x = std::abs(x - center);
    return median(std::move(v)) / kMadToSigma;
}

/// Subtracts weighted subject means from the columns of `x` and from `y`.
void weighted_center(const MatrixXd& x, const VectorXd& y, const VectorXd& weights, std::span<const int> cluster,
                     int n_clusters, MatrixXd& xc, VectorXd& yc) {
    MatrixXd sx = MatrixXd::Zero(n_clusters, x.cols());
    VectorXd sy = VectorXd::Zero(n_clusters);
    VectorXd sw = VectorXd::Zero(n_clusters);
    for (Index i = 0; i < x.rows(); ++i) {
        const int c = cluster[static_cast<std::size_t>(i)];
        sx.row(c) += weights(i) * x.row(i);
        sy(c) += weights(i) * y(i);
        sw(c) += weights(i);
    }
    xc.resize(x.rows(), x.cols());
    yc.resize(y.size());
    for (Index i = 0; i < x.rows(); ++i) {
        const int c = cluster[static_cast<std::size_t>(i)];
        xc.row(i) = x.row(i) - sx.row(c) / sw(c);
        yc(i) = y(i) - sy(c) / sw(c);
    }
}

VectorXd huber_weights(const VectorXd& resid, double scale, double tuning) {
    VectorXd w(resid.size());
    for (Index i = 0; i < resid.size(); ++i) {
        const double u = std::abs(resid(i)) / scale;
        w(i) = u <= tuning ? 1.0 : tuning / u;
    }
    return w;
}

}  // namespace

FitResult fit_fe_huber(const RegressionData& d, double tuning) {
    if (!(tuning > 0.0)) throw std::invalid_argument("Huber tuning constant must be > 0");
    FitResult fit;
    fit.estimator = Estimator::HuberM;
    fit.terms = d.terms;
    fit.n_obs = d.y.size();
    const auto w = within_transform(d);
    fit.n_subjects = w.clusters;
    if (w.keep.empty()) {
        fit.message = "no within-subject variation to estimate";
        fill_coefficients(fit, d.terms.size(), {}, VectorXd(), MatrixXd());
        return fit;
    }
    // Subject effects are re-estimated under the current weights: every step
    // centres on weighted subject means, which concentrates the intercepts out
    // of the weighted least-squares problem exactly.
    const MatrixXd raw = linalg::select_columns(d.x, w.keep);
    VectorXd weights = VectorXd::Ones(d.y.size());
    MatrixXd xk = linalg::select_columns(w.x, w.keep);
    VectorXd yk = w.y;
    VectorXd beta = xk.colPivHouseholderQr().solve(yk);
    double scale = 0.0;

    constexpr int kMaxIter = 200;
    for (int it = 0; it < kMaxIter; ++it) {
        fit.iterations = it + 1;
        const VectorXd resid = yk - xk * beta;
        scale = mad_scale(resid);
        if (!(scale > 0.0)) {
            fit.converged = true;
            fit.message = "zero residual scale: unit weights";
            break;
        }
        weights = huber_weights(resid, scale, tuning);
        weighted_center(raw, d.y, weights, d.cluster, d.n_clusters, xk, yk);
        const VectorXd sw = weights.cwiseSqrt();
        const VectorXd next = (sw.asDiagonal() * xk).colPivHouseholderQr().solve(sw.asDiagonal() * yk);
        const double change = (next - beta).lpNorm<Eigen::Infinity>();
        beta = next;
        if (change < 1e-8) {
            fit.converged = true;
            break;
        }
    }
    if (!fit.converged) fit.message = "IRLS did not converge in 200 iterations";

    const VectorXd resid = yk - xk * beta;
    const VectorXd wr = weights.cwiseProduct(resid);
    const MatrixXd a = xk.transpose() * weights.asDiagonal() * xk;
    const MatrixXd bread = a.ldlt().solve(MatrixXd::Identity(xk.cols(), xk.cols()));
    std::string note;
    const MatrixXd cov = robust_covariance(xk, wr, bread, d.cluster, d.n_clusters, w.clusters, note);
    if (!note.empty()) fit.message += fit.message.empty() ? note : "; " + note;
    fit.score_inf_norm = (xk.transpose() * wr).lpNorm<Eigen::Infinity>() / (scale > 0.0 ? scale : 1.0);
    fill_coefficients(fit, d.terms.size(), w.keep, beta, cov);
    return fit;
}

LinearComboTest wald_linear_combo(const FitResult& fit, const VectorXd& weights) {
    if (weights.size() != fit.coefficients.size())
        throw std::invalid_argument("weight vector length must match the number of coefficients");
    if (linalg::min_eigenvalue(fit.estimable_covariance()) < kPsdTolerance)
        throw std::invalid_argument("covariance matrix is not positive semidefinite");
    LinearComboTest test;
    double est = 0.0;
    double var = 0.0;
    for (Index a = 0; a < weights.size(); ++a) {
        if (weights(a) == 0.0) continue;
        est += weights(a) * fit.coefficients(a);
        for (Index b = 0; b < weights.size(); ++b) {
            if (weights(b) != 0.0) var += weights(a) * weights(b) * fit.covariance(a, b);
        }
    }
    test.estimate = est;
    test.se = std::sqrt(std::max(var, 0.0));
    if (std::isnan(est) || std::isnan(var)) {
        test.p_value = kNaN;
    } else if (test.se > 0.0) {
        test.p_value = linalg::normal_two_sided_p(est / test.se);
    } else {
        test.p_value = est == 0.0 ? 1.0 : 0.0;
    }
    return test;
}

AdaSlopeResult estimate_ada_slope(std::span<const DerivedRow> rows) {
    RegressionData d = assemble(
        rows, {"lagged_error"}, [](const DerivedRow& r) { return r.previous.has_value(); },
        [](const DerivedRow& r) { return r.obs.forecast - r.previous->forecast; },
        [](const DerivedRow& r) { return std::vector<double>{r.previous->price - r.previous->forecast}; });
    if (d.y.size() < 2) throw std::invalid_argument("ADA slope needs at least 2 revision pairs");

    AdaSlopeResult out;
    out.fit = fit_fe_ols_cluster(d);
    if (!out.fit.estimable[0]) {
        out.rank_deficient = true;
        out.slope = kNaN;
        out.ci_low = out.ci_high = kNaN;
        return out;
    }
    out.slope = out.fit.coefficients(0);
    const double se = out.fit.standard_errors(0);
    out.ci_low = out.slope - kZ975 * se;
    out.ci_high = out.slope + kZ975 * se;
    out.inside_unit_interval = out.ci_low > 0.0 && out.ci_high < 1.0;
    return out;
}

std::vector<SubjectMedian> subject_medians(std::span<const DerivedRow> rows) {
    std::map<SubjectKey, std::vector<double>> errors;
    for (const auto& r : rows) {
        if (std::isfinite(r.derived.abs_e)) errors[key_of(r.obs)].push_back(r.derived.abs_e);
    }
    std::vector<SubjectMedian> out;
    for (auto& [key, es] : errors) {
        const auto& [exp, treat, market, subject] = key;
        out.push_back({exp, treat + "/" + market + "/" + subject, median(std::move(es))});
    }
    return out;
}

FitResult compare_thresholds(std::span<const SubjectMedian> medians, const std::string& base) {
    std::vector<SubjectMedian> sorted(medians.begin(), medians.end());
    std::sort(sorted.begin(), sorted.end(), [](const SubjectMedian& a, const SubjectMedian& b) {
        return std::tie(a.experiment, a.subject) < std::tie(b.experiment, b.subject);
    });
    std::map<std::string, int> counts;
    for (const auto& m : sorted) ++counts[m.experiment];
    if (counts.size() < 2) throw std::invalid_argument("threshold comparison needs at least 2 experiments");
    if (!counts.contains(base)) throw std::invalid_argument("base experiment '" + base + "' not present");
    for (const auto& [exp, c] : counts) {
        if (c < 2) throw std::invalid_argument("experiment '" + exp + "' has fewer than 2 subjects");
    }

    std::vector<std::string> levels;
    for (const auto& [exp, c] : counts) {
        if (exp != base) levels.push_back(exp);
    }
    FitResult fit;
    fit.estimator = Estimator::WithinOLS;
    fit.terms = {"constant:" + base};
    for (const auto& l : levels) fit.terms.push_back(l);

    const auto n = static_cast<Index>(sorted.size());
    const auto k = static_cast<Index>(fit.terms.size());
    MatrixXd x = MatrixXd::Zero(n, k);
    VectorXd y(n);
    for (Index i = 0; i < n; ++i) {
        const auto& m = sorted[static_cast<std::size_t>(i)];
        y(i) = m.median_abs_error;
        x(i, 0) = 1.0;
        const auto pos = std::find(levels.begin(), levels.end(), m.experiment);
        if (pos != levels.end()) x(i, 1 + (pos - levels.begin())) = 1.0;
    }
    const VectorXd beta = x.colPivHouseholderQr().solve(y);
    const VectorXd resid = y - x * beta;
    const MatrixXd bread = (x.transpose() * x).ldlt().solve(MatrixXd::Identity(k, k));
    const MatrixXd cov = (static_cast<double>(n) / static_cast<double>(n - k)) * bread * linalg::hc_meat(x, resid) * bread;

    fit.n_obs = n;
    fit.n_subjects = static_cast<int>(n);
    fit.converged = true;
    fit.score_inf_norm = (2.0 * x.transpose() * resid).lpNorm<Eigen::Infinity>();
    const double sst = (y.array() - y.mean()).matrix().squaredNorm();
    fit.r_squared = sst > 0.0 ? 1.0 - resid.squaredNorm() / sst : kNaN;
    fit.message = "OLS with HC1 standard errors";
    std::vector<Index> keep(static_cast<std::size_t>(k));
    std::iota(keep.begin(), keep.end(), Index{0});
    fill_coefficients(fit, fit.terms.size(), keep, beta, cov);
    return fit;
}

}  // namespace ltf
