// Acceptance checks, one PASS/FAIL line per criterion.
//
//   acceptance                 run all criteria
//   acceptance --criterion 3   run one
//
// Exit status is nonzero when any selected criterion fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "ltf/linalg.hpp"
#include "ltf/pipeline.hpp"
#include "oracles.hpp"

using namespace ltf;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

struct CriterionResult {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            if (!detail.empty()) detail += "; ";
            detail += what;
        }
    }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, f, a, b, c);
    return buf;
}

bool is_binary_table(const PublishedRow& r) { return r.table == "A.5" || r.table == "A.6"; }

CriterionResult published_replay() {
    CriterionResult out;
    const auto start = std::chrono::steady_clock::now();
    std::vector<PublishedRow> rows;
    for (auto& r : ingest_published(LTF_SOURCE_DIR "/data/published_tables.csv"))
        if (is_binary_table(r)) rows.push_back(std::move(r));
    const auto results = replay(rows, 0.05);
    int matches = 0;
    std::set<std::string> at_median;
    for (const auto& r : results) {
        if (r.verdict_matches && r.z_matches) ++matches;
        else out.require(false, r.row.table + " model " + r.row.model + " " + std::string(to_string(r.row.variant)));
        if (r.classification.z_location == ZLocation::AtMedian) at_median.insert(r.row.model);
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.require(results.size() == 36, "expected 36 printed entries");
    out.require(at_median == std::set<std::string>{"14", "16", "17", "18"}, "AtMedian set differs");
    out.require(seconds < 1.0, "runtime over 1 s");
    if (out.pass)
        out.detail = std::to_string(matches) + "/36 verdicts, AtMedian {14,16,17,18}, " + fmt("%.3f s", seconds);
    return out;
}

CriterionResult wald_replay() {
    CriterionResult out;
    int checked = 0;
    double worst = 0.0;
    for (const auto& r : ingest_published(LTF_SOURCE_DIR "/data/published_tables.csv")) {
        if (!r.evidence.combo) continue;
        FitResult fit;
        fit.coefficients = Eigen::Vector3d(r.evidence.beta.value, r.evidence.gamma.value, r.evidence.delta.value);
        fit.covariance = Eigen::Vector3d(r.evidence.beta.se, r.evidence.gamma.se, r.evidence.delta.se)
                             .cwiseAbs2()
                             .asDiagonal();
        fit.estimable = {true, true, true};
        const auto combo = wald_linear_combo(fit, Eigen::Vector3d(0, 1, 1));
        const double gap = std::abs(combo.estimate - r.evidence.combo->value);
        worst = std::max(worst, gap);
        ++checked;
        out.require(gap <= 0.01 + 1e-12, r.table + " model " + r.model + fmt(" gap %.4f", gap));
        if (r.table == "A.5" && r.model == "1") {
            out.require(std::abs(combo.estimate - 0.49) < 1e-12, fmt("A.5 model 1 gives %.6f", combo.estimate));
        }
    }
    out.require(checked > 0, "no combo rows");
    if (out.pass) out.detail = std::to_string(checked) + " combo rows, A.5 model 1 = 0.49, " + fmt("max gap %.4f", worst);
    return out;
}

CriterionResult closed_loop_recovery() {
    CriterionResult out;
    const auto start = std::chrono::steady_clock::now();
    constexpr int kSeeds = 10;
    std::string summary;
    for (Rule rule : {Rule::ADA, Rule::IDBD, Rule::RMBL}) {
        for (bool positive : {true, false}) {
            int hits = 0;
            for (int s = 0; s < kSeeds; ++s) {
                const auto cfg = oracle::closed_loop_config(rule, positive, derive_seed(0xACC3, std::uint64_t(s)));
                const auto report = analyze(derive_panel(simulate(cfg).panel), analysis_options(cfg));
                const auto& c = report.experiments.at(0).variants.at(0).classification;
                if (rule == Rule::ADA) {
                    hits += c.evidence.unusable_reason.empty() && c.evidence.gamma.p >= 0.05 &&
                            c.evidence.delta.p >= 0.05;
                } else {
                    hits += c.verdict == (rule == Rule::RMBL ? Verdict::RMBL : Verdict::IDBD);
                }
            }
            const std::string cell = std::string(to_string(rule)) + (positive ? "+" : "-");
            summary += (summary.empty() ? "" : ", ") + cell + " " + std::to_string(hits) + "/" +
                       std::to_string(kSeeds);
            out.require(hits * 10 >= kSeeds * 8, cell + " below 80%");
        }
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.require(seconds < 300.0, "runtime over 5 min");
    out.detail = summary + fmt(", %.1f s", seconds) + (out.pass ? "" : " | " + out.detail);
    return out;
}

CriterionResult fixed_point_and_payoff() {
    CriterionResult out;
    const auto map = asset_pricing_map(0.05, 3.3, 0.0);
    out.require(realize_price(66.0, map, 1, 0.0) == 66.0, "66 is not a fixed point");
    out.require(payoff(50.0, 50.0) == 100.0, "payoff(0) != 100");
    out.require(payoff(50.0, 57.0) == 0.0 && payoff(50.0, 43.0) == 0.0, "payoff(7) != 0");
    out.require(payoff(50.0, 53.5) == 75.0 && payoff(50.0, 46.5) == 75.0, "payoff(3.5) != 75");
    if (out.pass) out.detail = "p(66) = 66, payoff 100 / 75 / 0 exact";
    return out;
}

RegressionData toy_data(const MatrixXd& x, const VectorXd& y, std::vector<int> cluster) {
    RegressionData d;
    d.x = x;
    d.y = y;
    d.cluster = std::move(cluster);
    d.n_clusters = *std::max_element(d.cluster.begin(), d.cluster.end()) + 1;
    for (Eigen::Index j = 0; j < x.cols(); ++j) d.terms.push_back("x" + std::to_string(j));
    return d;
}

RegressionData linear_panel(std::uint64_t seed, double noise, double outlier) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n01;
    const int subjects = 15;
    const int periods = 12;
    MatrixXd x(subjects * periods, 2);
    VectorXd y(subjects * periods);
    std::vector<int> cluster;
    for (int s = 0; s < subjects; ++s) {
        const double alpha = 3.0 * n01(rng);
        for (int t = 0; t < periods; ++t) {
            const int i = s * periods + t;
            x.row(i) << n01(rng), n01(rng);
            y(i) = alpha + 1.5 * x(i, 0) - 0.5 * x(i, 1) + noise * (t % 2 ? 1.0 : -1.0) + (i % 17 == 0 ? outlier : 0.0);
            cluster.push_back(s);
        }
    }
    return toy_data(x, y, cluster);
}

CriterionResult estimator_oracles() {
    CriterionResult out;
    std::vector<FitResult> fits;

    MatrixXd x(8, 1);
    VectorXd y(8);
    x << 0, 0, 0, 0, 1, 1, 1, 1;
    y << 1, 1, 0, 0, 1, 1, 1, 0;
    const auto pooled = fit_re_fallback(toy_data(x, y, {0, 0, 1, 1, 2, 2, 3, 3}));
    const double ln3_gap = std::abs(pooled.coefficients(0) - std::log(3.0));
    out.require(ln3_gap < 1e-6, fmt("logit slope off ln 3 by %.2e", ln3_gap));
    fits.push_back(pooled);

    MatrixXd xo(4, 1);
    xo << 1, 2, 1, 3;
    VectorXd yo(4);
    yo << 1, 3, 2, 5;
    const auto ols = fit_fe_ols_cluster(toy_data(xo, yo, {0, 0, 1, 1}));
    out.require(std::abs(ols.coefficients(0) - 1.6) < 1e-9, "within OLS slope != 1.6");
    out.require(std::abs(ols.standard_errors(0) - 0.16) < 1e-9, "within OLS se != 0.16");
    fits.push_back(ols);

    const auto clean = linear_panel(1, 0.3, 0.0);
    const auto clean_ols = fit_fe_ols_cluster(clean);
    const auto clean_huber = fit_fe_huber(clean);
    const double clean_gap = (clean_huber.coefficients - clean_ols.coefficients).lpNorm<Eigen::Infinity>();
    out.require(clean_gap < 1e-6, fmt("Huber vs OLS on clean data %.2e", clean_gap));
    const auto dirty = linear_panel(2, 0.3, 30.0);
    const auto dirty_ols = fit_fe_ols_cluster(dirty);
    const auto wide = fit_fe_huber(dirty, 1e6);
    const double wide_gap = (wide.coefficients - dirty_ols.coefficients).lpNorm<Eigen::Infinity>();
    out.require(wide_gap < 1e-6, fmt("Huber vs OLS at large tuning %.2e", wide_gap));
    fits.insert(fits.end(), {clean_ols, clean_huber, dirty_ols, wide, fit_fe_huber(dirty)});

    // binary and continuous fits on a simulated panel
    const auto cfg = oracle::closed_loop_config(Rule::RMBL, true, 5, 10);
    const auto rows = derive_panel(simulate(cfg).panel);
    for (Variant v : kAllVariants) fits.push_back(fit_variant(v, build_design(rows, design_of(v)), kDefaultHuberTuning));
    fits.push_back(estimate_ada_slope(rows).fit);

    double worst_score = 0.0;
    double worst_eig = std::numeric_limits<double>::infinity();
    for (const auto& f : fits) {
        const double eig = linalg::min_eigenvalue(f.estimable_covariance());
        worst_eig = std::min(worst_eig, eig);
        out.require(eig > -1e-10, fmt("covariance min eigenvalue %.2e", eig));
        if (!f.converged) continue;
        worst_score = std::max(worst_score, f.score_inf_norm);
        out.require(f.score_inf_norm < 1e-6, fmt("score norm %.2e", f.score_inf_norm));
    }
    if (out.pass)
        out.detail = fmt("ln3 gap %.1e, Huber gaps %.1e / %.1e", ln3_gap, clean_gap, wide_gap) +
                     fmt(", max score %.1e, min eigenvalue %.1e", worst_score, worst_eig) + ", " +
                     std::to_string(fits.size()) + " fits";
    return out;
}

CriterionResult gradient_check() {
    CriterionResult out;
    std::mt19937_64 rng(66);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) worst = std::max(worst, oracle::gradient_relative_error(oracle::random_gradient_state(rng)));
    out.require(worst < 1e-6, fmt("max relative error %.2e", worst));
    if (out.pass) out.detail = fmt("100 states, max relative error %.2e", worst);
    return out;
}

CriterionResult inversion() {
    CriterionResult out;
    long defined = 0;
    double worst = 0.0;
    for (Rule rule : {Rule::ADA, Rule::RMBL}) {
        for (bool positive : {true, false}) {
            const auto cfg = oracle::closed_loop_config(rule, positive, 31, 5, 0.0);
            const auto sim = simulate(cfg);
            std::map<std::tuple<std::string, std::string, int>, double> internal;
            for (std::size_t i = 0; i < sim.panel.size(); ++i)
                internal[{sim.panel[i].market_id, sim.panel[i].subject_id, sim.panel[i].period}] = sim.internal_gain[i];
            for (const auto& r : derive_panel(sim.panel)) {
                if (!r.derived.gain) continue;
                ++defined;
                worst = std::max(worst, std::abs(*r.derived.gain - internal.at({r.obs.market_id, r.obs.subject_id, r.obs.period})));
            }
        }
    }
    out.require(defined > 0, "no defined gains");
    out.require(worst <= 1e-9, fmt("max gap %.2e", worst));
    if (out.pass) out.detail = std::to_string(defined) + " rows, " + fmt("max gap %.2e", worst);
    return out;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

CriterionResult determinism() {
    CriterionResult out;
    const auto config = load_config(LTF_SOURCE_DIR "/configs/closed_loop.ini");
    const auto base = fs::temp_directory_path() / "ltf_acceptance_determinism";
    fs::remove_all(base);
    const auto a = run_pipeline(config, base / "a");
    const auto b = run_pipeline(config, base / "b");
    std::size_t bytes = 0;
    out.require(a.files.size() == b.files.size() && !a.files.empty(), "file lists differ");
    for (const auto& f : a.files) {
        const auto left = slurp(f);
        bytes += left.size();
        out.require(left == slurp(base / "b" / f.filename()), f.filename().string() + " differs");
    }
    fs::remove_all(base);
    if (out.pass) out.detail = std::to_string(a.files.size()) + " files, " + std::to_string(bytes) + " bytes identical";
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<std::string, std::function<CriterionResult()>>> criteria{
        {"published-table replay", published_replay},
        {"Wald replay", wald_replay},
        {"closed-loop rule recovery", closed_loop_recovery},
        {"fixed point and payoff", fixed_point_and_payoff},
        {"estimator oracles", estimator_oracles},
        {"gradient check", gradient_check},
        {"gain inversion", inversion},
        {"pipeline determinism", determinism},
    };
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
            only = std::atoi(argv[++i]);
        } else {
            std::fprintf(stderr, "usage: %s [--criterion N]\n", argv[0]);
            return 2;
        }
    }
    if (only < 0 || only > static_cast<int>(criteria.size())) {
        std::fprintf(stderr, "criterion must be in 1..%zu\n", criteria.size());
        return 2;
    }
    bool all = true;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        if (only != 0 && static_cast<int>(k) + 1 != only) continue;
        CriterionResult o;
        try {
            o = criteria[k].second();
        } catch (const std::exception& e) {
            o.pass = false;
            o.detail = std::string("exception: ") + e.what();
        }
        all = all && o.pass;
        std::printf("AC%zu %s  %s: %s\n", k + 1, o.pass ? "PASS" : "FAIL", criteria[k].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return all ? 0 : 1;
}
