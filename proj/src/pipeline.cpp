#include "ltf/pipeline.hpp"

#include <algorithm>
#include <map>
#include <json.hpp>
#include <sstream>
#include <stdexcept>

namespace ltf {

namespace {

constexpr std::string_view kParameters[] = {"beta", "gamma", "delta"};

std::string stars(double p) {
    if (!(p < 0.1)) return "";
    if (p < 0.01) return "***";
    if (p < 0.05) return "**";
    return "*";
}

/// Free text goes into the last CSV column; keep it delimiter-free.
std::string csv_text(std::string s) {
    std::replace(s.begin(), s.end(), ',', ';');
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

std::string evidence_fields(const CoefficientEvidence& c) {
    return format_real(c.value) + ',' + format_real(c.se) + ',' + format_real(c.p);
}

std::string bool_field(bool b) { return b ? "1" : "0"; }

}  // namespace

SimulationOutput simulate(const RunConfig& config) {
    validate(config);
    if (config.markets.empty()) throw std::invalid_argument("nothing to simulate: no [market.<name>] sections");
    SimulationOutput out;
    std::uint64_t stream = 0;
    for (const auto& block : config.markets) {
        for (int rep = 0; rep < block.replications; ++rep, ++stream) {
            const std::uint64_t market_seed = derive_seed(config.seed, stream);
            std::mt19937_64 agent_rng(derive_seed(market_seed, 1));
            MarketConfig mc;
            mc.experiment = block.experiment;
            mc.treatment = block.treatment;
            mc.market_id = block.name + "-m" + std::to_string(rep + 1);
            mc.horizon = block.horizon;
            mc.map = block.map;
            mc.seed = market_seed;
            const PopulationSpec pops[] = {block.population};
            mc.agents = draw_agents(pops, agent_rng, mc.first_period_bounds);

            MarketRun run;
            try {
                run = run_market(mc);
            } catch (const std::invalid_argument& err) {
                throw std::invalid_argument("[market." + block.name + "] " + err.what());
            }
            out.panel.insert(out.panel.end(), run.panel.begin(), run.panel.end());
            out.internal_gain.insert(out.internal_gain.end(), run.internal_gain.begin(), run.internal_gain.end());
            out.markets.push_back({block.name, block.experiment, mc.market_id, mc, run.metadata});
        }
    }
    return out;
}

AnalysisOptions analysis_options(const RunConfig& config) {
    return {config.alpha, config.huber_tuning, config.variants, config.base_experiment};
}

FitResult fit_variant(Variant variant, const RegressionData& data, double huber_tuning) {
    switch (variant) {
        case Variant::BinaryContinuous:
        case Variant::BinaryDiscrete: return fit_binary(data);
        case Variant::OlsContinuous:
        case Variant::OlsDiscrete: return fit_fe_ols_cluster(data);
        case Variant::HuberContinuous:
        case Variant::HuberDiscrete: return fit_fe_huber(data, huber_tuning);
    }
    throw std::logic_error("unhandled variant");
}

AnalysisReport analyze(std::span<const DerivedRow> rows, const AnalysisOptions& options) {
    if (!(options.alpha > 0.0 && options.alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    AnalysisReport report;
    std::map<std::string, std::vector<DerivedRow>> by_experiment;
    for (const auto& r : rows) by_experiment[r.obs.experiment].push_back(r);

    for (auto& [experiment, exp_rows] : by_experiment) {
        std::sort(exp_rows.begin(), exp_rows.end(), [](const DerivedRow& a, const DerivedRow& b) {
            return std::tie(a.obs.treatment, a.obs.market_id, a.obs.subject_id, a.obs.period) <
                   std::tie(b.obs.treatment, b.obs.market_id, b.obs.subject_id, b.obs.period);
        });
        ExperimentAnalysis ea;
        ea.experiment = experiment;
        ea.n_rows = static_cast<long>(exp_rows.size());
        try {
            ea.ada = estimate_ada_slope(exp_rows);
        } catch (const std::invalid_argument& err) {
            report.warnings.push_back("experiment '" + experiment + "': ADA slope skipped: " + err.what());
        }
        const bool ada_flag = ea.ada && ea.ada->inside_unit_interval;

        for (Variant v : options.variants) {
            VariantResult vr;
            vr.variant = v;
            const auto data = build_design(exp_rows, design_of(v));
            try {
                vr.fit = fit_variant(v, data, options.huber_tuning);
                vr.classification = classify(v, evidence_from_fit(vr.fit), ada_flag, options.alpha);
            } catch (const std::invalid_argument& err) {
                vr.fit.terms = data.terms;
                vr.fit.coefficients = Eigen::VectorXd::Constant(3, std::numeric_limits<double>::quiet_NaN());
                vr.fit.standard_errors = vr.fit.coefficients;
                vr.fit.p_values = vr.fit.coefficients;
                vr.fit.estimable.assign(3, false);
                vr.fit.message = err.what();
                vr.classification.variant = v;
                vr.classification.alpha = options.alpha;
                vr.classification.reason = err.what();
                report.warnings.push_back("experiment '" + experiment + "' " + std::string(to_string(v)) + ": " +
                                          err.what());
            }
            vr.classification.experiment = experiment;
            if (!vr.fit.converged) {
                report.convergence_failure = true;
                report.warnings.push_back("experiment '" + experiment + "' " + std::string(to_string(v)) +
                                          ": fit not converged (" + vr.fit.message + ")");
            }
            ea.variants.push_back(std::move(vr));
        }
        report.experiments.push_back(std::move(ea));
    }

    std::vector<DerivedRow> sorted;
    for (const auto& [experiment, exp_rows] : by_experiment) sorted.insert(sorted.end(), exp_rows.begin(), exp_rows.end());
    report.splits = split_sample_coefficients(sorted, report.warnings);

    const auto medians = subject_medians(sorted);
    report.threshold_base = options.base_experiment.empty() && !by_experiment.empty() ? by_experiment.begin()->first
                                                                                       : options.base_experiment;
    try {
        report.thresholds = compare_thresholds(medians, report.threshold_base);
    } catch (const std::invalid_argument& err) {
        report.warnings.push_back(std::string("threshold comparison skipped: ") + err.what());
    }
    return report;
}

std::string coefficients_csv(const AnalysisReport& report) {
    std::ostringstream out;
    out << "experiment,variant,estimator,parameter,term,coef,se,p,stars,estimable,n_obs,n_subjects,"
           "dropped_subjects,converged,score_inf_norm,message\n";
    for (const auto& ea : report.experiments) {
        for (const auto& vr : ea.variants) {
            const auto& f = vr.fit;
            const std::string tail = ',' + std::to_string(f.n_obs) + ',' + std::to_string(f.n_subjects) + ',' +
                                     std::to_string(f.dropped_subjects) + ',' + bool_field(f.converged) + ',' +
                                     format_real(f.score_inf_norm) + ',' + csv_text(f.message) + '\n';
            for (std::size_t j = 0; j < 3; ++j) {
                const auto jj = static_cast<Eigen::Index>(j);
                out << ea.experiment << ',' << to_string(vr.variant) << ',' << to_string(f.estimator) << ','
                    << kParameters[j] << ',' << (j < f.terms.size() ? f.terms[j] : "") << ','
                    << format_real(f.coefficients(jj)) << ',' << format_real(f.standard_errors(jj)) << ','
                    << format_real(f.p_values(jj)) << ',' << stars(f.p_values(jj)) << ','
                    << bool_field(f.estimable[j]) << tail;
            }
            if (const auto& combo = vr.classification.evidence.combo) {
                out << ea.experiment << ',' << to_string(vr.variant) << ',' << to_string(f.estimator)
                    << ",gamma+delta,wald," << evidence_fields(*combo) << ',' << stars(combo->p) << ",1" << tail;
            }
        }
    }
    return out.str();
}

std::string classification_csv(const AnalysisReport& report) {
    std::ostringstream out;
    out << "experiment,variant,estimator,beta,beta_se,beta_p,gamma,gamma_se,gamma_p,delta,delta_se,delta_p,"
           "combo,combo_se,combo_p,n_obs,ada_slope,ada_ci_low,ada_ci_high,ada_slope_flag,alpha,verdict,"
           "z_location,reason\n";
    for (const auto& ea : report.experiments) {
        for (const auto& vr : ea.variants) {
            const auto& c = vr.classification;
            const auto& e = c.evidence;
            out << ea.experiment << ',' << to_string(vr.variant) << ',' << to_string(vr.fit.estimator) << ','
                << evidence_fields(e.beta) << ',' << evidence_fields(e.gamma) << ',' << evidence_fields(e.delta)
                << ',' << (e.combo ? evidence_fields(*e.combo) : std::string("NA,NA,NA")) << ',' << vr.fit.n_obs
                << ',';
            if (ea.ada) {
                out << format_real(ea.ada->slope) << ',' << format_real(ea.ada->ci_low) << ','
                    << format_real(ea.ada->ci_high);
            } else {
                out << "NA,NA,NA";
            }
            out << ',' << bool_field(c.ada_slope_flag) << ',' << format_real(c.alpha) << ',' << to_string(c.verdict)
                << ',' << to_string(c.z_location) << ',' << csv_text(c.reason) << '\n';
        }
    }
    return out.str();
}

std::string split_coefficients_csv(const AnalysisReport& report) {
    std::ostringstream out;
    out << "experiment,split,gamma,se,p,mean_abs_e,n_obs,converged\n";
    for (const auto& s : report.splits) {
        out << s.experiment << ',' << to_string(s.split) << ',' << format_real(s.gamma) << ',' << format_real(s.se)
            << ',' << format_real(s.p) << ',' << format_real(s.mean_abs_error) << ',' << s.n_obs << ','
            << bool_field(s.converged) << '\n';
    }
    return out.str();
}

std::string thresholds_csv(const AnalysisReport& report) {
    std::ostringstream out;
    out << "term,coef,se,p,stars,n_subjects\n";
    if (report.thresholds) {
        const auto& f = *report.thresholds;
        for (std::size_t j = 0; j < f.terms.size(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            out << f.terms[j] << ',' << format_real(f.coefficients(jj)) << ',' << format_real(f.standard_errors(jj))
                << ',' << format_real(f.p_values(jj)) << ',' << stars(f.p_values(jj)) << ',' << f.n_obs << '\n';
        }
    }
    return out.str();
}

std::string summary_text(const AnalysisReport& report, const AnalysisOptions& options) {
    std::ostringstream out;
    out << "alpha = " << format_real(options.alpha) << ", huber tuning = " << format_real(options.huber_tuning)
        << "\n\n";
    for (const auto& ea : report.experiments) {
        out << "experiment " << ea.experiment << " (" << ea.n_rows << " rows)\n";
        if (ea.ada) {
            out << "  revision slope " << format_real(ea.ada->slope) << " [" << format_real(ea.ada->ci_low) << ", "
                << format_real(ea.ada->ci_high) << "]" << (ea.ada->inside_unit_interval ? " inside (0, 1)" : "")
                << '\n';
        }
        for (const auto& vr : ea.variants) {
            const auto& c = vr.classification;
            out << "  " << to_string(vr.variant) << ": " << to_string(c.verdict);
            if (c.z_location != ZLocation::NotApplicable) out << " (" << to_string(c.z_location) << ")";
            out << "  gamma " << format_real(c.evidence.gamma.value) << stars(c.evidence.gamma.p) << "  delta "
                << format_real(c.evidence.delta.value) << stars(c.evidence.delta.p);
            if (!c.reason.empty()) out << "  [" << c.reason << "]";
            out << '\n';
        }
    }
    if (report.thresholds) {
        out << "\nsubject median |e| against " << report.threshold_base << ":\n";
        const auto& f = *report.thresholds;
        for (std::size_t j = 0; j < f.terms.size(); ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            out << "  " << f.terms[j] << " " << format_real(f.coefficients(jj)) << " (" << format_real(f.standard_errors(jj))
                << ")" << stars(f.p_values(jj)) << '\n';
        }
    }
    if (!report.warnings.empty()) {
        out << "\nwarnings:\n";
        for (const auto& w : report.warnings) out << "  " << w << '\n';
    }
    return out.str();
}

std::string metadata_json(const RunConfig& config, const SimulationOutput& sim) {
    nlohmann::ordered_json j;
    j["seed"] = config.seed;
    j["alpha"] = config.alpha;
    j["huber_tuning"] = config.huber_tuning;
    auto& variants = j["variants"] = nlohmann::ordered_json::array();
    for (Variant v : config.variants) variants.push_back(std::string(to_string(v)));
    auto& markets = j["markets"] = nlohmann::ordered_json::array();
    for (const auto& m : sim.markets) {
        nlohmann::ordered_json mj;
        mj["block"] = m.block;
        mj["experiment"] = m.experiment;
        mj["treatment"] = m.config.treatment;
        mj["market_id"] = m.market_id;
        mj["seed"] = m.metadata.seed;
        mj["horizon"] = m.config.horizon;
        mj["feedback"] = std::string(to_string(m.config.map.kind));
        mj["price_noise_sd"] = m.config.map.noise_sd;
        mj["clamped_forecasts"] = m.metadata.clamped_forecasts;
        auto& agents = mj["agents"] = nlohmann::ordered_json::array();
        for (std::size_t i = 0; i < m.metadata.subject_ids.size(); ++i) {
            const auto& spec = m.config.agents[i];
            agents.push_back({{"subject_id", m.metadata.subject_ids[i]},
                              {"rule", std::string(to_string(spec.rule))},
                              {"gain_init", spec.gain_init},
                              {"meta_rate", spec.meta_rate},
                              {"threshold", spec.threshold},
                              {"forecast_noise_sd", spec.forecast_noise_sd},
                              {"initial_forecast", spec.initial_forecast}});
        }
        markets.push_back(std::move(mj));
    }
    return j.dump(2) + "\n";
}

std::string panel_csv(std::span<const PanelObservation> panel) {
    std::ostringstream out;
    write_panel(out, panel);
    return out.str();
}

std::string derived_csv(std::span<const DerivedRow> rows) {
    std::ostringstream out;
    write_derived(out, rows);
    return out.str();
}

std::vector<ReplayResult> replay(std::span<const PublishedRow> rows, double alpha) {
    std::vector<ReplayResult> out;
    for (const auto& row : rows) {
        ReplayResult r;
        r.row = row;
        // printed tables never report the revision slope
        r.classification = classify(row.variant, row.evidence, false, alpha);
        r.classification.experiment = row.table + ":" + row.model;
        r.verdict_matches = !row.printed_verdict || *row.printed_verdict == r.classification.verdict;
        r.z_matches = !row.printed_z_location || *row.printed_z_location == r.classification.z_location;
        out.push_back(std::move(r));
    }
    return out;
}

std::string replay_csv(std::span<const ReplayResult> results) {
    std::ostringstream out;
    out << "table,model,variant,gamma_p,delta_p,combo,combo_p,verdict,printed_verdict,verdict_match,z_location,"
           "printed_z_location,z_match,reason\n";
    for (const auto& r : results) {
        const auto& e = r.row.evidence;
        out << r.row.table << ',' << r.row.model << ',' << to_string(r.row.variant) << ',' << format_real(e.gamma.p)
            << ',' << format_real(e.delta.p) << ',' << (e.combo ? format_real(e.combo->value) : "NA") << ','
            << (e.combo ? format_real(e.combo->p) : "NA") << ',' << to_string(r.classification.verdict) << ','
            << (r.row.printed_verdict ? std::string(to_string(*r.row.printed_verdict)) : "NA") << ','
            << bool_field(r.verdict_matches) << ',' << to_string(r.classification.z_location) << ','
            << (r.row.printed_z_location ? std::string(to_string(*r.row.printed_z_location)) : "NA") << ','
            << bool_field(r.z_matches) << ',' << csv_text(r.classification.reason) << '\n';
    }
    return out.str();
}

PipelineOutput run_pipeline(const RunConfig& config, const std::filesystem::path& out_dir) {
    PipelineOutput out;
    out.simulation = simulate(config);
    // analyse the panel exactly as written, so that fitting panel.csv later reproduces every output
    const std::string panel_text = panel_csv(out.simulation.panel);
    std::istringstream written(panel_text);
    const auto rows = derive_panel(read_panel(written, "panel.csv"));
    const auto options = analysis_options(config);
    out.report = analyze(rows, options);

    const std::pair<const char*, std::string> files[] = {
        {"panel.csv", panel_text},
        {"derived.csv", derived_csv(rows)},
        {"coefficients.csv", coefficients_csv(out.report)},
        {"classification.csv", classification_csv(out.report)},
        {"split_coefficients.csv", split_coefficients_csv(out.report)},
        {"thresholds.csv", thresholds_csv(out.report)},
        {"summary.txt", summary_text(out.report, options)},
        {"metadata.json", metadata_json(config, out.simulation)},
    };
    for (const auto& [name, content] : files) {
        const auto path = out_dir / name;
        write_text_file(path, content);
        out.files.push_back(path);
    }
    return out;
}

}  // namespace ltf
