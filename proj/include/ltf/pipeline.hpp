// Orchestration: simulate -> derive -> estimate -> classify -> report.
#ifndef LTF_PIPELINE_HPP
#define LTF_PIPELINE_HPP

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ltf/classifier.hpp"
#include "ltf/config.hpp"
#include "ltf/csv_io.hpp"
#include "ltf/gain_extraction.hpp"
#include "ltf/market_sim.hpp"
#include "ltf/panel_econometrics.hpp"

namespace ltf {

struct SimulatedMarket {
    std::string block;
    std::string experiment;
    std::string market_id;
    MarketConfig config;
    RunMetadata metadata;
};

struct SimulationOutput {
    std::vector<PanelObservation> panel;
    std::vector<double> internal_gain;  // aligned with panel
    std::vector<SimulatedMarket> markets;
};

/// Market k of the whole config (counting blocks in file order) runs on
/// derive_seed(config.seed, k); agent draws use a second derived stream.
SimulationOutput simulate(const RunConfig& config);

struct AnalysisOptions {
    double alpha = 0.05;
    double huber_tuning = kDefaultHuberTuning;
    std::vector<Variant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
    std::string base_experiment;
};

AnalysisOptions analysis_options(const RunConfig& config);

/// Estimator used for a variant: conditional logit (with pooled fallback),
/// within OLS, or Huber M.
FitResult fit_variant(Variant variant, const RegressionData& data, double huber_tuning);

struct VariantResult {
    Variant variant = Variant::BinaryContinuous;
    FitResult fit;
    Classification classification;
};

struct ExperimentAnalysis {
    std::string experiment;
    long n_rows = 0;
    std::optional<AdaSlopeResult> ada;
    std::vector<VariantResult> variants;
};

struct AnalysisReport {
    std::vector<ExperimentAnalysis> experiments;
    std::vector<SplitCoefficient> splits;
    std::optional<FitResult> thresholds;
    std::string threshold_base;
    std::vector<std::string> warnings;
    bool convergence_failure = false;
};

/// Runs every requested variant per experiment. Experiments are processed in
/// name order, so the report does not depend on the row order of the input.
AnalysisReport analyze(std::span<const DerivedRow> rows, const AnalysisOptions& options);

std::string coefficients_csv(const AnalysisReport& report);
std::string classification_csv(const AnalysisReport& report);
std::string split_coefficients_csv(const AnalysisReport& report);
std::string thresholds_csv(const AnalysisReport& report);
std::string summary_text(const AnalysisReport& report, const AnalysisOptions& options);
std::string metadata_json(const RunConfig& config, const SimulationOutput& sim);
std::string panel_csv(std::span<const PanelObservation> panel);
std::string derived_csv(std::span<const DerivedRow> rows);

struct ReplayResult {
    PublishedRow row;
    Classification classification;
    bool verdict_matches = true;
    bool z_matches = true;
};

std::vector<ReplayResult> replay(std::span<const PublishedRow> rows, double alpha);
std::string replay_csv(std::span<const ReplayResult> results);

struct PipelineOutput {
    SimulationOutput simulation;
    AnalysisReport report;
    std::vector<std::filesystem::path> files;
};

/// Full chain; writes panel.csv, derived.csv, coefficients.csv,
/// classification.csv, split_coefficients.csv, thresholds.csv, summary.txt and
/// metadata.json under `out_dir`.
PipelineOutput run_pipeline(const RunConfig& config, const std::filesystem::path& out_dir);

}  // namespace ltf

#endif  // LTF_PIPELINE_HPP
