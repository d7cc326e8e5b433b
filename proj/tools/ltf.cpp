// Command-line front end: simulate, extract, fit, classify, pipeline, replay.
//
// Exit codes: 0 success (convergence problems are reported as warnings),
// 1 invalid input or configuration, 2 convergence failure with --strict.
#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "ltf/pipeline.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::string input;
    std::string out_dir = "out";
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha;
    std::optional<double> huber_tuning;
    std::vector<std::string> variants;
    bool strict = false;
};

ltf::RunConfig load(const Options& o) {
    ltf::RunConfig config = o.config.empty() ? ltf::RunConfig{} : ltf::load_config(o.config);
    if (o.seed) config.seed = *o.seed;
    if (o.alpha) config.alpha = *o.alpha;
    if (o.huber_tuning) config.huber_tuning = *o.huber_tuning;
    if (!o.variants.empty()) {
        config.variants.clear();
        for (const auto& v : o.variants) {
            for (ltf::Variant parsed : ltf::parse_variant_list(v)) config.variants.push_back(parsed);
        }
    }
    ltf::validate(config);
    return config;
}

void report_warnings(const std::vector<std::string>& warnings) {
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

int finish(const ltf::AnalysisReport& report, const Options& o) {
    report_warnings(report.warnings);
    if (report.convergence_failure && o.strict) {
        std::cerr << "error: at least one fit did not converge (--strict)\n";
        return 2;
    }
    return 0;
}

void write(const fs::path& dir, const std::string& name, const std::string& content) {
    ltf::write_text_file(dir / name, content);
    std::cout << "wrote " << (dir / name).string() << '\n';
}

int run_simulate(const Options& o) {
    const auto config = load(o);
    if (config.markets.empty()) throw std::invalid_argument("config defines no [market.*] sections");
    const auto sim = ltf::simulate(config);
    write(o.out_dir, "panel.csv", ltf::panel_csv(sim.panel));
    write(o.out_dir, "metadata.json", ltf::metadata_json(config, sim));
    return 0;
}

int run_extract(const Options& o) {
    const auto panel = ltf::ingest_panel(o.input);
    write(o.out_dir, "derived.csv", ltf::derived_csv(ltf::derive_panel(panel)));
    return 0;
}

int run_analysis(const Options& o, bool with_classification) {
    const auto config = load(o);
    const auto panel = ltf::ingest_panel(o.input);
    const auto rows = ltf::derive_panel(panel);
    const auto options = ltf::analysis_options(config);
    const auto report = ltf::analyze(rows, options);
    write(o.out_dir, "coefficients.csv", ltf::coefficients_csv(report));
    if (with_classification) {
        write(o.out_dir, "classification.csv", ltf::classification_csv(report));
        write(o.out_dir, "split_coefficients.csv", ltf::split_coefficients_csv(report));
        write(o.out_dir, "thresholds.csv", ltf::thresholds_csv(report));
        write(o.out_dir, "summary.txt", ltf::summary_text(report, options));
    }
    return finish(report, o);
}

int run_pipeline(const Options& o) {
    const auto config = load(o);
    if (config.markets.empty()) throw std::invalid_argument("config defines no [market.*] sections");
    const auto out = ltf::run_pipeline(config, o.out_dir);
    for (const auto& f : out.files) std::cout << "wrote " << f.string() << '\n';
    return finish(out.report, o);
}

int run_replay(const Options& o) {
    const auto config = load(o);
    const auto rows = ltf::ingest_published(o.input);
    const auto results = ltf::replay(rows, config.alpha);
    write(o.out_dir, "replay.csv", ltf::replay_csv(results));
    std::size_t verdicts = 0;
    std::size_t zs = 0;
    for (const auto& r : results) {
        verdicts += r.verdict_matches;
        zs += r.z_matches;
        if (!r.verdict_matches) {
            std::cerr << "warning: " << r.row.table << " model " << r.row.model << " "
                      << ltf::to_string(r.row.variant) << ": printed " << ltf::to_string(*r.row.printed_verdict)
                      << ", rule gives " << ltf::to_string(r.classification.verdict) << '\n';
        }
    }
    std::cout << verdicts << "/" << results.size() << " verdicts and " << zs << "/" << results.size()
              << " threshold locations match the printed tables\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Learning-to-forecast simulation and learning-rule classification"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();
        sub->add_option("--alpha", o.alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
        sub->add_option("--huber-tuning", o.huber_tuning, "Huber tuning constant")->check(CLI::PositiveNumber);
        sub->add_option("--variant", o.variants, "Analysis variant(s), or 'all'");
        sub->add_flag("--strict", o.strict, "Exit nonzero when a fit fails to converge");
    };

    auto* simulate = app.add_subcommand("simulate", "Simulate markets from a config and write panel.csv");
    simulate->add_option("--config", o.config, "INI config")->required()->check(CLI::ExistingFile);
    simulate->add_option("--seed", o.seed, "Override the config seed");
    simulate->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();

    auto* extract = app.add_subcommand("extract", "Write derived variables for a panel CSV");
    extract->add_option("--input", o.input, "Panel CSV")->required()->check(CLI::ExistingFile);
    extract->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();

    auto* fit = app.add_subcommand("fit", "Estimate the learning-speed regressions on a panel CSV");
    auto* classify = app.add_subcommand("classify", "Estimate and classify a panel CSV");
    for (auto* sub : {fit, classify}) {
        sub->add_option("--input", o.input, "Panel CSV")->required()->check(CLI::ExistingFile);
        sub->add_option("--config", o.config, "INI config for [run] settings")->check(CLI::ExistingFile);
        add_common(sub);
    }

    auto* pipeline = app.add_subcommand("pipeline", "Simulate, estimate, classify and report");
    pipeline->add_option("--config", o.config, "INI config")->required()->check(CLI::ExistingFile);
    pipeline->add_option("--seed", o.seed, "Override the config seed");
    add_common(pipeline);

    auto* replay = app.add_subcommand("replay", "Classify coefficients transcribed from published tables");
    replay->add_option("--input", o.input, "Published coefficient CSV")->required()->check(CLI::ExistingFile);
    replay->add_option("--alpha", o.alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
    replay->add_option("--out-dir", o.out_dir, "Output directory")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // help and version requests exit 0; every usage error exits 1
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        if (simulate->parsed()) return run_simulate(o);
        if (extract->parsed()) return run_extract(o);
        if (fit->parsed()) return run_analysis(o, false);
        if (classify->parsed()) return run_analysis(o, true);
        if (pipeline->parsed()) return run_pipeline(o);
        if (replay->parsed()) return run_replay(o);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    }
    return 1;
}
