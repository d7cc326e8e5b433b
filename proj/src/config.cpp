#include "ltf/config.hpp"

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fstream>
#include <set>
#include <stdexcept>
#include <type_traits>

#include "ltf/csv_io.hpp"

namespace ltf {

namespace {

namespace pt = boost::property_tree;

std::string trimmed(std::string s) {
    boost::algorithm::trim(s);
    return s;
}

/// Typed access to one INI section that rejects unknown keys.
class Section {
public:
    Section(std::string name, const pt::ptree& tree) : name_(std::move(name)), tree_(tree) {}

    bool has(const std::string& key) {
        used_.insert(key);
        return tree_.find(key) != tree_.not_found();
    }

    std::string text(const std::string& key, const std::string& fallback) { return has(key) ? raw(key) : fallback; }

    double real(const std::string& key, double fallback) {
        if (!has(key)) return fallback;
        return convert(key, [](const std::string& s) { return parse_real(s); });
    }

    int integer(const std::string& key, int fallback) {
        if (!has(key)) return fallback;
        return convert(key, [](const std::string& s) { return parse_int(s); });
    }

    std::uint64_t unsigned64(const std::string& key, std::uint64_t fallback) {
        if (!has(key)) return fallback;
        return convert(key, [](const std::string& s) {
            if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
                throw std::invalid_argument("'" + s + "' is not a non-negative integer");
            return static_cast<std::uint64_t>(std::stoull(s));
        });
    }

    template <typename F>
    std::invoke_result_t<F&, const std::string&> convert(const std::string& key, F&& f) {
        try {
            if (!has(key)) throw std::invalid_argument("required key is missing");
            return f(raw(key));
        } catch (const std::exception& err) {
            throw std::invalid_argument("[" + name_ + "] " + key + ": " + err.what());
        }
    }

    void reject_unknown() const {
        for (const auto& [key, value] : tree_) {
            if (!used_.contains(key)) throw std::invalid_argument("[" + name_ + "] unknown key '" + key + "'");
        }
    }

    const std::string& name() const { return name_; }

private:
    /// Value with any trailing "; comment" or "# comment" removed.
    std::string raw(const std::string& key) const {
        std::string v = tree_.get<std::string>(pt::ptree::path_type(key, '\0'));
        const auto cut = v.find_first_of(";#");
        if (cut != std::string::npos) v.erase(cut);
        return trimmed(v);
    }

    std::string name_;
    const pt::ptree& tree_;
    std::set<std::string> used_;
};

MarketBlock parse_market(Section& s, const std::string& suffix) {
    MarketBlock m;
    m.name = suffix;
    m.experiment = s.text("experiment", suffix);
    m.treatment = s.text("treatment", m.treatment);
    m.replications = s.integer("replications", m.replications);
    m.horizon = s.integer("horizon", m.horizon);

    const auto kind = s.convert("feedback", [](const std::string& t) { return parse_feedback_kind(t); });
    const double noise = s.real("price_noise_sd", 1.0);
    if (kind == FeedbackKind::AssetPricing) {
        m.map = asset_pricing_map(s.real("r", 0.05), s.real("d", 3.3), noise);
        if (s.has("lambda") || s.has("fundamental") || s.has("schedule"))
            throw std::invalid_argument("[" + s.name() + "] asset-pricing takes r and d, not lambda/fundamental/schedule");
    } else {
        const double sign = kind == FeedbackKind::LinearPositive ? 1.0 : -1.0;
        m.map.kind = kind;
        m.map.lambda = s.real("lambda", sign / 1.05);
        m.map.noise_sd = noise;
        const bool has_f = s.has("fundamental");
        const bool has_schedule = s.has("schedule");
        if (has_f == has_schedule)
            throw std::invalid_argument("[" + s.name() + "] linear feedback needs exactly one of fundamental, schedule");
        if (has_f) {
            m.map.schedule = {{1, m.horizon, s.real("fundamental", 0.0)}};
        } else {
            m.map.schedule = s.convert("schedule", [](const std::string& t) { return parse_schedule(t); });
        }
        if (s.has("r") || s.has("d")) throw std::invalid_argument("[" + s.name() + "] r and d apply to asset-pricing only");
    }

    auto& p = m.population;
    p.rule = s.convert("rule", [](const std::string& t) { return parse_rule(t); });
    p.count = s.integer("agents", p.count);
    p.gain_init = s.real("gain_init", p.gain_init);
    p.meta_rate = s.real("meta_rate", p.rule == Rule::ADA ? 0.0 : p.meta_rate);
    p.threshold_low = s.real("threshold_low", p.threshold_low);
    p.threshold_high = s.real("threshold_high", p.threshold_high);
    p.forecast_noise_sd = s.real("forecast_noise_sd", p.forecast_noise_sd);
    if (s.has("initial_forecast")) p.initial_forecast = s.real("initial_forecast", 50.0);
    s.reject_unknown();
    return m;
}

}  // namespace

std::vector<Variant> parse_variant_list(const std::string& text) {
    const std::string t = trimmed(text);
    if (t == "all") return {std::begin(kAllVariants), std::end(kAllVariants)};
    std::vector<std::string> parts;
    boost::algorithm::split(parts, t, boost::algorithm::is_any_of(","));
    std::vector<Variant> out;
    for (auto& part : parts) {
        const Variant v = parse_variant(trimmed(part));
        if (std::find(out.begin(), out.end(), v) != out.end())
            throw std::invalid_argument("variant '" + trimmed(part) + "' listed twice");
        out.push_back(v);
    }
    return out;
}

std::vector<ScheduleSegment> parse_schedule(const std::string& text) {
    std::vector<std::string> parts;
    boost::algorithm::split(parts, text, boost::algorithm::is_any_of(","));
    std::vector<ScheduleSegment> out;
    for (auto& raw : parts) {
        const std::string part = trimmed(raw);
        const auto dash = part.find('-');
        const auto colon = part.find(':');
        if (dash == std::string::npos || colon == std::string::npos || dash > colon)
            throw std::invalid_argument("schedule segment '" + part + "' is not first-last:value");
        ScheduleSegment seg;
        seg.first = parse_int(trimmed(part.substr(0, dash)));
        seg.last = parse_int(trimmed(part.substr(dash + 1, colon - dash - 1)));
        seg.value = parse_real(trimmed(part.substr(colon + 1)));
        out.push_back(seg);
    }
    return out;
}

RunConfig parse_config(std::istream& in, const std::string& source) {
    pt::ptree tree;
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& err) {
        throw std::invalid_argument(source + ": " + err.what());
    }

    RunConfig config;
    bool seen_run = false;
    for (const auto& [name, section] : tree) {
        if (section.empty() && !section.data().empty())
            throw std::invalid_argument(source + ": key '" + name + "' outside any section");
        try {
            if (name == "run") {
                seen_run = true;
                Section s(name, section);
                config.seed = s.unsigned64("seed", config.seed);
                config.alpha = s.real("alpha", config.alpha);
                config.huber_tuning = s.real("huber_tuning", config.huber_tuning);
                if (s.has("variants"))
                    config.variants = s.convert("variants", [](const std::string& t) { return parse_variant_list(t); });
                config.base_experiment = s.text("base_experiment", "");
                s.reject_unknown();
            } else if (boost::algorithm::starts_with(name, "market.") && name.size() > 7) {
                Section s(name, section);
                config.markets.push_back(parse_market(s, name.substr(7)));
            } else {
                throw std::invalid_argument("unknown section [" + name + "]");
            }
        } catch (const std::invalid_argument& err) {
            throw std::invalid_argument(source + ": " + err.what());
        }
    }
    if (!seen_run) throw std::invalid_argument(source + ": missing [run] section");
    return config;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open config '" + path.string() + "'");
    return parse_config(in, path.string());
}

void validate(const RunConfig& config) {
    if (!(config.alpha > 0.0 && config.alpha < 1.0)) throw std::invalid_argument("alpha must lie in (0, 1)");
    if (!(config.huber_tuning > 0.0)) throw std::invalid_argument("huber_tuning must be > 0");
    if (config.variants.empty()) throw std::invalid_argument("at least one variant is required");
    std::set<std::string> experiments;
    for (const auto& m : config.markets) {
        const std::string where = "[market." + m.name + "] ";
        if (m.replications < 1) throw std::invalid_argument(where + "replications must be >= 1");
        if (m.population.count < 1) throw std::invalid_argument(where + "agents must be >= 1");
        if (m.population.rule == Rule::RMBL &&
            !(m.population.threshold_low > 0.0 && m.population.threshold_low <= m.population.threshold_high))
            throw std::invalid_argument(where + "need 0 < threshold_low <= threshold_high");
        try {
            validate(m.map, m.horizon);
        } catch (const std::invalid_argument& err) {
            throw std::invalid_argument(where + err.what());
        }
        experiments.insert(m.experiment);
    }
    // without market blocks the base experiment refers to an ingested panel
    if (!config.markets.empty() && !config.base_experiment.empty() && !experiments.contains(config.base_experiment))
        throw std::invalid_argument("base_experiment '" + config.base_experiment + "' names no market block");
}

}  // namespace ltf
