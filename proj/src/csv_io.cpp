#include "ltf/csv_io.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <tuple>

namespace ltf {

namespace {

void check_identifier(std::string_view id, std::string_view what) {
    if (id.empty()) throw std::invalid_argument(std::string(what) + " must not be empty");
    if (id.find_first_of(",\"\r\n") != std::string_view::npos)
        throw std::invalid_argument(std::string(what) + " '" + std::string(id) + "' contains a CSV delimiter");
}

bool next_line(std::istream& in, std::string& line) {
    if (!std::getline(in, line)) return false;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
}

std::ifstream open_input(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
    return in;
}

std::optional<double> optional_real(std::string_view text) {
    const double v = parse_real(text);
    if (std::isnan(v)) return std::nullopt;
    return v;
}

}  // namespace

CsvError::CsvError(const std::string& source, std::size_t line, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

std::string format_real(double value) {
    if (std::isnan(value)) return "NA";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.9g", value);
    return buf;
}

std::string format_real(std::optional<double> value) {
    return value ? format_real(*value) : std::string("NA");
}

std::string format_int(std::optional<int> value) { return value ? std::to_string(*value) : std::string("NA"); }

double parse_real(std::string_view text) {
    if (text == "NA") return std::numeric_limits<double>::quiet_NaN();
    double v = 0.0;
    const char* first = text.data();
    const char* last = text.data() + text.size();
    if (first != last && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, v);
    if (text.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
        throw std::invalid_argument("'" + std::string(text) + "' is not a finite number");
    return v;
}

int parse_int(std::string_view text) {
    int v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
        throw std::invalid_argument("'" + std::string(text) + "' is not an integer");
    return v;
}

std::vector<std::string> split_fields(std::string_view line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (true) {
        const auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            out.emplace_back(line.substr(start));
            return out;
        }
        out.emplace_back(line.substr(start, comma - start));
        start = comma + 1;
    }
}

std::vector<PanelObservation> read_panel(std::istream& in, const std::string& source) {
    std::string line;
    if (!next_line(in, line)) throw CsvError(source, 1, "empty file, expected header");
    const std::string derived_header = std::string(kPanelHeader) + "," + std::string(kDerivedColumns);
    std::size_t width;
    if (line == kPanelHeader) {
        width = 7;
    } else if (line == derived_header) {
        width = 14;
    } else {
        throw CsvError(source, 1, "header must be '" + std::string(kPanelHeader) + "'");
    }

    std::vector<PanelObservation> panel;
    std::set<std::tuple<std::string, std::string, std::string, std::string, int>> seen;
    std::size_t line_no = 1;
    while (next_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != width)
            throw CsvError(source, line_no,
                           "expected " + std::to_string(width) + " fields, found " + std::to_string(f.size()));
        PanelObservation o;
        try {
            check_identifier(f[0], "experiment");
            check_identifier(f[1], "treatment");
            check_identifier(f[2], "market_id");
            check_identifier(f[3], "subject_id");
            o.experiment = f[0];
            o.treatment = f[1];
            o.market_id = f[2];
            o.subject_id = f[3];
            o.period = parse_int(f[4]);
            if (o.period < 1) throw std::invalid_argument("period must be >= 1");
            o.forecast = parse_real(f[5]);
            o.price = parse_real(f[6]);
        } catch (const std::invalid_argument& err) {
            throw CsvError(source, line_no, err.what());
        }
        if (!seen.emplace(o.experiment, o.treatment, o.market_id, o.subject_id, o.period).second) {
            throw CsvError(source, line_no,
                           "duplicate observation for subject '" + o.subject_id + "' in market '" + o.market_id +
                               "' at period " + std::to_string(o.period));
        }
        panel.push_back(std::move(o));
    }
    return panel;
}

std::vector<PanelObservation> ingest_panel(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_panel(in, path.string());
}

void write_panel(std::ostream& out, std::span<const PanelObservation> panel) {
    out << kPanelHeader << '\n';
    for (const auto& o : panel) {
        check_identifier(o.experiment, "experiment");
        check_identifier(o.treatment, "treatment");
        check_identifier(o.market_id, "market_id");
        check_identifier(o.subject_id, "subject_id");
        out << o.experiment << ',' << o.treatment << ',' << o.market_id << ',' << o.subject_id << ',' << o.period
            << ',' << format_real(o.forecast) << ',' << format_real(o.price) << '\n';
    }
}

void write_derived(std::ostream& out, std::span<const DerivedRow> rows) {
    out << kPanelHeader << ',' << kDerivedColumns << '\n';
    for (const auto& r : rows) {
        const auto& o = r.obs;
        const auto& d = r.derived;
        const bool observed = std::isfinite(d.e);
        out << o.experiment << ',' << o.treatment << ',' << o.market_id << ',' << o.subject_id << ',' << o.period
            << ',' << format_real(o.forecast) << ',' << format_real(o.price) << ',' << format_real(d.e) << ','
            << format_real(d.abs_e) << ',' << format_real(d.gain) << ',' << format_real(d.delta_gain) << ','
            << format_int(d.y) << ',' << format_int(d.r) << ','
            << (observed ? std::to_string(d.se) : std::string("NA")) << '\n';
    }
}

std::vector<PublishedRow> read_published(std::istream& in, const std::string& source) {
    std::string line;
    if (!next_line(in, line) || line != kPublishedHeader)
        throw CsvError(source, 1, "header must be '" + std::string(kPublishedHeader) + "'");
    std::vector<PublishedRow> rows;
    std::size_t line_no = 1;
    while (next_line(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto f = split_fields(line);
        if (f.size() != 17)
            throw CsvError(source, line_no, "expected 17 fields, found " + std::to_string(f.size()));
        try {
            PublishedRow row;
            row.table = f[0];
            row.model = f[1];
            row.variant = parse_variant(f[2]);
            auto coef = [&](std::size_t at) {
                const double v = parse_real(f[at]);
                const double se = parse_real(f[at + 1]);
                if (std::isnan(v) || std::isnan(se)) throw std::invalid_argument("coefficient and se are required");
                if (se < 0.0) throw std::invalid_argument("standard error must be >= 0");
                return printed_coefficient(v, se, parse_int(f[at + 2]));
            };
            row.evidence.beta = coef(3);
            row.evidence.gamma = coef(6);
            row.evidence.delta = coef(9);
            const auto combo = optional_real(f[12]);
            if (combo) {
                const double se = parse_real(f[13]);
                if (std::isnan(se) || se < 0.0) throw std::invalid_argument("combo needs a standard error >= 0");
                row.evidence.combo = printed_coefficient(*combo, se, parse_int(f[14]));
            }
            if (f[15] != "NA") row.printed_verdict = parse_verdict(f[15]);
            if (f[16] != "NA") row.printed_z_location = parse_z_location(f[16]);
            rows.push_back(std::move(row));
        } catch (const std::invalid_argument& err) {
            throw CsvError(source, line_no, err.what());
        }
    }
    return rows;
}

std::vector<PublishedRow> ingest_published(const std::filesystem::path& path) {
    auto in = open_input(path);
    return read_published(in, path.string());
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << content;
    if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

}  // namespace ltf
