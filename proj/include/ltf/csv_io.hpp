// Flat CSV schemas for panels, derived panels and published coefficient tables.
//
// Reals are written with 9 significant digits, missing values as NA, with LF
// line endings and a header row.
#ifndef LTF_CSV_IO_HPP
#define LTF_CSV_IO_HPP

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ltf/classifier.hpp"
#include "ltf/gain_extraction.hpp"
#include "ltf/panel.hpp"

namespace ltf {

inline constexpr std::string_view kPanelHeader = "experiment,treatment,market_id,subject_id,period,forecast,price";
inline constexpr std::string_view kDerivedColumns = "e,abs_e,G,dG,Y,R,SE";

/// Parse failure tied to a line of an input file.
class CsvError : public std::runtime_error {
public:
    CsvError(const std::string& source, std::size_t line, const std::string& what);
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

std::string format_real(double value);
std::string format_real(std::optional<double> value);
std::string format_int(std::optional<int> value);

/// Strict decimal parse of a finite real; "NA" yields NaN. Anything else throws std::invalid_argument.
double parse_real(std::string_view text);
int parse_int(std::string_view text);

std::vector<std::string> split_fields(std::string_view line);

/// Accepts the panel header, optionally followed by the derived columns
/// (which are ignored and recomputed downstream). Forecast and price may be NA.
std::vector<PanelObservation> read_panel(std::istream& in, const std::string& source = "<stream>");
std::vector<PanelObservation> ingest_panel(const std::filesystem::path& path);

void write_panel(std::ostream& out, std::span<const PanelObservation> panel);
void write_derived(std::ostream& out, std::span<const DerivedRow> rows);

/// One printed column of a published regression table.
struct PublishedRow {
    std::string table;
    std::string model;
    Variant variant = Variant::BinaryContinuous;
    Evidence evidence;  // p-values follow the printed stars
    std::optional<Verdict> printed_verdict;
    std::optional<ZLocation> printed_z_location;
};

inline constexpr std::string_view kPublishedHeader =
    "table,model,variant,beta,beta_se,beta_stars,gamma,gamma_se,gamma_stars,delta,delta_se,delta_stars,"
    "combo,combo_se,combo_stars,printed_verdict,printed_z_location";

std::vector<PublishedRow> read_published(std::istream& in, const std::string& source = "<stream>");
std::vector<PublishedRow> ingest_published(const std::filesystem::path& path);

/// Writes `content` byte-for-byte, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& content);

}  // namespace ltf

#endif  // LTF_CSV_IO_HPP
