// Run configuration: an INI file with a [run] section and one [market.<name>]
// section per simulated experiment block.
//
//   [run]
//   seed = 20261014
//   alpha = 0.05
//   huber_tuning = 1.345
//   variants = BinaryContinuous, BinaryDiscrete      ; or "all"
//   base_experiment = rmbl_pos                       ; threshold comparison
//
//   [market.rmbl_pos]
//   experiment = rmbl_pos          ; default: the section suffix
//   treatment = positive
//   replications = 20              ; markets in this block
//   horizon = 50
//   feedback = linear-positive     ; asset-pricing | linear-positive | linear-negative
//   lambda = 0.952380952           ; linear maps, default +-1/1.05
//   fundamental = 66               ; linear maps: constant fundamental ...
//   schedule = 1-20:56, 21-43:41   ; ... or piecewise
//   r = 0.05                       ; asset-pricing map
//   d = 3.3
//   price_noise_sd = 1
//   rule = RMBL                    ; ADA | RMBL | IDBD | SAC | LeastSquares | Fundamentalist
//   agents = 6
//   gain_init = 0.5
//   meta_rate = 0.1
//   threshold_low = 0.25           ; RMBL thresholds are uniform on [low, high]
//   threshold_high = 4
//   forecast_noise_sd = 0.25
//   initial_forecast = 50          ; default: uniform on [0, 100]
#ifndef LTF_CONFIG_HPP
#define LTF_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "ltf/classifier.hpp"
#include "ltf/market_sim.hpp"
#include "ltf/panel_econometrics.hpp"

namespace ltf {

struct MarketBlock {
    std::string name;
    std::string experiment;
    std::string treatment = "base";
    int replications = 1;
    int horizon = 50;
    FeedbackMap map;
    PopulationSpec population;
};

struct RunConfig {
    std::vector<MarketBlock> markets;
    std::uint64_t seed = 0;
    double alpha = 0.05;
    double huber_tuning = kDefaultHuberTuning;
    std::vector<Variant> variants{std::begin(kAllVariants), std::end(kAllVariants)};
    std::string base_experiment;  // empty: the first experiment in name order
};

/// Throws std::invalid_argument naming the offending section and key.
RunConfig parse_config(std::istream& in, const std::string& source = "<stream>");
RunConfig load_config(const std::filesystem::path& path);

void validate(const RunConfig& config);

std::vector<Variant> parse_variant_list(const std::string& text);

/// "1-20:56, 21-43:41" -> segments.
std::vector<ScheduleSegment> parse_schedule(const std::string& text);

}  // namespace ltf

#endif  // LTF_CONFIG_HPP
