#ifndef LTF_PANEL_HPP
#define LTF_PANEL_HPP

#include <string>
#include <tuple>

namespace ltf {

/// One submitted forecast and the price it turned out to face.
struct PanelObservation {
    std::string experiment;
    std::string treatment;
    std::string market_id;
    std::string subject_id;
    int period = 1;
    double forecast = 0.0;
    double price = 0.0;

    auto subject_key() const { return std::tie(experiment, treatment, market_id, subject_id); }

    friend bool operator==(const PanelObservation&, const PanelObservation&) = default;
};

}  // namespace ltf

#endif  // LTF_PANEL_HPP
