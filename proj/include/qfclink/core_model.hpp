// Analytic link budget for a frequency-converted single-photon channel:
// conversion efficiency, filter cascade, fiber loss, detected rates, SNR and
// spin-photon Bell-state fidelity.
#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace qfclink {

/// SNR value used when both noise and dark rates vanish.
inline constexpr double kInfiniteSnr = std::numeric_limits<double>::infinity();

inline bool is_infinite_snr(double snr) noexcept { return std::isinf(snr) && snr > 0; }

/// Linear transmittance of an attenuation given in dB.
inline double db_to_transmittance(double loss_db) noexcept { return std::pow(10.0, -loss_db / 10.0); }

inline double transmittance_to_db(double transmittance) {
    if (!(transmittance > 0.0)) throw std::domain_error("transmittance must be positive");
    return -10.0 * std::log10(transmittance);
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

/// Waveguide converter: eta(P) = eta_max * sin^2(L * sqrt(alpha * P)).
struct ConverterParams {
    double waveguide_length_m = 0.02;
    double alpha_qfc_per_w_m2 = 2.87e3;
    double eta_max = 0.1095;

    void validate() const {
        if (!(waveguide_length_m > 0.0)) throw std::invalid_argument("waveguide_length must be > 0");
        if (!(alpha_qfc_per_w_m2 > 0.0)) throw std::invalid_argument("alpha_qfc must be > 0");
        if (!(eta_max >= 0.0 && eta_max <= 1.0)) throw std::invalid_argument("eta_max must lie in [0, 1]");
    }

    /// Pump power of the first efficiency maximum (argument = pi/2).
    double optimal_pump_w() const {
        const double root = std::numbers::pi / (2.0 * waveguide_length_m);
        return root * root / alpha_qfc_per_w_m2;
    }
};

enum class TargetBand { pump, spdc_noise };

inline const char* to_string(TargetBand band) noexcept {
    return band == TargetBand::pump ? "pump" : "spdc_noise";
}

struct BandwidthHz {
    double value;
};
struct BandwidthNm {
    double value;
};

struct FilterStage {
    std::string name;
    double center_wavelength_nm = 0.0;
    std::variant<BandwidthHz, BandwidthNm> bandwidth = BandwidthHz{0.0};
    double insertion_loss_db = 0.0;
    double isolation_db = 0.0;
    TargetBand target_band = TargetBand::spdc_noise;

    void validate() const {
        if (!(insertion_loss_db >= 0.0)) throw std::invalid_argument("filter '" + name + "': insertion_loss_db must be >= 0");
        if (!(isolation_db >= 0.0)) throw std::invalid_argument("filter '" + name + "': isolation_db must be >= 0");
    }
};

struct FiberLink {
    double length_km = 0.0;
    double attenuation_db_per_km = 0.16;

    void validate() const {
        if (!(length_km >= 0.0) || !std::isfinite(length_km)) throw std::invalid_argument("fiber length_km must be >= 0");
        if (!(attenuation_db_per_km >= 0.0) || !std::isfinite(attenuation_db_per_km))
            throw std::invalid_argument("fiber attenuation_db_per_km must be >= 0");
    }
};

struct DetectorModel {
    double efficiency = 0.9;
    double dark_rate_hz = 54.0;

    void validate() const {
        if (!(efficiency >= 0.0 && efficiency <= 1.0)) throw std::invalid_argument("detector efficiency must lie in [0, 1]");
        if (!(dark_rate_hz >= 0.0)) throw std::invalid_argument("detector dark_rate_hz must be >= 0");
    }
};

struct SourceModel {
    double signal_rate_hz = 32.7e3;
    double rep_rate_hz = 1.0e6;
    double pulse_width_s = 300e-9;

    double duty_cycle() const noexcept { return pulse_width_s * rep_rate_hz; }

    void validate() const {
        if (!(signal_rate_hz >= 0.0)) throw std::invalid_argument("signal_rate_hz must be >= 0");
        if (!(rep_rate_hz > 0.0)) throw std::invalid_argument("rep_rate_hz must be > 0");
        if (!(pulse_width_s > 0.0)) throw std::invalid_argument("pulse_width_s must be > 0");
        if (duty_cycle() > 1.0 + 1e-12) throw std::invalid_argument("pulse_width_s * rep_rate_hz exceeds 1");
    }
};

/// SPDC noise at the converter output, either constant or proportional to pump.
class NoiseModel {
public:
    struct FixedRate {
        double rate_hz;
    };
    struct LinearInPump {
        double slope_hz_per_w;
    };

    static NoiseModel fixed(double rate_hz) { return NoiseModel{FixedRate{rate_hz}}; }
    static NoiseModel linear(double slope_hz_per_w) { return NoiseModel{LinearInPump{slope_hz_per_w}}; }

    bool is_linear() const noexcept { return std::holds_alternative<LinearInPump>(mode_); }

    double rate_hz(double pump_w) const noexcept {
        if (const auto* f = std::get_if<FixedRate>(&mode_)) return f->rate_hz;
        return std::get<LinearInPump>(mode_).slope_hz_per_w * pump_w;
    }

    /// Rate or slope, whichever the mode carries.
    double coefficient() const noexcept {
        if (const auto* f = std::get_if<FixedRate>(&mode_)) return f->rate_hz;
        return std::get<LinearInPump>(mode_).slope_hz_per_w;
    }

private:
    explicit NoiseModel(std::variant<FixedRate, LinearInPump> mode) : mode_(mode) {
        if (!(coefficient() >= 0.0)) throw std::invalid_argument("noise rate/slope must be >= 0");
    }
    std::variant<FixedRate, LinearInPump> mode_;
};

/// Conversion-efficiency slot of the budget: a measured fraction or the waveguide curve at a pump point.
struct FixedEfficiency {
    double eta_c;
};
struct PumpedConverter {
    ConverterParams params;
    double pump_w;
};
using EfficiencySpec = std::variant<FixedEfficiency, PumpedConverter>;

struct LinkBudgetResult {
    double eta_c = 0.0;
    double eta_l = 0.0;
    double detected_signal_rate_hz = 0.0;
    double detected_noise_rate_hz = 0.0; // SPDC only, darks excluded
    double dark_rate_hz = 0.0;
    double snr = 0.0;
    double fidelity = 0.25;
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

inline double conversion_efficiency(const ConverterParams& params, double pump_w) {
    if (!(pump_w >= 0.0)) throw std::domain_error("pump power must be >= 0");
    params.validate();
    const double s = std::sin(params.waveguide_length_m * std::sqrt(params.alpha_qfc_per_w_m2 * pump_w));
    return params.eta_max * s * s;
}

inline double fiber_transmittance(const FiberLink& link) {
    link.validate();
    return db_to_transmittance(link.attenuation_db_per_km * link.length_km);
}

inline double cascade_insertion_loss_db(std::span<const FilterStage> stages) {
    double total = 0.0;
    for (const auto& st : stages) {
        st.validate();
        total += st.insertion_loss_db;
    }
    return total;
}

inline double cascade_isolation_db(std::span<const FilterStage> stages, TargetBand band) {
    double total = 0.0;
    for (const auto& st : stages) {
        st.validate();
        if (st.target_band == band) total += st.isolation_db;
    }
    return total;
}

/// F = 1 - 3 / (2 (SNR + 2)); F(inf) = 1.
inline double fidelity_from_snr(double snr) {
    if (std::isnan(snr) || snr < 0.0) throw std::domain_error("SNR must be >= 0");
    if (is_infinite_snr(snr)) return 1.0;
    return 1.0 - 3.0 / (2.0 * (snr + 2.0));
}

inline double resolve_efficiency(const EfficiencySpec& spec) {
    if (const auto* fixed = std::get_if<FixedEfficiency>(&spec)) {
        if (!(fixed->eta_c >= 0.0 && fixed->eta_c <= 1.0)) throw std::invalid_argument("eta_c must lie in [0, 1]");
        return fixed->eta_c;
    }
    const auto& pumped = std::get<PumpedConverter>(spec);
    return conversion_efficiency(pumped.params, pumped.pump_w);
}

/// Pump power seen by the noise model; a fixed efficiency carries no pump.
inline double pump_of(const EfficiencySpec& spec, double fallback_pump_w) noexcept {
    if (const auto* pumped = std::get_if<PumpedConverter>(&spec)) return pumped->pump_w;
    return fallback_pump_w;
}

/// Detected rates, SNR and fidelity.
///
/// Darks enter the denominator unattenuated; SPDC noise is referred to the
/// converter output and sees the same fiber and detector losses as the signal.
/// `pump_w` feeds a linear noise model when the efficiency slot is a fixed fraction.
inline LinkBudgetResult link_budget(const SourceModel& source, const EfficiencySpec& efficiency,
                                    const NoiseModel& noise, const FiberLink& link,
                                    const DetectorModel& detector, double pump_w = 0.0) {
    source.validate();
    detector.validate();
    LinkBudgetResult r;
    r.eta_c = resolve_efficiency(efficiency);
    r.eta_l = fiber_transmittance(link);
    const double path = r.eta_l * detector.efficiency;
    r.detected_signal_rate_hz = source.signal_rate_hz * r.eta_c * path;
    r.detected_noise_rate_hz = noise.rate_hz(pump_of(efficiency, pump_w)) * path;
    r.dark_rate_hz = detector.dark_rate_hz;

    const double background = r.detected_noise_rate_hz + r.dark_rate_hz;
    if (background > 0.0) {
        r.snr = r.detected_signal_rate_hz / background;
        const double denom = 2.0 * r.detected_signal_rate_hz + 4.0 * background;
        r.fidelity = 1.0 - 3.0 * background / denom;
    } else {
        r.snr = kInfiniteSnr;
        r.fidelity = 1.0;
    }
    return r;
}

struct PumpScanRow {
    double pump_w;
    double eta_c;
    double noise_rate_hz;
    double snr;
    double fidelity;
};

struct PumpScan {
    std::vector<PumpScanRow> rows;
    double best_pump_w = 0.0;
    double best_snr = 0.0;
};

/// SNR versus pump power with efficiency from the waveguide curve.
inline PumpScan scan_snr_vs_pump(const SourceModel& source, const ConverterParams& converter,
                                 const NoiseModel& noise, const FiberLink& link,
                                 const DetectorModel& detector, std::span<const double> pump_grid_w) {
    if (pump_grid_w.empty()) throw std::invalid_argument("pump grid is empty");
    PumpScan scan;
    scan.rows.reserve(pump_grid_w.size());
    bool first = true;
    for (double p : pump_grid_w) {
        const auto r = link_budget(source, PumpedConverter{converter, p}, noise, link, detector);
        scan.rows.push_back({p, r.eta_c, noise.rate_hz(p), r.snr, r.fidelity});
        if (first || r.snr > scan.best_snr) {
            scan.best_snr = r.snr;
            scan.best_pump_w = p;
            first = false;
        }
    }
    return scan;
}

struct LengthScanRow {
    double length_km;
    double eta_l;
    double snr;
    double fidelity;
};

struct LengthScan {
    std::vector<LengthScanRow> rows;
    double best_length_km = 0.0;
    double best_fidelity = 0.0;
};

inline LengthScan scan_fidelity_vs_length(const SourceModel& source, const EfficiencySpec& efficiency,
                                          const NoiseModel& noise, FiberLink link,
                                          const DetectorModel& detector, std::span<const double> length_grid_km,
                                          double pump_w = 0.0) {
    if (length_grid_km.empty()) throw std::invalid_argument("length grid is empty");
    LengthScan scan;
    scan.rows.reserve(length_grid_km.size());
    bool first = true;
    for (double l : length_grid_km) {
        link.length_km = l;
        const auto r = link_budget(source, efficiency, noise, link, detector, pump_w);
        scan.rows.push_back({l, r.eta_l, r.snr, r.fidelity});
        if (first || r.fidelity > scan.best_fidelity) {
            scan.best_fidelity = r.fidelity;
            scan.best_length_km = l;
            first = false;
        }
    }
    return scan;
}

/// The four-stage filtering module: DWDM, two FBGs and an ultra-narrow tunable filter.
inline std::vector<FilterStage> reference_filter_cascade() {
    return {
        {"DWDM", 1588.0, BandwidthNm{10.0}, 0.7, 66.3, TargetBand::pump},
        {"FBG1", 1588.3, BandwidthHz{10e9}, 1.2, 46.2, TargetBand::spdc_noise},
        {"FBG2", 1588.3, BandwidthHz{10e9}, 1.1, 36.6, TargetBand::spdc_noise},
        {"UNTF", 1588.3, BandwidthHz{250e6}, 1.4, 14.8, TargetBand::spdc_noise},
    };
}

} // namespace qfclink
