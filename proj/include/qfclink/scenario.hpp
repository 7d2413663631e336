// Scenario files: INI-style sections of `key_unit = value` lines.
//
//   [source]      signal_rate_hz, rep_rate_hz, pulse_width_s
//   [converter]   eta_c  |  waveguide_length_m, alpha_qfc_per_w_m2, eta_max ; pump_w
//   [noise]       rate_hz  |  slope_hz_per_w
//   [filter NAME] center_wavelength_nm, bandwidth_hz | bandwidth_nm,
//                 insertion_loss_db, isolation_db, target_band (pump | spdc_noise)
//   [fiber]       length_km, attenuation_db_per_km
//   [detector]    efficiency, dark_rate_hz
//   [gating]      rep_period_ns, signal_offset_ns, signal_width_ns, noise_offset_ns,
//                 noise_width_ns, bin_ns, duration_s, noise_rate_convention (cw | in-gate)
//   [coincidence] window_s, bell_sign (plus | minus)
//   [fit]         data_csv, waveguide_length_m, init_eta_max, init_alpha_qfc_per_w_m2, grid_points
//   [sweep]       axis (pump_w | length_km), values  |  start, stop, points
//   [run]         seed
//
// Parsing is strict: unknown sections or keys, duplicates and malformed
// numbers are errors. source, converter, noise, fiber and detector are required.
#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qfclink/coincidence.hpp"
#include "qfclink/core_model.hpp"
#include "qfclink/montecarlo.hpp"

namespace qfclink {

class ScenarioError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class SweepAxis { pump_w, length_km };

struct SweepSpec {
    SweepAxis axis = SweepAxis::length_km;
    std::vector<double> grid;
};

struct TimetagSettings {
    GateConfig gate;
    double duration_s = 60.0;
    NoiseRateConvention convention = NoiseRateConvention::in_gate;
};

struct CoincidenceSettings {
    double window_s = 1.0;
    BellSign sign = BellSign::plus;
};

struct FitSettings {
    std::string data_csv; // resolved relative to the scenario file by the caller
    std::optional<double> waveguide_length_m;
    std::optional<double> init_eta_max;
    std::optional<double> init_alpha;
    int grid_points = 50;
};

struct Scenario {
    SourceModel source;
    std::optional<double> fixed_eta_c;
    std::optional<ConverterParams> converter;
    double pump_w = 0.0;
    NoiseModel noise = NoiseModel::fixed(0.0);
    std::vector<FilterStage> filters;
    FiberLink fiber;
    DetectorModel detector;
    TimetagSettings timetags;
    CoincidenceSettings coincidence;
    std::optional<FitSettings> fit;
    std::optional<SweepSpec> sweep;
    std::uint64_t seed = 1;

    EfficiencySpec efficiency() const {
        if (fixed_eta_c) return FixedEfficiency{*fixed_eta_c};
        return PumpedConverter{*converter, pump_w};
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

class Section {
public:
    Section(std::string name, std::size_t line) : name_(std::move(name)), line_(line) {}

    void add(std::string key, std::string value, std::size_t line) {
        if (values_.count(key)) throw ScenarioError("line " + std::to_string(line) + ": duplicate key '" + key + "' in [" + name_ + "]");
        values_.emplace(std::move(key), Entry{std::move(value), line});
    }

    bool has(const std::string& key) const { return values_.count(key) != 0; }

    std::optional<std::string> text(const std::string& key) {
        auto it = values_.find(key);
        if (it == values_.end()) return std::nullopt;
        used_.insert(key);
        return it->second.value;
    }

    std::optional<double> number(const std::string& key) {
        auto t = text(key);
        if (!t) return std::nullopt;
        return parse_number(*t, key);
    }

    double require(const std::string& key) {
        auto v = number(key);
        if (!v) throw ScenarioError("[" + name_ + "] missing required key '" + key + "'");
        return *v;
    }

    std::optional<std::int64_t> integer(const std::string& key) {
        auto v = number(key);
        if (!v) return std::nullopt;
        if (std::floor(*v) != *v || std::abs(*v) > 9.0e15) throw ScenarioError(where(key) + ": expected an integer");
        return static_cast<std::int64_t>(*v);
    }

    std::vector<double> list(const std::string& key) {
        std::vector<double> out;
        auto t = text(key);
        if (!t) return out;
        std::string_view rest = *t;
        while (!rest.empty()) {
            const auto comma = rest.find(',');
            out.push_back(parse_number(std::string(trim(rest.substr(0, comma))), key));
            if (comma == std::string_view::npos) break;
            rest = rest.substr(comma + 1);
        }
        return out;
    }

    void check_all_used() const {
        for (const auto& [k, e] : values_)
            if (!used_.count(k)) throw ScenarioError("line " + std::to_string(e.line) + ": unknown key '" + k + "' in [" + name_ + "]");
    }

    const std::string& name() const { return name_; }
    std::size_t line() const { return line_; }

private:
    struct Entry {
        std::string value;
        std::size_t line;
    };

    std::string where(const std::string& key) const {
        auto it = values_.find(key);
        return "line " + std::to_string(it == values_.end() ? line_ : it->second.line) + " [" + name_ + "] " + key;
    }

    double parse_number(const std::string& s, const std::string& key) const {
        double v = 0.0;
        const char* first = s.data();
        const char* last = s.data() + s.size();
        if (!s.empty() && *first == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, last, v);
        if (ec != std::errc() || ptr != last || !std::isfinite(v))
            throw ScenarioError(where(key) + ": not a number: '" + s + "'");
        return v;
    }

    std::string name_;
    std::size_t line_;
    std::map<std::string, Entry> values_;
    std::set<std::string> used_;
};

inline std::vector<double> linear_grid(double start, double stop, std::int64_t points) {
    if (points < 1) throw ScenarioError("[sweep] points must be >= 1");
    std::vector<double> g(static_cast<std::size_t>(points));
    for (std::int64_t i = 0; i < points; ++i)
        g[static_cast<std::size_t>(i)] = points == 1 ? start : start + (stop - start) * static_cast<double>(i) / static_cast<double>(points - 1);
    return g;
}

} // namespace detail

inline Scenario parse_scenario(std::string_view text) {
    using detail::Section;
    using detail::trim;

    std::vector<Section> sections;
    std::set<std::string> seen;
    std::size_t lineno = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view raw = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++lineno;
        if (const auto hash = raw.find_first_of("#;"); hash != std::string_view::npos) raw = raw.substr(0, hash);
        const auto line = trim(raw);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ScenarioError("line " + std::to_string(lineno) + ": malformed section header");
            std::string name(trim(line.substr(1, line.size() - 2)));
            if (name.empty()) throw ScenarioError("line " + std::to_string(lineno) + ": empty section name");
            if (!seen.insert(name).second) throw ScenarioError("line " + std::to_string(lineno) + ": duplicate section [" + name + "]");
            sections.emplace_back(std::move(name), lineno);
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ScenarioError("line " + std::to_string(lineno) + ": expected 'key = value'");
        if (sections.empty()) throw ScenarioError("line " + std::to_string(lineno) + ": key outside of any section");
        std::string key(trim(line.substr(0, eq)));
        std::string value(trim(line.substr(eq + 1)));
        if (key.empty() || value.empty()) throw ScenarioError("line " + std::to_string(lineno) + ": empty key or value");
        sections.back().add(std::move(key), std::move(value), lineno);
    }

    auto find = [&](const std::string& name) -> Section* {
        for (auto& s : sections)
            if (s.name() == name) return &s;
        return nullptr;
    };
    auto required = [&](const std::string& name) -> Section& {
        auto* s = find(name);
        if (!s) throw ScenarioError("missing required section [" + name + "]");
        return *s;
    };

    Scenario sc;
    try {
        {
            auto& s = required("source");
            sc.source.signal_rate_hz = s.require("signal_rate_hz");
            sc.source.rep_rate_hz = s.number("rep_rate_hz").value_or(1e6);
            sc.source.pulse_width_s = s.number("pulse_width_s").value_or(300e-9);
            sc.source.validate();
        }
        {
            auto& s = required("converter");
            const bool has_fixed = s.has("eta_c");
            const bool has_params = s.has("waveguide_length_m") || s.has("alpha_qfc_per_w_m2") || s.has("eta_max");
            if (has_fixed == has_params)
                throw ScenarioError("[converter] needs exactly one of eta_c or (waveguide_length_m, alpha_qfc_per_w_m2, eta_max)");
            if (has_fixed) {
                sc.fixed_eta_c = s.require("eta_c");
                if (!(*sc.fixed_eta_c >= 0.0 && *sc.fixed_eta_c <= 1.0)) throw ScenarioError("[converter] eta_c must lie in [0, 1]");
            } else {
                ConverterParams p;
                p.waveguide_length_m = s.require("waveguide_length_m");
                p.alpha_qfc_per_w_m2 = s.require("alpha_qfc_per_w_m2");
                p.eta_max = s.require("eta_max");
                p.validate();
                sc.converter = p;
            }
            sc.pump_w = s.number("pump_w").value_or(0.0);
            if (!(sc.pump_w >= 0.0)) throw ScenarioError("[converter] pump_w must be >= 0");
        }
        {
            auto& s = required("noise");
            const bool fixed = s.has("rate_hz");
            if (fixed == s.has("slope_hz_per_w")) throw ScenarioError("[noise] needs exactly one of rate_hz or slope_hz_per_w");
            sc.noise = fixed ? NoiseModel::fixed(s.require("rate_hz")) : NoiseModel::linear(s.require("slope_hz_per_w"));
        }
        {
            auto& s = required("fiber");
            sc.fiber.length_km = s.number("length_km").value_or(0.0);
            sc.fiber.attenuation_db_per_km = s.require("attenuation_db_per_km");
            sc.fiber.validate();
        }
        {
            auto& s = required("detector");
            sc.detector.efficiency = s.require("efficiency");
            sc.detector.dark_rate_hz = s.require("dark_rate_hz");
            sc.detector.validate();
        }
        for (auto& s : sections) {
            if (s.name().rfind("filter ", 0) != 0) continue;
            FilterStage st;
            st.name = std::string(trim(std::string_view(s.name()).substr(7)));
            st.center_wavelength_nm = s.number("center_wavelength_nm").value_or(0.0);
            const auto hz = s.number("bandwidth_hz");
            const auto nm = s.number("bandwidth_nm");
            if (hz && nm) throw ScenarioError("[" + s.name() + "] give bandwidth_hz or bandwidth_nm, not both");
            if (hz) st.bandwidth = BandwidthHz{*hz};
            if (nm) st.bandwidth = BandwidthNm{*nm};
            st.insertion_loss_db = s.require("insertion_loss_db");
            st.isolation_db = s.number("isolation_db").value_or(0.0);
            const auto band = s.text("target_band").value_or("spdc_noise");
            if (band == "pump")
                st.target_band = TargetBand::pump;
            else if (band == "spdc_noise")
                st.target_band = TargetBand::spdc_noise;
            else
                throw ScenarioError("[" + s.name() + "] target_band must be pump or spdc_noise");
            st.validate();
            sc.filters.push_back(std::move(st));
        }
        {
            auto& g = sc.timetags.gate;
            g.rep_period_ns = period_ns_from_rate(sc.source.rep_rate_hz);
            const auto pulse_ns = static_cast<std::int64_t>(std::llround(sc.source.pulse_width_s * 1e9));
            g.signal_gate = {0, pulse_ns};
            g.noise_gate = {g.rep_period_ns / 2, pulse_ns};
            g.bin_ns = 10;
            if (auto* s = find("gating")) {
                g.rep_period_ns = s->integer("rep_period_ns").value_or(g.rep_period_ns);
                g.signal_gate.offset_ns = s->integer("signal_offset_ns").value_or(g.signal_gate.offset_ns);
                g.signal_gate.width_ns = s->integer("signal_width_ns").value_or(g.signal_gate.width_ns);
                g.noise_gate.offset_ns = s->integer("noise_offset_ns").value_or(g.rep_period_ns / 2);
                g.noise_gate.width_ns = s->integer("noise_width_ns").value_or(g.signal_gate.width_ns);
                g.bin_ns = s->integer("bin_ns").value_or(g.bin_ns);
                sc.timetags.duration_s = s->number("duration_s").value_or(sc.timetags.duration_s);
                const auto conv = s->text("noise_rate_convention").value_or("in-gate");
                if (conv == "in-gate")
                    sc.timetags.convention = NoiseRateConvention::in_gate;
                else if (conv == "cw")
                    sc.timetags.convention = NoiseRateConvention::cw;
                else
                    throw ScenarioError("[gating] noise_rate_convention must be cw or in-gate");
            }
            g.validate();
            if (g.rep_period_ns % g.bin_ns != 0) throw ScenarioError("[gating] bin_ns must divide rep_period_ns");
            if (!(sc.timetags.duration_s > 0.0)) throw ScenarioError("[gating] duration_s must be > 0");
        }
        if (auto* s = find("coincidence")) {
            sc.coincidence.window_s = s->number("window_s").value_or(sc.coincidence.window_s);
            const auto sign = s->text("bell_sign").value_or("plus");
            if (sign == "plus")
                sc.coincidence.sign = BellSign::plus;
            else if (sign == "minus")
                sc.coincidence.sign = BellSign::minus;
            else
                throw ScenarioError("[coincidence] bell_sign must be plus or minus");
            if (!(sc.coincidence.window_s > 0.0)) throw ScenarioError("[coincidence] window_s must be > 0");
        }
        if (auto* s = find("fit")) {
            FitSettings f;
            f.data_csv = s->text("data_csv").value_or("");
            f.waveguide_length_m = s->number("waveguide_length_m");
            f.init_eta_max = s->number("init_eta_max");
            f.init_alpha = s->number("init_alpha_qfc_per_w_m2");
            f.grid_points = static_cast<int>(s->integer("grid_points").value_or(50));
            if (f.data_csv.empty()) throw ScenarioError("[fit] missing required key 'data_csv'");
            if (f.init_eta_max.has_value() != f.init_alpha.has_value())
                throw ScenarioError("[fit] give both init_eta_max and init_alpha_qfc_per_w_m2 or neither");
            if (f.grid_points < 2) throw ScenarioError("[fit] grid_points must be >= 2");
            sc.fit = f;
        }
        if (auto* s = find("sweep")) {
            SweepSpec sw;
            const auto axis = s->text("axis");
            if (!axis) throw ScenarioError("[sweep] missing required key 'axis'");
            if (*axis == "pump_w")
                sw.axis = SweepAxis::pump_w;
            else if (*axis == "length_km")
                sw.axis = SweepAxis::length_km;
            else
                throw ScenarioError("[sweep] axis must be pump_w or length_km");
            if (s->has("values")) {
                if (s->has("start") || s->has("stop") || s->has("points"))
                    throw ScenarioError("[sweep] give values or start/stop/points, not both");
                sw.grid = s->list("values");
            } else {
                sw.grid = detail::linear_grid(s->require("start"), s->require("stop"), s->integer("points").value_or(0));
            }
            for (double v : sw.grid)
                if (!(v >= 0.0)) throw ScenarioError("[sweep] grid values must be >= 0");
            sc.sweep = std::move(sw);
        }
        if (auto* s = find("run")) {
            const auto seed = s->integer("seed");
            if (seed && *seed < 0) throw ScenarioError("[run] seed must be >= 0");
            if (seed) sc.seed = static_cast<std::uint64_t>(*seed);
        }
    } catch (const ScenarioError&) {
        throw;
    } catch (const std::exception& e) {
        throw ScenarioError(e.what());
    }

    static const std::set<std::string> known{"source", "converter", "noise", "fiber", "detector", "gating",
                                             "coincidence", "fit", "sweep", "run"};
    for (const auto& s : sections) {
        if (!known.count(s.name()) && s.name().rfind("filter ", 0) != 0)
            throw ScenarioError("line " + std::to_string(s.line()) + ": unknown section [" + s.name() + "]");
        s.check_all_used();
    }
    return sc;
}

} // namespace qfclink
