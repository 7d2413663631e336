// Synthetic time-tag streams for a pulsed signal over continuous background,
// plus period folding and the two-gate SNR estimator (k_S - k_N) / k_N.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "qfclink/core_model.hpp"

namespace qfclink {

/// Simulation-truth label. Imported streams carry `unknown`.
enum class Origin : std::uint8_t { signal, noise, dark, unknown };

struct TimeTag {
    std::int64_t timestamp_ns;
    Origin origin;

    friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

struct TimeTagStream {
    std::int64_t rep_period_ns = 1000;
    std::int64_t duration_ns = 0;
    std::vector<TimeTag> tags; // sorted by timestamp
};

struct Gate {
    std::int64_t offset_ns = 0;
    std::int64_t width_ns = 300;

    bool contains_phase(std::int64_t phase) const noexcept {
        return phase >= offset_ns && phase < offset_ns + width_ns;
    }
};

struct GateConfig {
    std::int64_t rep_period_ns = 1000;
    Gate signal_gate{0, 300};
    Gate noise_gate{500, 300};
    std::int64_t bin_ns = 10;

    void validate() const {
        if (rep_period_ns <= 0) throw std::invalid_argument("rep_period_ns must be > 0");
        for (const Gate* g : {&signal_gate, &noise_gate}) {
            if (g->width_ns <= 0 || g->offset_ns < 0 || g->offset_ns + g->width_ns > rep_period_ns)
                throw std::invalid_argument("gate must lie within one repetition period");
        }
        if (signal_gate.width_ns != noise_gate.width_ns)
            throw std::invalid_argument("signal and noise gates must have equal widths");
        const bool disjoint = signal_gate.offset_ns + signal_gate.width_ns <= noise_gate.offset_ns ||
                              noise_gate.offset_ns + noise_gate.width_ns <= signal_gate.offset_ns;
        if (!disjoint) throw std::invalid_argument("signal and noise gates overlap");
    }

    double gate_duty() const noexcept {
        return static_cast<double>(signal_gate.width_ns) / static_cast<double>(rep_period_ns);
    }
};

/// How a quoted background rate relates to the generated continuous rate.
/// `in_gate`: the rate is what one gate accumulates per second of acquisition.
/// `cw`: the rate is the free-running continuous rate.
enum class NoiseRateConvention { cw, in_gate };

inline double continuous_background_rate(double quoted_hz, NoiseRateConvention convention, const GateConfig& gate) {
    if (convention == NoiseRateConvention::cw) return quoted_hz;
    return quoted_hz / gate.gate_duty();
}

inline std::int64_t period_ns_from_rate(double rep_rate_hz) {
    if (!(rep_rate_hz > 0.0)) throw std::invalid_argument("rep_rate_hz must be > 0");
    return std::llround(1e9 / rep_rate_hz);
}

/// Poisson streams: signal confined to rectangular pulses starting at
/// `pulse_offset_ns` in each period, noise and darks uniform in time.
/// The expected signal count is `detected_signal_rate_hz * duration_s`.
template <class Rng>
TimeTagStream generate_stream(const SourceModel& source, double detected_signal_rate_hz, double noise_rate_hz,
                              double dark_rate_hz, double duration_s, Rng& rng, std::int64_t pulse_offset_ns = 0) {
    if (!(detected_signal_rate_hz >= 0.0 && noise_rate_hz >= 0.0 && dark_rate_hz >= 0.0))
        throw std::invalid_argument("rates must be >= 0");
    if (!(duration_s > 0.0)) throw std::invalid_argument("duration must be > 0");
    if (!(source.rep_rate_hz > 0.0)) throw std::invalid_argument("rep_rate_hz must be > 0");
    const double duty = source.pulse_width_s * source.rep_rate_hz;
    if (!(duty > 0.0) && detected_signal_rate_hz > 0.0)
        throw std::invalid_argument("zero duty cycle with a positive signal rate");
    if (duty > 1.0 + 1e-12) throw std::invalid_argument("duty cycle exceeds 1");

    TimeTagStream out;
    out.rep_period_ns = period_ns_from_rate(source.rep_rate_hz);
    const double period = static_cast<double>(out.rep_period_ns);
    const double total_ns = duration_s * 1e9;
    out.duration_ns = static_cast<std::int64_t>(std::ceil(total_ns));
    const double width = source.pulse_width_s * 1e9;
    const double offset = static_cast<double>(pulse_offset_ns);
    if (pulse_offset_ns < 0 || offset + width > period + 1e-9)
        throw std::invalid_argument("pulse must fit within one repetition period");

    auto poisson = [&rng](double mean) -> std::int64_t {
        if (mean <= 0.0) return 0;
        std::poisson_distribution<std::int64_t> d(mean);
        return d(rng);
    };
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    if (detected_signal_rate_hz > 0.0) {
        // Map a uniform draw over the union of pulse windows back to time.
        const auto full_periods = static_cast<std::int64_t>(std::floor(total_ns / period));
        const double tail_start = static_cast<double>(full_periods) * period + offset;
        const double tail_on = std::clamp(total_ns - tail_start, 0.0, width);
        const double on_time = static_cast<double>(full_periods) * width + tail_on;
        if (!(on_time > 0.0)) throw std::invalid_argument("duration contains no pulse window");
        const std::int64_t k = poisson(detected_signal_rate_hz * duration_s);
        out.tags.reserve(static_cast<std::size_t>(k));
        for (std::int64_t i = 0; i < k; ++i) {
            const double u = unit(rng) * on_time;
            auto idx = static_cast<std::int64_t>(std::floor(u / width));
            idx = std::min(idx, full_periods);
            const double t = static_cast<double>(idx) * period + offset + (u - static_cast<double>(idx) * width);
            out.tags.push_back({static_cast<std::int64_t>(std::floor(std::min(t, total_ns))), Origin::signal});
        }
    }
    auto continuous = [&](double rate_hz, Origin origin) {
        const std::int64_t k = poisson(rate_hz * duration_s);
        for (std::int64_t i = 0; i < k; ++i)
            out.tags.push_back({static_cast<std::int64_t>(std::floor(unit(rng) * total_ns)), origin});
    };
    continuous(noise_rate_hz, Origin::noise);
    continuous(dark_rate_hz, Origin::dark);

    std::sort(out.tags.begin(), out.tags.end(), [](const TimeTag& a, const TimeTag& b) {
        return a.timestamp_ns != b.timestamp_ns ? a.timestamp_ns < b.timestamp_ns : a.origin < b.origin;
    });
    return out;
}

inline TimeTagStream generate_stream(const SourceModel& source, double detected_signal_rate_hz, double noise_rate_hz,
                                     double dark_rate_hz, double duration_s, std::uint64_t seed,
                                     std::int64_t pulse_offset_ns = 0) {
    std::mt19937_64 rng(seed);
    return generate_stream(source, detected_signal_rate_hz, noise_rate_hz, dark_rate_hz, duration_s, rng,
                           pulse_offset_ns);
}

inline std::int64_t phase_of(std::int64_t timestamp_ns, std::int64_t period_ns) noexcept {
    const std::int64_t m = timestamp_ns % period_ns;
    return m < 0 ? m + period_ns : m;
}

struct Histogram {
    std::int64_t bin_ns = 10;
    std::vector<std::uint64_t> counts;

    std::uint64_t total() const noexcept {
        std::uint64_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }
};

inline Histogram fold_histogram(const TimeTagStream& stream, const GateConfig& gate) {
    if (gate.bin_ns <= 0 || gate.rep_period_ns <= 0 || gate.rep_period_ns % gate.bin_ns != 0)
        throw std::invalid_argument("bin width must divide the repetition period");
    Histogram h;
    h.bin_ns = gate.bin_ns;
    h.counts.assign(static_cast<std::size_t>(gate.rep_period_ns / gate.bin_ns), 0);
    for (const auto& t : stream.tags)
        ++h.counts[static_cast<std::size_t>(phase_of(t.timestamp_ns, gate.rep_period_ns) / gate.bin_ns)];
    return h;
}

struct GatedSnr {
    double snr = 0.0;
    std::uint64_t k_s = 0;
    std::uint64_t k_n = 0;
    double std_error = 0.0;
    bool infinite = false; // k_N == 0: `snr` holds the sentinel
};

/// (k_S - k_N) / k_N over all periods, with a first-order Poisson standard error.
inline GatedSnr gated_snr(const TimeTagStream& stream, const GateConfig& gate) {
    gate.validate();
    GatedSnr r;
    for (const auto& t : stream.tags) {
        const auto phase = phase_of(t.timestamp_ns, gate.rep_period_ns);
        if (gate.signal_gate.contains_phase(phase))
            ++r.k_s;
        else if (gate.noise_gate.contains_phase(phase))
            ++r.k_n;
    }
    if (r.k_n == 0) {
        r.infinite = true;
        r.snr = kInfiniteSnr;
        r.std_error = kInfiniteSnr;
        return r;
    }
    const double ks = static_cast<double>(r.k_s);
    const double kn = static_cast<double>(r.k_n);
    r.snr = (ks - kn) / kn;
    const double ratio = ks / kn;
    r.std_error = ratio * std::sqrt((ks > 0 ? 1.0 / ks : 0.0) + 1.0 / kn);
    return r;
}

/// Large-sample value of the gated estimator for a pulse aligned with the signal gate.
inline double expected_gated_snr(double detected_signal_rate_hz, double cw_background_hz, const GateConfig& gate) {
    const double in_gate = cw_background_hz * gate.gate_duty();
    if (!(in_gate > 0.0)) return kInfiniteSnr;
    return detected_signal_rate_hz / in_gate;
}

// ---------------------------------------------------------------------------
// Text time-tag format: header `# timetag v1 rep_period_ns=<N>`, then
// `<timestamp_ns>\t<channel>` per event, channel 0 = detector.
// ---------------------------------------------------------------------------

inline void write_timetags(std::ostream& os, const TimeTagStream& stream) {
    os << "# timetag v1 rep_period_ns=" << stream.rep_period_ns << '\n';
    for (const auto& t : stream.tags) os << t.timestamp_ns << "\t0\n";
}

inline TimeTagStream read_timetags(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw std::runtime_error("time-tag file is empty");
    constexpr std::string_view prefix = "# timetag v1 rep_period_ns=";
    if (line.rfind(prefix, 0) != 0) throw std::runtime_error("missing time-tag header");
    TimeTagStream s;
    try {
        std::size_t used = 0;
        s.rep_period_ns = std::stoll(line.substr(prefix.size()), &used);
        if (prefix.size() + used != line.size() || s.rep_period_ns <= 0) throw std::invalid_argument("period");
    } catch (const std::exception&) {
        throw std::runtime_error("bad rep_period_ns in time-tag header");
    }
    std::size_t lineno = 1;
    std::int64_t last = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::int64_t ts = 0;
        int channel = -1;
        std::string rest;
        if (!(ls >> ts >> channel) || (ls >> rest) || ts < 0 || channel != 0)
            throw std::runtime_error("malformed time-tag line " + std::to_string(lineno));
        if (ts < last) throw std::runtime_error("time tags not sorted at line " + std::to_string(lineno));
        last = ts;
        s.tags.push_back({ts, Origin::unknown});
    }
    s.duration_ns = s.tags.empty() ? 0 : s.tags.back().timestamp_ns + 1;
    return s;
}

} // namespace qfclink
