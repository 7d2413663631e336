// Spin-photon coincidence statistics for a time-bin entangled state measured in
// the X, Y and Z bases, with visibilities and Bell-state fidelity.
#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

namespace qfclink {

enum class Basis { X, Y, Z };

inline constexpr std::array<Basis, 3> kAllBases{Basis::X, Basis::Y, Basis::Z};

inline constexpr const char* to_string(Basis b) noexcept {
    switch (b) {
    case Basis::X: return "X";
    case Basis::Y: return "Y";
    case Basis::Z: return "Z";
    }
    return "?";
}

/// Joint counts ordered (a,a), (a,-a), (-a,a), (-a,-a) with spin first.
struct CoincidenceTable {
    Basis basis = Basis::Z;
    double n_pp = 0.0;
    double n_pm = 0.0;
    double n_mp = 0.0;
    double n_mm = 0.0;

    double total() const noexcept { return n_pp + n_pm + n_mp + n_mm; }
    std::array<double, 4> entries() const noexcept { return {n_pp, n_pm, n_mp, n_mm}; }
};

struct Visibilities {
    double v_x = 0.0;
    double v_y = 0.0;
    double v_z = 0.0;
};

/// Per-window detected counts: signal s, SPDC noise n, detector darks d.
struct ChannelRates {
    double s = 0.0;
    double n = 0.0;
    double d = 0.0;

    void validate() const {
        if (!(s >= 0.0 && n >= 0.0 && d >= 0.0)) throw std::invalid_argument("channel rates must be >= 0");
    }

    /// Counts accumulated over `window_s` from detected rates in Hz.
    static ChannelRates from_rates(double signal_hz, double noise_hz, double dark_hz, double window_s) {
        if (!(window_s > 0.0)) throw std::invalid_argument("coincidence window must be > 0");
        ChannelRates r{signal_hz * window_s, noise_hz * window_s, dark_hz * window_s};
        r.validate();
        return r;
    }
};

enum class BellSign { plus, minus };

/// Expected table for one basis. Darks add d/2 to every entry.
///
/// The X row carries the noise asymmetrically, (n, 0, n, 0), exactly as
/// tabulated for the converted state; the Y and Z rows spread it evenly.
inline CoincidenceTable expected_table(Basis basis, const ChannelRates& r) {
    r.validate();
    const double hs = r.s / 2.0;
    const double hd = r.d / 2.0;
    const double hn = r.n / 2.0;
    switch (basis) {
    case Basis::X: return {basis, hs + r.n + hd, hd, r.n + hd, hs + hd};
    case Basis::Y: return {basis, hs + hn + hd, hn + hd, hn + hd, hs + hn + hd};
    case Basis::Z: return {basis, hn + hd, hs + hn + hd, hs + hn + hd, hn + hd};
    }
    throw std::invalid_argument("unknown basis");
}

inline double visibility(const CoincidenceTable& t) {
    for (double e : t.entries())
        if (!(e >= 0.0)) throw std::invalid_argument("coincidence counts must be >= 0");
    const double total = t.total();
    if (!(total > 0.0)) throw std::domain_error("visibility undefined for an empty table");
    return (t.n_pp - t.n_pm - t.n_mp + t.n_mm) / total;
}

/// F(psi+-) = (1 +- V_X +- V_Y - V_Z) / 4, unclamped.
inline double bell_fidelity(const Visibilities& v, BellSign sign = BellSign::plus) noexcept {
    const double k = sign == BellSign::plus ? 1.0 : -1.0;
    return (1.0 + k * v.v_x + k * v.v_y - v.v_z) / 4.0;
}

inline double fidelity_closed_form(const ChannelRates& r) {
    r.validate();
    const double bg = r.n + r.d;
    const double denom = 2.0 * r.s + 4.0 * bg;
    if (!(denom > 0.0)) throw std::domain_error("fidelity undefined when s, n and d are all zero");
    return 1.0 - 3.0 * bg / denom;
}

/// Draws each entry from Poisson(expected entry).
template <class Rng>
CoincidenceTable sample_table(const CoincidenceTable& expected, Rng& rng) {
    auto draw = [&rng](double mean) -> double {
        if (!std::isfinite(mean) || mean < 0.0) throw std::invalid_argument("expected counts must be finite and >= 0");
        if (mean == 0.0) return 0.0;
        std::poisson_distribution<std::int64_t> dist(mean);
        return static_cast<double>(dist(rng));
    };
    CoincidenceTable out{expected.basis, 0, 0, 0, 0};
    out.n_pp = draw(expected.n_pp);
    out.n_pm = draw(expected.n_pm);
    out.n_mp = draw(expected.n_mp);
    out.n_mm = draw(expected.n_mm);
    return out;
}

inline CoincidenceTable sample_table(const CoincidenceTable& expected, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    return sample_table(expected, rng);
}

struct FidelityEstimate {
    double fidelity = 0.0;
    double std_error = 0.0;
    Visibilities visibilities;
};

/// Delta-method variance of a visibility under independent Poisson entries.
inline double visibility_variance(const CoincidenceTable& t) {
    const double v = visibility(t);
    const double total = t.total();
    constexpr std::array<double, 4> sign{1.0, -1.0, -1.0, 1.0};
    const auto e = t.entries();
    double var = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        const double g = (sign[i] - v) / total;
        var += g * g * e[i];
    }
    return var;
}

/// Fidelity from measured X, Y, Z tables plus its first-order standard error.
inline FidelityEstimate estimate_fidelity(const CoincidenceTable& x, const CoincidenceTable& y,
                                          const CoincidenceTable& z, BellSign sign = BellSign::plus) {
    if (x.basis != Basis::X || y.basis != Basis::Y || z.basis != Basis::Z)
        throw std::invalid_argument("tables must be given in X, Y, Z order");
    FidelityEstimate est;
    est.visibilities = {visibility(x), visibility(y), visibility(z)};
    est.fidelity = bell_fidelity(est.visibilities, sign);
    // Each visibility enters with weight 1/4 in magnitude.
    const double var = (visibility_variance(x) + visibility_variance(y) + visibility_variance(z)) / 16.0;
    est.std_error = std::sqrt(var);
    return est;
}

} // namespace qfclink
