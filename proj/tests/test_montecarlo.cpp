#include <catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "qfclink/montecarlo.hpp"

using namespace qfclink;
using Catch::Matchers::WithinRel;

namespace {

const SourceModel kPulsed{0.0, 1e6, 300e-9};

GateConfig default_gates() {
    GateConfig g;
    g.rep_period_ns = 1000;
    g.signal_gate = {0, 300};
    g.noise_gate = {500, 300};
    g.bin_ns = 10;
    return g;
}

TimeTagStream stream_of(std::initializer_list<std::int64_t> ts) {
    TimeTagStream s;
    for (auto t : ts) s.tags.push_back({t, Origin::unknown});
    return s;
}

} // namespace

TEST_CASE("gate configuration invariants", "[montecarlo][gates]") {
    CHECK_NOTHROW(default_gates().validate());
    auto g = default_gates();
    g.noise_gate = {200, 300};
    CHECK_THROWS_AS(g.validate(), std::invalid_argument); // overlap
    g = default_gates();
    g.noise_gate = {800, 300};
    CHECK_THROWS_AS(g.validate(), std::invalid_argument); // beyond the period
    g = default_gates();
    g.noise_gate = {500, 200};
    CHECK_THROWS_AS(g.validate(), std::invalid_argument); // unequal widths
}

TEST_CASE("background rate conventions", "[montecarlo][gates]") {
    const auto g = default_gates();
    CHECK(continuous_background_rate(192.6, NoiseRateConvention::cw, g) == 192.6);
    CHECK_THAT(continuous_background_rate(192.6, NoiseRateConvention::in_gate, g), WithinRel(642.0, 1e-12));
    CHECK_THAT(expected_gated_snr(2648.7, 642.0, g), WithinRel(2648.7 / 192.6, 1e-12));
}

TEST_CASE("stream generation basics", "[montecarlo][generate]") {
    CHECK(generate_stream(kPulsed, 0.0, 0.0, 0.0, 1.0, 1u).tags.empty());
    CHECK_THROWS_AS(generate_stream(kPulsed, 1.0, 0.0, 0.0, 0.0, 1u), std::invalid_argument);
    CHECK_THROWS_AS(generate_stream(kPulsed, -1.0, 0.0, 0.0, 1.0, 1u), std::invalid_argument);
    CHECK_THROWS_AS(generate_stream(SourceModel{0.0, 1e6, 0.0}, 10.0, 0.0, 0.0, 1.0, 1u), std::invalid_argument);
    CHECK_NOTHROW(generate_stream(SourceModel{0.0, 1e6, 0.0}, 0.0, 10.0, 0.0, 1.0, 1u));

    const auto sig = generate_stream(kPulsed, 5000.0, 0.0, 0.0, 2.0, 9u);
    REQUIRE_FALSE(sig.tags.empty());
    CHECK(sig.rep_period_ns == 1000);
    for (const auto& t : sig.tags) {
        REQUIRE(t.origin == Origin::signal);
        REQUIRE(phase_of(t.timestamp_ns, 1000) < 300);
        REQUIRE(t.timestamp_ns < sig.duration_ns);
    }
    const auto shifted = generate_stream(kPulsed, 5000.0, 0.0, 0.0, 1.0, 9u, 400);
    for (const auto& t : shifted.tags) {
        const auto ph = phase_of(t.timestamp_ns, 1000);
        REQUIRE(ph >= 400);
        REQUIRE(ph < 700);
    }
    CHECK_THROWS_AS(generate_stream(kPulsed, 1.0, 0.0, 0.0, 1.0, 9u, 800), std::invalid_argument);
}

TEST_CASE("streams are sorted and deterministic", "[montecarlo][generate]") {
    const auto a = generate_stream(kPulsed, 2600.0, 150.0, 54.0, 5.0, 77u);
    const auto b = generate_stream(kPulsed, 2600.0, 150.0, 54.0, 5.0, 77u);
    const auto c = generate_stream(kPulsed, 2600.0, 150.0, 54.0, 5.0, 78u);
    CHECK(a.tags == b.tags);
    CHECK(a.tags != c.tags);
    CHECK(std::is_sorted(a.tags.begin(), a.tags.end(),
                         [](const TimeTag& x, const TimeTag& y) { return x.timestamp_ns < y.timestamp_ns; }));
}

TEST_CASE("stream counts follow the Poisson means", "[montecarlo][generate]") {
    const double duration = 60.0;
    const double mean = duration * (2600.0 + 150.0 + 54.0);
    for (std::uint64_t seed = 100; seed < 105; ++seed) {
        const auto s = generate_stream(kPulsed, 2600.0, 150.0, 54.0, duration, seed);
        REQUIRE(std::abs(static_cast<double>(s.tags.size()) - mean) < 5.0 * std::sqrt(mean));
        std::size_t n_sig = 0;
        for (const auto& t : s.tags) n_sig += t.origin == Origin::signal;
        REQUIRE(std::abs(static_cast<double>(n_sig) - 2600.0 * duration) < 5.0 * std::sqrt(2600.0 * duration));
    }
}

TEST_CASE("period folding", "[montecarlo][histogram]") {
    const auto g = default_gates();
    const auto empty = fold_histogram(TimeTagStream{}, g);
    CHECK(empty.counts.size() == 100);
    CHECK(empty.total() == 0);

    const auto one = fold_histogram(stream_of({135}), g);
    CHECK(one.counts[13] == 1);
    CHECK(one.total() == 1);
    CHECK(fold_histogram(stream_of({2135, 7139}), g).counts[13] == 2);

    auto bad = g;
    bad.bin_ns = 7;
    CHECK_THROWS_AS(fold_histogram(TimeTagStream{}, bad), std::invalid_argument);

    const auto sig = generate_stream(kPulsed, 5000.0, 0.0, 0.0, 1.0, 3u);
    const auto h = fold_histogram(sig, g);
    CHECK(h.total() == sig.tags.size());
    for (std::size_t b = 30; b < h.counts.size(); ++b) REQUIRE(h.counts[b] == 0);

    const auto mixed = generate_stream(kPulsed, 2600.0, 500.0, 54.0, 3.0, 4u);
    CHECK(fold_histogram(mixed, g).total() == mixed.tags.size());
}

TEST_CASE("gated SNR estimator", "[montecarlo][snr]") {
    const auto g = default_gates();
    const auto clean = generate_stream(kPulsed, 3000.0, 0.0, 0.0, 1.0, 8u);
    const auto inf = gated_snr(clean, g);
    CHECK(inf.infinite);
    CHECK(inf.k_s > 0);
    CHECK(inf.k_n == 0);
    CHECK(std::isinf(inf.snr));

    // Four in the signal gate, two in the noise gate.
    const auto r = gated_snr(stream_of({5, 1010, 2299, 3150, 4500, 5799, 6900}), g);
    CHECK(r.k_s == 4);
    CHECK(r.k_n == 2);
    CHECK(r.snr == 1.0);
    CHECK_FALSE(r.infinite);
}

TEST_CASE("gated SNR converges to the rate ratio", "[montecarlo][snr][property]") {
    const auto g = default_gates();
    const double rs = 2648.7, in_gate_bg = 192.6;
    const double cw = continuous_background_rate(in_gate_bg, NoiseRateConvention::in_gate, g);
    const double truth = expected_gated_snr(rs, cw, g);

    constexpr int kSeeds = 20;
    double sum = 0.0, se2 = 0.0;
    for (int seed = 0; seed < kSeeds; ++seed) {
        const auto s = generate_stream(kPulsed, rs, cw, 0.0, 20.0, static_cast<std::uint64_t>(1000 + seed));
        const auto r = gated_snr(s, g);
        sum += r.snr;
        se2 += r.std_error * r.std_error;
    }
    const double mean = sum / kSeeds;
    const double se_mean = std::sqrt(se2) / kSeeds;
    CHECK(std::abs(mean - truth) < 3.0 * se_mean);
}

TEST_CASE("either equal-width background gate gives the same SNR", "[montecarlo][snr][property]") {
    auto g1 = default_gates();
    auto g2 = default_gates();
    g2.noise_gate = {650, 300};
    const auto s = generate_stream(kPulsed, 2648.7, 642.0, 0.0, 30.0, 555u);
    const auto a = gated_snr(s, g1);
    const auto b = gated_snr(s, g2);
    CHECK(std::abs(a.snr - b.snr) < 3.0 * std::hypot(a.std_error, b.std_error));
}

TEST_CASE("time-tag text format", "[montecarlo][io]") {
    const auto s = generate_stream(kPulsed, 2600.0, 150.0, 54.0, 0.05, 6u);
    std::stringstream ss;
    write_timetags(ss, s);
    const std::string text = ss.str();
    CHECK(text.rfind("# timetag v1 rep_period_ns=1000\n", 0) == 0);
    CHECK(text.find("signal") == std::string::npos);

    std::istringstream in(text);
    const auto back = read_timetags(in);
    CHECK(back.rep_period_ns == 1000);
    REQUIRE(back.tags.size() == s.tags.size());
    for (std::size_t i = 0; i < s.tags.size(); ++i) {
        REQUIRE(back.tags[i].timestamp_ns == s.tags[i].timestamp_ns);
        REQUIRE(back.tags[i].origin == Origin::unknown);
    }
    CHECK(gated_snr(back, default_gates()).k_s == gated_snr(s, default_gates()).k_s);

    auto parse = [](const std::string& t) {
        std::istringstream is(t);
        return read_timetags(is);
    };
    CHECK_THROWS(parse(""));
    CHECK_THROWS(parse("0\t0\n"));
    CHECK_THROWS(parse("# timetag v1 rep_period_ns=abc\n"));
    CHECK_THROWS(parse("# timetag v1 rep_period_ns=1000\n10\t1\n"));
    CHECK_THROWS(parse("# timetag v1 rep_period_ns=1000\n10\t0\n5\t0\n"));
    CHECK_THROWS(parse("# timetag v1 rep_period_ns=1000\n10\t0\textra\n"));
    CHECK(parse("# timetag v1 rep_period_ns=1000\n").tags.empty());
}
