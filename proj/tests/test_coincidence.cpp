#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "qfclink/coincidence.hpp"

using namespace qfclink;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

Visibilities expected_visibilities(const ChannelRates& r) {
    return {visibility(expected_table(Basis::X, r)), visibility(expected_table(Basis::Y, r)),
            visibility(expected_table(Basis::Z, r))};
}

} // namespace

TEST_CASE("expected tables follow the basis patterns", "[coincidence][table]") {
    const auto z = expected_table(Basis::Z, {1000.0, 0.0, 0.0});
    CHECK(z.n_pp == 0.0);
    CHECK(z.n_pm == 500.0);
    CHECK(z.n_mp == 500.0);
    CHECK(z.n_mm == 0.0);

    const auto dark = expected_table(Basis::X, {0.0, 0.0, 8.0});
    for (double e : dark.entries()) CHECK(e == 4.0);

    const auto noise = expected_table(Basis::X, {0.0, 6.0, 0.0});
    CHECK(noise.n_pp == 6.0);
    CHECK(noise.n_pm == 0.0);
    CHECK(noise.n_mp == 6.0);
    CHECK(noise.n_mm == 0.0);

    CHECK_THROWS_AS(expected_table(Basis::Y, {-1.0, 0.0, 0.0}), std::invalid_argument);
}

TEST_CASE("table totals do not depend on the basis", "[coincidence][table][property]") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(0.0, 1e5);
    for (int i = 0; i < 1000; ++i) {
        const ChannelRates r{u(rng), u(rng), u(rng)};
        const double want = r.s + 2.0 * r.n + 2.0 * r.d;
        for (auto b : kAllBases) REQUIRE_THAT(expected_table(b, r).total(), WithinRel(want, 1e-12));
    }
}

TEST_CASE("visibility", "[coincidence][visibility]") {
    CHECK(visibility({Basis::X, 50.0, 0.0, 0.0, 50.0}) == 1.0);
    CHECK(visibility({Basis::X, 7.0, 7.0, 7.0, 7.0}) == 0.0);
    // (50 - 550 - 550 + 50) / 1200
    CHECK_THAT(visibility(expected_table(Basis::Z, {1000.0, 100.0, 0.0})), WithinRel(-1000.0 / 1200.0, 1e-12));
    CHECK_THROWS_AS(visibility({Basis::X, 0.0, 0.0, 0.0, 0.0}), std::domain_error);
    CHECK_THROWS_AS(visibility({Basis::X, -1.0, 1.0, 1.0, 1.0}), std::invalid_argument);
}

TEST_CASE("visibility is scale invariant", "[coincidence][visibility][property]") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1e4), k(1e-3, 1e3);
    for (int i = 0; i < 1000; ++i) {
        const CoincidenceTable t{Basis::Y, u(rng), u(rng), u(rng), u(rng) + 1.0};
        const double c = k(rng);
        const CoincidenceTable scaled{Basis::Y, c * t.n_pp, c * t.n_pm, c * t.n_mp, c * t.n_mm};
        REQUIRE_THAT(visibility(scaled), WithinAbs(visibility(t), 1e-12));
    }
}

TEST_CASE("Bell fidelity", "[coincidence][bell]") {
    CHECK(bell_fidelity({1.0, 1.0, -1.0}, BellSign::plus) == 1.0);
    CHECK(bell_fidelity({0.0, 0.0, 0.0}, BellSign::plus) == 0.25);
    CHECK(bell_fidelity({0.0, 0.0, 0.0}, BellSign::minus) == 0.25);
    CHECK(bell_fidelity({-1.0, -1.0, -1.0}, BellSign::minus) == 1.0);
    // Unclamped: the raw formula can leave [0, 1].
    CHECK(bell_fidelity({-1.0, -1.0, 1.0}, BellSign::plus) == -0.5);
}

TEST_CASE("pure signal and pure background visibilities", "[coincidence][bell]") {
    const auto sig = expected_visibilities({123.0, 0.0, 0.0});
    CHECK(sig.v_x == 1.0);
    CHECK(sig.v_y == 1.0);
    CHECK(sig.v_z == -1.0);
    const auto bg = expected_visibilities({0.0, 40.0, 10.0});
    CHECK(bg.v_x == 0.0);
    CHECK(bg.v_y == 0.0);
    CHECK(bg.v_z == 0.0);
}

TEST_CASE("closed-form fidelity", "[coincidence][closed_form]") {
    CHECK(fidelity_closed_form({10.0, 0.0, 0.0}) == 1.0);
    CHECK(fidelity_closed_form({0.0, 5.0, 0.0}) == 0.25);
    CHECK_THROWS_AS(fidelity_closed_form({0.0, 0.0, 0.0}), std::domain_error);
    // Per-second window at the 0 km operating point: SNR = 2648.7 / 192.6.
    const ChannelRates r = ChannelRates::from_rates(2648.7, 138.6, 54.0, 1.0);
    CHECK_THAT(fidelity_closed_form(r), WithinAbs(0.905, 5e-4));
    CHECK_THAT(fidelity_closed_form(r), WithinRel(1.0 - 3.0 / (2.0 * (2648.7 / 192.6 + 2.0)), 1e-12));
    CHECK_THROWS(ChannelRates::from_rates(1.0, 1.0, 1.0, 0.0));
}

TEST_CASE("tables, visibilities and Bell formula reduce to the closed form", "[coincidence][property]") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> mag(-3.0, 6.0);
    std::bernoulli_distribution zero(0.1);
    for (int i = 0; i < 1000; ++i) {
        ChannelRates r{std::pow(10.0, mag(rng)), std::pow(10.0, mag(rng)), std::pow(10.0, mag(rng))};
        if (zero(rng)) r.n = 0.0;
        if (zero(rng)) r.d = 0.0;
        const double via_tables = bell_fidelity(expected_visibilities(r), BellSign::plus);
        REQUIRE_THAT(via_tables, WithinRel(fidelity_closed_form(r), 1e-12));
    }
}

TEST_CASE("Poisson sampling of tables", "[coincidence][sampling]") {
    const CoincidenceTable zero{Basis::X, 0.0, 0.0, 0.0, 0.0};
    const auto z = sample_table(zero, 5u);
    CHECK(z.total() == 0.0);

    const CoincidenceTable big{Basis::Z, 1e6, 1e6, 1e6, 1e6};
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto t = sample_table(big, seed);
        for (double e : t.entries()) {
            REQUIRE(std::floor(e) == e);
            REQUIRE(std::abs(e - 1e6) < 5.0 * 1e3);
        }
    }
    const auto a = sample_table(big, 42u);
    const auto b = sample_table(big, 42u);
    CHECK(a.entries() == b.entries());
    CHECK(a.basis == Basis::Z);
    CHECK_THROWS(sample_table(CoincidenceTable{Basis::X, std::nan(""), 0, 0, 0}, 1u));
}

TEST_CASE("fidelity estimate on expected tables", "[coincidence][estimate]") {
    const ChannelRates r{2000.0, 150.0, 50.0};
    const auto est = estimate_fidelity(expected_table(Basis::X, r), expected_table(Basis::Y, r),
                                       expected_table(Basis::Z, r), BellSign::plus);
    CHECK_THAT(est.fidelity, WithinRel(fidelity_closed_form(r), 1e-12));
    CHECK(est.std_error > 0.0);

    // Delta-method variance cross-checked against central differences of V.
    const auto x = expected_table(Basis::X, r);
    double var = 0.0;
    auto e = x.entries();
    for (std::size_t i = 0; i < 4; ++i) {
        auto up = e, dn = e;
        const double h = 1e-3 * e[i] + 1e-6;
        up[i] += h;
        dn[i] -= h;
        const double g = (visibility({Basis::X, up[0], up[1], up[2], up[3]}) -
                          visibility({Basis::X, dn[0], dn[1], dn[2], dn[3]})) / (2.0 * h);
        var += g * g * e[i];
    }
    CHECK_THAT(visibility_variance(x), WithinRel(var, 1e-6));

    const auto scaled = [&](double k) {
        const ChannelRates rk{r.s * k, r.n, r.d};
        return estimate_fidelity(expected_table(Basis::X, rk), expected_table(Basis::Y, rk), expected_table(Basis::Z, rk));
    };
    const auto huge = scaled(1e6);
    CHECK(huge.fidelity > 1.0 - 1e-6);
    CHECK(huge.std_error < 1e-4 * est.std_error);

    CHECK_THROWS_AS(estimate_fidelity(expected_table(Basis::Y, r), expected_table(Basis::X, r), expected_table(Basis::Z, r)),
                    std::invalid_argument);
    CHECK_THROWS_AS(estimate_fidelity(CoincidenceTable{Basis::X}, expected_table(Basis::Y, r), expected_table(Basis::Z, r)),
                    std::domain_error);
}

TEST_CASE("sampled estimator is calibrated", "[coincidence][estimate][montecarlo]") {
    // Moderate s/(n+d): totals around 2.5e3 per basis.
    const ChannelRates r{2000.0, 150.0, 50.0};
    const double truth = fidelity_closed_form(r);
    std::array<CoincidenceTable, 3> expected{expected_table(Basis::X, r), expected_table(Basis::Y, r),
                                             expected_table(Basis::Z, r)};
    const double predicted_se = estimate_fidelity(expected[0], expected[1], expected[2]).std_error;

    constexpr int kRuns = 10000;
    std::mt19937_64 rng(2024);
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < kRuns; ++i) {
        const auto est = estimate_fidelity(sample_table(expected[0], rng), sample_table(expected[1], rng),
                                           sample_table(expected[2], rng));
        sum += est.fidelity;
        sum2 += est.fidelity * est.fidelity;
    }
    const double mean = sum / kRuns;
    const double sd = std::sqrt(sum2 / kRuns - mean * mean);
    CHECK(std::abs(mean - truth) < 3.0 * predicted_se / std::sqrt(double(kRuns)));
    CHECK_THAT(sd, WithinRel(predicted_se, 0.05));
}
