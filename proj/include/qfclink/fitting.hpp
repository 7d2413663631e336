// Parameter recovery from measured curves: damped Gauss-Newton fit of the
// waveguide efficiency curve and a through-origin fit of noise versus pump.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "qfclink/core_model.hpp"

namespace qfclink {

struct CurvePoint {
    double x = 0.0;                // pump power, W
    double y = 0.0;                // efficiency fraction or noise rate in Hz
    std::optional<double> weight;  // unweighted when absent
};

enum class FitModel { conversion_curve, noise_linear };

struct FitParameter {
    std::string name;
    double value = 0.0;
    double std_error = 0.0;
};

struct FitResult {
    FitModel model = FitModel::conversion_curve;
    std::vector<FitParameter> parameters;
    std::vector<double> covariance; // row-major, parameters.size() squared
    double residual_sum_squares = 0.0;
    double gradient_norm = 0.0; // scaled, see fit_conversion_curve
    int iterations = 0;
    bool converged = false;
    bool flat_direction = false; // normal matrix numerically rank deficient
    double waveguide_length_m = 0.0;
    std::vector<double> accepted_rss; // objective after each accepted step, starting point first

    const FitParameter& parameter(std::string_view name) const {
        for (const auto& p : parameters)
            if (p.name == name) return p;
        throw std::out_of_range("no fit parameter named " + std::string(name));
    }
};

namespace detail {

inline double point_weight(const CurvePoint& p) {
    if (!p.weight) return 1.0;
    if (!(*p.weight > 0.0)) throw std::invalid_argument("point weights must be > 0");
    return *p.weight;
}

inline void check_points(std::span<const CurvePoint> points) {
    for (const auto& p : points) {
        if (!(p.x >= 0.0) || !std::isfinite(p.y)) throw std::invalid_argument("curve points need x >= 0 and finite y");
        point_weight(p);
    }
}

} // namespace detail

/// Partial derivatives of eta_max sin^2(L sqrt(alpha x)) with respect to (eta_max, alpha).
inline std::array<double, 2> conversion_curve_gradient(double eta_max, double alpha, double length_m, double x) {
    const double u = length_m * std::sqrt(alpha * x);
    const double s = std::sin(u);
    // du/dalpha = L sqrt(x) / (2 sqrt(alpha))
    const double du_dalpha = alpha > 0.0 ? length_m * std::sqrt(x) / (2.0 * std::sqrt(alpha)) : 0.0;
    return {s * s, eta_max * std::sin(2.0 * u) * du_dalpha};
}

inline double conversion_curve_value(double eta_max, double alpha, double length_m, double x) {
    const double s = std::sin(length_m * std::sqrt(alpha * x));
    return eta_max * s * s;
}

struct FitOptions {
    int max_iterations = 200;
    double gradient_tolerance = 1e-10;
    double initial_damping = 1e-3;
};

/// Least-squares fit of eta(P) = eta_max sin^2(L sqrt(alpha P)) with L fixed.
///
/// Parameters are optimized in log space so both stay positive. Convergence
/// is declared when the gradient of the half objective with respect to the
/// log-parameters, divided by sum(w y^2), falls below the tolerance.
inline FitResult fit_conversion_curve(std::span<const CurvePoint> points, double waveguide_length_m,
                                      std::optional<std::array<double, 2>> init = std::nullopt,
                                      const FitOptions& options = {}) {
    detail::check_points(points);
    if (!(waveguide_length_m > 0.0)) throw std::invalid_argument("waveguide length must be > 0");
    std::set<double> distinct;
    for (const auto& p : points) distinct.insert(p.x);
    if (distinct.size() < 3) throw std::invalid_argument("need at least 3 points with distinct pump powers");

    const double L = waveguide_length_m;
    std::array<double, 2> start{};
    if (init) {
        start = *init;
    } else {
        double ymax = 0.0;
        for (const auto& p : points) ymax = std::max(ymax, p.y);
        if (!(ymax > 0.0)) throw std::invalid_argument("cannot initialize: no positive efficiency values");
        // Small-signal regime: eta ~ eta_max L^2 alpha x over the lower half of pump powers.
        std::vector<double> xs(distinct.begin(), distinct.end());
        const double median = xs[(xs.size() - 1) / 2];
        double sxy = 0.0, sxx = 0.0, xmax = 0.0;
        for (const auto& p : points) {
            xmax = std::max(xmax, p.x);
            if (p.x <= median) {
                sxy += p.x * p.y;
                sxx += p.x * p.x;
            }
        }
        const double slope = sxx > 0.0 ? sxy / sxx : 0.0;
        double alpha0 = slope / (ymax * L * L);
        if (!(alpha0 > 0.0) || !std::isfinite(alpha0)) alpha0 = 1.0 / (L * L * xmax);
        start = {ymax, alpha0};
    }
    if (!(start[0] > 0.0 && start[1] > 0.0)) throw std::invalid_argument("initial parameters must be > 0");

    const std::size_t m = points.size();
    double scale = 0.0;
    for (const auto& p : points) scale += detail::point_weight(p) * p.y * p.y;
    if (!(scale > 0.0)) scale = 1.0;

    struct Eval {
        double rss;
        std::array<double, 3> jtj; // (00, 01, 11)
        std::array<double, 2> jtr;
    };
    // Jacobian in log-parameters: d f / d ln(theta) = theta * d f / d theta.
    auto evaluate = [&](const std::array<double, 2>& theta) {
        Eval e{0.0, {0, 0, 0}, {0, 0}};
        for (const auto& p : points) {
            const double w = detail::point_weight(p);
            const double r = p.y - conversion_curve_value(theta[0], theta[1], L, p.x);
            const auto g = conversion_curve_gradient(theta[0], theta[1], L, p.x);
            const double j0 = g[0] * theta[0];
            const double j1 = g[1] * theta[1];
            e.rss += w * r * r;
            e.jtj[0] += w * j0 * j0;
            e.jtj[1] += w * j0 * j1;
            e.jtj[2] += w * j1 * j1;
            e.jtr[0] += w * j0 * r;
            e.jtr[1] += w * j1 * r;
        }
        return e;
    };
    auto grad_norm = [&](const Eval& e) { return std::max(std::abs(e.jtr[0]), std::abs(e.jtr[1])) / scale; };

    FitResult result;
    result.model = FitModel::conversion_curve;
    result.waveguide_length_m = L;

    std::array<double, 2> theta = start;
    Eval cur = evaluate(theta);
    result.accepted_rss.push_back(cur.rss);
    double lambda = options.initial_damping;
    int it = 0;
    bool converged = grad_norm(cur) <= options.gradient_tolerance;
    while (!converged && it < options.max_iterations) {
        ++it;
        const double a = cur.jtj[0] * (1.0 + lambda);
        const double b = cur.jtj[1];
        const double d = cur.jtj[2] * (1.0 + lambda);
        const double det = a * d - b * b;
        bool accepted = false;
        if (det > 0.0 && std::isfinite(det)) {
            const double s0 = (d * cur.jtr[0] - b * cur.jtr[1]) / det;
            const double s1 = (a * cur.jtr[1] - b * cur.jtr[0]) / det;
            const std::array<double, 2> trial{theta[0] * std::exp(s0), theta[1] * std::exp(s1)};
            if (std::isfinite(trial[0]) && std::isfinite(trial[1]) && trial[0] > 0.0 && trial[1] > 0.0) {
                const Eval next = evaluate(trial);
                if (next.rss < cur.rss) {
                    theta = trial;
                    cur = next;
                    result.accepted_rss.push_back(cur.rss);
                    lambda = std::max(lambda / 10.0, 1e-15);
                    accepted = true;
                }
            }
        }
        if (!accepted) {
            lambda *= 10.0;
            if (lambda > 1e16) break; // no descent direction left at working precision
        }
        converged = grad_norm(cur) <= options.gradient_tolerance;
    }

    result.iterations = it;
    result.converged = converged;
    result.gradient_norm = grad_norm(cur);
    result.residual_sum_squares = cur.rss;

    // Conditioning of the log-space normal matrix.
    {
        const double tr = cur.jtj[0] + cur.jtj[2];
        const double det = cur.jtj[0] * cur.jtj[2] - cur.jtj[1] * cur.jtj[1];
        const double disc = std::sqrt(std::max(0.0, tr * tr / 4.0 - det));
        const double hi = tr / 2.0 + disc;
        const double lo = tr / 2.0 - disc;
        result.flat_direction = !(lo > 1e-12 * hi);
    }

    // Covariance in natural parameters: J_nat = J_log / theta.
    const double s2 = m > 2 ? cur.rss / static_cast<double>(m - 2) : 0.0;
    const double n00 = cur.jtj[0] / (theta[0] * theta[0]);
    const double n01 = cur.jtj[1] / (theta[0] * theta[1]);
    const double n11 = cur.jtj[2] / (theta[1] * theta[1]);
    const double ndet = n00 * n11 - n01 * n01;
    if (ndet > 0.0 && std::isfinite(ndet)) {
        result.covariance = {s2 * n11 / ndet, -s2 * n01 / ndet, -s2 * n01 / ndet, s2 * n00 / ndet};
    } else {
        const double inf = std::numeric_limits<double>::infinity();
        result.covariance = {inf, inf, inf, inf};
    }
    result.parameters = {
        {"eta_max", theta[0], std::sqrt(result.covariance[0])},
        {"alpha_qfc_per_w_m2", theta[1], std::sqrt(result.covariance[3])},
    };
    return result;
}

/// Through-origin weighted least squares: slope = sum(w x y) / sum(w x^2).
inline FitResult fit_noise_linear(std::span<const CurvePoint> points) {
    detail::check_points(points);
    double sxy = 0.0, sxx = 0.0;
    for (const auto& p : points) {
        const double w = detail::point_weight(p);
        sxy += w * p.x * p.y;
        sxx += w * p.x * p.x;
    }
    if (!(sxx > 0.0)) throw std::invalid_argument("noise fit needs at least one point with x > 0");
    const double slope = sxy / sxx;
    double rss = 0.0;
    for (const auto& p : points) {
        const double r = p.y - slope * p.x;
        rss += detail::point_weight(p) * r * r;
    }
    const std::size_t dof = points.size() - 1;
    const double var = dof > 0 ? rss / static_cast<double>(dof) / sxx : 0.0;

    FitResult result;
    result.model = FitModel::noise_linear;
    result.parameters = {{"slope_hz_per_w", slope, std::sqrt(var)}};
    result.covariance = {var};
    result.residual_sum_squares = rss;
    result.iterations = 1;
    result.converged = true;
    result.accepted_rss = {rss};
    return result;
}

struct BandPoint {
    double x;
    double y_hat;
    double y_err;
};

/// Model prediction with first-order propagated parameter uncertainty.
inline std::vector<BandPoint> predict_with_band(const FitResult& fit, std::span<const double> xs) {
    if (!fit.converged) throw std::invalid_argument("cannot predict from an unconverged fit");
    std::vector<BandPoint> out;
    out.reserve(xs.size());
    for (double x : xs) {
        if (!(x >= 0.0)) throw std::invalid_argument("prediction grid needs x >= 0");
        if (fit.model == FitModel::noise_linear) {
            const double slope = fit.parameters.at(0).value;
            out.push_back({x, slope * x, std::sqrt(fit.covariance.at(0)) * x});
            continue;
        }
        const double eta = fit.parameters.at(0).value;
        const double alpha = fit.parameters.at(1).value;
        const auto g = conversion_curve_gradient(eta, alpha, fit.waveguide_length_m, x);
        const auto& c = fit.covariance;
        const double var = g[0] * g[0] * c.at(0) + 2.0 * g[0] * g[1] * c.at(1) + g[1] * g[1] * c.at(3);
        const double err = std::isnan(var) ? std::numeric_limits<double>::infinity() : std::sqrt(std::max(0.0, var));
        out.push_back({x, conversion_curve_value(eta, alpha, fit.waveguide_length_m, x), err});
    }
    return out;
}

} // namespace qfclink
