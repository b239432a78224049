#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "extremals.hpp"
#include "fespace.hpp"
#include "functionals.hpp"
#include "quadrature.hpp"

namespace sobolevlab {

enum class DistanceMetric { SobolevP, Quasi };

inline const char* to_string(DistanceMetric m) {
    return m == DistanceMetric::SobolevP ? "SOBOLEV_P" : "QUASI";
}

inline constexpr double kLambdaFloor = 1.0 / 16.0;

template <int Dim>
struct FitResult {
    ExtremalParams<Dim> params;
    /// Objective at the returned parameters: ||Du - Dv||_p^p for SobolevP,
    /// the V-weighted quasi-norm for Quasi. Both are p-homogeneous in (u, c).
    double distance = 0.0;
    DistanceMetric metric = DistanceMetric::SobolevP;
    int evaluations = 0;
    bool converged = false;
    int restarts = 0;
};

struct NelderMeadResult {
    std::vector<double> x;
    double value = 0.0;
    int evaluations = 0;
    bool converged = false;
};

/// Nelder-Mead simplex search. Stops when the simplex diameter (max
/// distance of a vertex from the best one) drops below `xtol`.
inline NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f,
                                    std::vector<double> x0, const std::vector<double>& steps,
                                    double xtol = 1e-6, int max_evals = 4000) {
    const std::size_t n = x0.size();
    if (steps.size() != n) throw std::invalid_argument("nelder_mead: step size count mismatch");
    std::vector<std::vector<double>> s(n + 1, x0);
    std::vector<double> fv(n + 1);
    NelderMeadResult out;
    auto eval = [&](const std::vector<double>& x) {
        ++out.evaluations;
        const double v = f(x);
        return std::isfinite(v) ? v : std::numeric_limits<double>::max();
    };
    for (std::size_t i = 0; i < n; ++i) s[i + 1][i] += steps[i];
    for (std::size_t i = 0; i <= n; ++i) fv[i] = eval(s[i]);

    std::vector<std::size_t> idx(n + 1);
    auto point = [&](const std::vector<double>& c, const std::vector<double>& w, double t) {
        std::vector<double> r(n);
        for (std::size_t k = 0; k < n; ++k) r[k] = c[k] + t * (w[k] - c[k]);
        return r;
    };
    while (out.evaluations < max_evals) {
        std::iota(idx.begin(), idx.end(), 0);
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return fv[a] < fv[b]; });
        double diam = 0.0;
        for (std::size_t i = 1; i <= n; ++i) {
            double d = 0.0;
            for (std::size_t k = 0; k < n; ++k) d = std::max(d, std::abs(s[idx[i]][k] - s[idx[0]][k]));
            diam = std::max(diam, d);
        }
        if (diam < xtol) {
            out.converged = true;
            break;
        }
        const std::size_t worst = idx[n], second = idx[n - 1], best = idx[0];
        std::vector<double> c(n, 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < n; ++k) c[k] += s[idx[i]][k] / static_cast<double>(n);

        const auto xr = point(c, s[worst], -1.0);
        const double fr = eval(xr);
        if (fr < fv[best]) {
            const auto xe = point(c, s[worst], -2.0);
            const double fe = eval(xe);
            if (fe < fr) {
                s[worst] = xe;
                fv[worst] = fe;
            } else {
                s[worst] = xr;
                fv[worst] = fr;
            }
            continue;
        }
        if (fr < fv[second]) {
            s[worst] = xr;
            fv[worst] = fr;
            continue;
        }
        const bool outside = fr < fv[worst];
        const auto xc = point(c, outside ? xr : s[worst], 0.5);
        const double fc = eval(xc);
        if (fc < std::min(fr, fv[worst])) {
            s[worst] = xc;
            fv[worst] = fc;
            continue;
        }
        for (std::size_t i = 1; i <= n; ++i) {
            s[idx[i]] = point(s[best], s[idx[i]], 0.5);
            fv[idx[i]] = eval(s[idx[i]]);
        }
    }
    const auto b = static_cast<std::size_t>(std::min_element(fv.begin(), fv.end()) - fv.begin());
    out.x = s[b];
    out.value = fv[b];
    return out;
}

namespace detail {

/// Distance from u to U_{c,lambda,x0}, interior and exterior in one mesh pass.
template <int Dim>
double extremal_distance(const FeFunction<Dim>& u, const Extremal<Dim>& v, double p, DistanceMetric metric,
                         const QuadratureRule& rule) {
    const auto& mesh = u.mesh();
    CompensatedSum inside, vp;
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        const Vec<Dim> du = u.element_gradient(e);
        double a = 0.0, b = 0.0;
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const Vec<Dim> dv = v.gradient(mesh.map_barycentric(e, rule.point(q)));
            const double nv = dv.norm();
            const double diff = (du - dv).norm();
            double term;
            if (metric == DistanceMetric::SobolevP)
                term = std::pow(diff, p);
            else
                term = diff == 0.0 ? 0.0 : std::pow(nv + diff, p - 2.0) * diff * diff;
            a += rule.weight(q) * term;
            b += rule.weight(q) * std::pow(nv, p);
        }
        inside += a * mesh.volume(e);
        vp += b * mesh.volume(e);
    }
    const double exterior = std::pow(std::abs(v.params().c), p) - vp.value();
    const double factor = metric == DistanceMetric::SobolevP ? 1.0 : std::pow(2.0, p - 2.0);
    return inside.value() + factor * std::max(exterior, 0.0);
}

}  // namespace detail

/// Fits (c, lambda, x0) minimizing the chosen distance from u to the
/// extremal manifold, by simplex search from lambda*, lambda*/4 and 4 lambda*.
template <int Dim>
FitResult<Dim> nearest_extremal(const FeFunction<Dim>& u, double p, DistanceMetric metric,
                                const QuadratureRule& rule, bool restarts = true, int max_evals = 1500) {
    require_sobolev_range(p, Dim);
    const double gp = grad_p_norm_p(u, p);
    if (!(gp > 0.0)) throw std::invalid_argument("nearest_extremal: zero function");
    const auto& mesh = u.mesh();
    const RadialProfile profile(p, Dim);
    const double h = mesh.h();

    double mean = 0.0;
    for (Eigen::Index i = 0; i < u.coeffs().size(); ++i) mean += u.coeffs()[i];
    const double c0 = (mean < 0.0 ? -1.0 : 1.0) * std::pow(gp, 1.0 / p);
    const double lambda_star = optimal_lambda(std::min(h, 0.999), p, Dim, LambdaMode::Quasi);
    const double x0_bound = std::max(1.0 - h, 0.5);

    // coordinates: c / c0, log lambda, x0
    auto unpack = [&](const std::vector<double>& y) {
        ExtremalParams<Dim> par;
        par.c = c0 * y[0];
        par.lambda = std::exp(y[1]);
        for (int k = 0; k < Dim; ++k) par.x0[k] = y[2 + k];
        return par;
    };
    auto objective = [&](const std::vector<double>& y) {
        const ExtremalParams<Dim> par = unpack(y);
        double violation = std::max(0.0, par.x0.norm() - x0_bound) +
                           std::max(0.0, std::log(kLambdaFloor) - y[1]);
        if (violation > 0.0) return 1e6 * gp * (1.0 + violation);
        return detail::extremal_distance(u, Extremal<Dim>(profile, par), p, metric, rule);
    };

    FitResult<Dim> best;
    best.metric = metric;
    best.distance = std::numeric_limits<double>::infinity();
    const std::vector<double> factors = restarts ? std::vector<double>{1.0, 0.25, 4.0} : std::vector<double>{1.0};
    for (double factor : factors) {
        std::vector<double> y0(Dim + 2, 0.0), steps(Dim + 2, 0.05);
        y0[0] = 1.0;
        y0[1] = std::log(std::max(lambda_star * factor, kLambdaFloor));
        steps[0] = 0.1;
        steps[1] = 0.3;
        const auto r = nelder_mead(objective, y0, steps, 1e-6, max_evals);
        best.evaluations += r.evaluations;
        if (r.value < best.distance) {
            best.distance = r.value;
            best.params = unpack(r.x);
            best.converged = r.converged;
        }
    }
    best.restarts = static_cast<int>(factors.size()) - 1;
    return best;
}

template <int Dim>
FitResult<Dim> nearest_extremal(const FeFunction<Dim>& u, double p, DistanceMetric metric) {
    return nearest_extremal(u, p, metric, QuadratureRule(Dim, default_quadrature_order(Dim)));
}

/// Distance at fixed parameters, for spot checks of a fit.
template <int Dim>
double extremal_distance(const FeFunction<Dim>& u, const ExtremalParams<Dim>& par, double p,
                         DistanceMetric metric, const QuadratureRule& rule) {
    return detail::extremal_distance(u, Extremal<Dim>(RadialProfile(p, Dim), par), p, metric, rule);
}

struct DeficitSandwich {
    double deficit = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    /// deficit / lower and upper / deficit; NaN when undefined.
    double ratio_lower = std::numeric_limits<double>::quiet_NaN();
    double ratio_upper = std::numeric_limits<double>::quiet_NaN();
    bool ratios_defined = false;
    /// ||Du - Dv||_p / ||Du||_p
    double relative_distance = 0.0;
    /// relative_distance small enough for the upper bound to apply
    bool in_regime = true;
    double quasi_v = 0.0;
    double quasi_u = 0.0;
    double mixed = 0.0;
};

/// Lower and upper deficit expressions at the fitted extremal v:
///   lower = int (|Du-Dv| + |Dv|)^{p-2}|Du-Dv|^2 / ||Du||^p + (||Du-Dv|| / ||Du||)^{max(2,p)}
///   upper = int (|Du| + |Du-Dv|)^{p-2}|Du-Dv|^2 / ||Du||^p  [+ (int |Dv|^{p-1}|Du-Dv| / ||Du||^p)^2, p < 2]
template <int Dim>
DeficitSandwich deficit_sandwich(const FeFunction<Dim>& u, const FitResult<Dim>& fit, double p,
                                 const QuadratureRule& rule) {
    const RadialProfile profile(p, Dim);
    const Extremal<Dim> v(profile, fit.params);
    DeficitSandwich out;
    const DeficitReport d = deficit(u, p, profile.sobolev_constant(), rule);
    out.deficit = d.deficit;
    const double gp = d.grad_p_norm_p;
    out.quasi_v = quasinorm_sq(u, v, p, WeightMode::VWeight, rule);
    out.quasi_u = quasinorm_sq(u, v, p, WeightMode::UWeight, rule);
    const double dist_p = std::max(sobolev_distance_p(u, v, p, rule), 0.0);
    out.relative_distance = std::pow(dist_p / gp, 1.0 / p);
    out.lower = out.quasi_v / gp + std::pow(out.relative_distance, std::max(2.0, p));
    out.upper = out.quasi_u / gp;
    if (p < 2.0) {
        out.mixed = mixed_term(u, v, p, rule);
        out.upper += std::pow(out.mixed / gp, 2.0);
    }
    out.in_regime = out.relative_distance <= 0.5;
    out.ratios_defined = out.deficit >= kDeficitResolution && out.lower > 0.0;
    if (out.ratios_defined) {
        out.ratio_lower = out.deficit / out.lower;
        out.ratio_upper = out.upper / out.deficit;
    }
    return out;
}

}  // namespace sobolevlab
