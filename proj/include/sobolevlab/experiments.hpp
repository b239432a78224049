#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "checks.hpp"
#include "extremals.hpp"
#include "manifold.hpp"
#include "mesh.hpp"
#include "solver.hpp"

namespace sobolevlab {

struct ConvergenceRow {
    int level = 0;
    double h = 0.0;
    double S_h = 0.0;
    /// S_h - S_ref
    double gap = 0.0;
    double witness = 0.0;
    /// ||Du_h - Dv||_p / ||Du_h||_p at the fitted nearest extremal v
    double nearest_distance = 0.0;
    bool converged = false;
    int iterations = 0;
    bool used_restart = false;
};

struct RateFit {
    double slope = std::numeric_limits<double>::quiet_NaN();
    double intercept = std::numeric_limits<double>::quiet_NaN();
    double residual = std::numeric_limits<double>::quiet_NaN();
    int rows_used = 0;
    std::string notes;
};

/// Least squares on (log h, log gap). Rows with nonpositive gap are
/// excluded and noted; fewer than three usable rows is an error.
inline RateFit fit_rate(const std::vector<double>& h, const std::vector<double>& gap) {
    if (h.size() != gap.size()) throw std::invalid_argument("fit_rate: size mismatch");
    std::vector<double> lx, ly;
    RateFit fit;
    for (std::size_t i = 0; i < h.size(); ++i) {
        if (!(gap[i] > 0.0) || !(h[i] > 0.0)) {
            fit.notes += "row " + std::to_string(i) + " excluded (nonpositive); ";
            continue;
        }
        lx.push_back(std::log(h[i]));
        ly.push_back(std::log(gap[i]));
    }
    if (lx.size() < 3) throw std::invalid_argument("fit_rate: at least three rows with positive gap required");
    const auto [b, a, r] = detail::least_squares(lx, ly);
    fit.slope = b;
    fit.intercept = a;
    fit.residual = r;
    fit.rows_used = static_cast<int>(lx.size());
    return fit;
}

struct ConvergenceOptions {
    int min_level = 1;
    /// rows with level >= fit_min_level enter the fits
    int fit_min_level = 2;
    SolverOptions solver;
    /// fit the nearest extremal at every level (the nearest_distance column)
    bool nearest = true;
    /// tolerance on |slope - alpha| for the rate flags
    double rate_tol = 0.2;
    double bracket_tol = 0.2;
};

struct ConvergenceReport {
    double p = 0.0;
    int N = 0;
    std::vector<ConvergenceRow> rows;
    RateFit fit;
    RateFit witness_fit;
    double alpha_target = 0.0;
    double gamma_min = 0.0;
    double gamma_max = 0.0;
    double S_ref = 0.0;
    bool inconclusive = false;
    bool rate_pass = false;
    bool witness_rate_pass = false;
    bool bracket_pass = false;
    bool witness_bound_pass = false;
    bool gaps_positive = false;
    double runtime_seconds = 0.0;
};

template <int Dim>
ConvergenceReport run_convergence(double p, int max_level, const ConvergenceOptions& opts = {}) {
    require_sobolev_range(p, Dim);
    if (max_level < 3) throw std::invalid_argument("run_convergence: max_level must be at least 3");
    const auto start = std::chrono::steady_clock::now();
    ConvergenceReport rep;
    rep.p = p;
    rep.N = Dim;
    rep.S_ref = sobolev_constant_ref(p, Dim);
    rep.alpha_target = alpha_exponent(p, Dim);
    const double g = gamma_exponent(p, Dim);
    rep.gamma_min = g * std::min(2.0, p);
    rep.gamma_max = g * std::max(2.0, p);

    const QuadratureRule rule(Dim, opts.solver.quadrature_order > 0 ? opts.solver.quadrature_order
                                                                     : default_quadrature_order(Dim));
    rep.witness_bound_pass = true;
    rep.gaps_positive = true;
    for (int level = opts.min_level; level <= max_level; ++level) {
        const auto mesh = make_ball_mesh<Dim>(level);
        const SolveResult<Dim> res = solve_sh<Dim>(mesh, p, opts.solver);
        ConvergenceRow row;
        row.level = level;
        row.h = mesh->h();
        row.S_h = res.S_h;
        row.gap = res.S_h - rep.S_ref;
        row.witness = res.witness_quotient;
        row.converged = res.converged;
        row.iterations = res.iterations;
        row.used_restart = res.used_restart;
        if (opts.nearest) {
            const auto fitres = nearest_extremal(res.u_h, p, DistanceMetric::SobolevP, rule, false, 800);
            row.nearest_distance = std::pow(fitres.distance / grad_p_norm_p(res.u_h, p), 1.0 / p);
        } else {
            row.nearest_distance = std::numeric_limits<double>::quiet_NaN();
        }
        rep.witness_bound_pass = rep.witness_bound_pass && row.S_h <= row.witness;
        if (row.converged) rep.gaps_positive = rep.gaps_positive && row.gap > 0.0;
        rep.rows.push_back(row);
    }

    std::vector<double> hs, gaps, wgaps;
    for (const auto& r : rep.rows) {
        if (r.level < opts.fit_min_level || !r.converged) continue;
        hs.push_back(r.h);
        gaps.push_back(r.gap);
        wgaps.push_back(r.witness - rep.S_ref);
    }
    try {
        rep.fit = fit_rate(hs, gaps);
        rep.witness_fit = fit_rate(hs, wgaps);
    } catch (const std::invalid_argument& e) {
        rep.inconclusive = true;
        rep.fit.notes = e.what();
    }
    if (!rep.inconclusive) {
        rep.rate_pass = std::abs(rep.fit.slope - rep.alpha_target) <= opts.rate_tol;
        rep.witness_rate_pass = std::abs(rep.witness_fit.slope - rep.alpha_target) <= opts.rate_tol;
        auto in_bracket = [&](double s) {
            return s >= rep.gamma_min - opts.bracket_tol && s <= rep.gamma_max + opts.bracket_tol;
        };
        rep.bracket_pass = in_bracket(rep.fit.slope) && in_bracket(rep.witness_fit.slope);
    }
    rep.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rep;
}

inline void write_convergence_csv(std::ostream& os, const ConvergenceReport& rep) {
    os << "level,h,S_h,gap,witness,nearest_distance\n" << std::setprecision(17);
    for (const auto& r : rep.rows)
        os << r.level << ',' << r.h << ',' << r.S_h << ',' << r.gap << ',' << r.witness << ','
           << r.nearest_distance << '\n';
}

inline nlohmann::json convergence_summary(const ConvergenceReport& rep) {
    auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
    nlohmann::json j;
    j["p"] = rep.p;
    j["N"] = rep.N;
    j["S_ref"] = rep.S_ref;
    j["fitted_slope"] = num(rep.fit.slope);
    j["fit_residual"] = num(rep.fit.residual);
    j["fit_rows"] = rep.fit.rows_used;
    j["witness_slope"] = num(rep.witness_fit.slope);
    j["witness_residual"] = num(rep.witness_fit.residual);
    j["alpha_target"] = rep.alpha_target;
    j["gamma_min"] = rep.gamma_min;
    j["gamma_max"] = rep.gamma_max;
    j["inconclusive"] = rep.inconclusive;
    j["pass"] = {{"rate", rep.rate_pass},
                 {"witness_rate", rep.witness_rate_pass},
                 {"bracket", rep.bracket_pass},
                 {"witness_bound", rep.witness_bound_pass},
                 {"gaps_positive", rep.gaps_positive}};
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : rep.rows)
        rows.push_back({{"level", r.level},
                        {"converged", r.converged},
                        {"iterations", r.iterations},
                        {"used_restart", r.used_restart},
                        {"prefactor", r.gap / std::pow(r.h, rep.alpha_target)}});
    j["rows"] = rows;
    if (!rep.fit.notes.empty()) j["notes"] = rep.fit.notes;
    return j;
}

inline void save_convergence(const std::filesystem::path& dir, const ConvergenceReport& rep) {
    std::filesystem::create_directories(dir);
    std::ofstream csv(dir / "rates.csv");
    if (!csv) throw std::runtime_error("cannot write " + (dir / "rates.csv").string());
    write_convergence_csv(csv, rep);
    std::ofstream js(dir / "summary.json");
    if (!js) throw std::runtime_error("cannot write " + (dir / "summary.json").string());
    js << convergence_summary(rep).dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Lemma suite
// ---------------------------------------------------------------------------

struct SandwichRow {
    int level = 0;
    DeficitSandwich sandwich;
};

/// Deficit sandwich on interpolated extremals (lambda* per level): the
/// ratios deficit/lower and upper/deficit may vary by at most `max_spread`
/// across levels, and all three quantities must be positive.
template <int Dim>
CheckReport check_deficit_sandwich(double p, const std::vector<int>& levels, double max_spread = 3.0,
                                   std::vector<SandwichRow>* rows = nullptr) {
    const RadialProfile prof(p, Dim);
    const QuadratureRule rule(Dim, default_quadrature_order(Dim));
    double lo_l = std::numeric_limits<double>::infinity(), hi_l = 0.0;
    double lo_u = lo_l, hi_u = 0.0;
    bool directions = true;
    for (int level : levels) {
        const auto mesh = make_ball_mesh<Dim>(level);
        const double lam = optimal_lambda(std::min(mesh->h(), 0.999), p, Dim, LambdaMode::Quasi);
        const FeFunction<Dim> u = witness_function(mesh, prof, lam);
        const auto fit = nearest_extremal(u, p, DistanceMetric::SobolevP, rule, Dim == 2, 800);
        const DeficitSandwich s = deficit_sandwich(u, fit, p, rule);
        if (rows) rows->push_back({level, s});
        directions = directions && s.deficit > 0.0 && s.lower > 0.0 && s.upper > 0.0 && s.ratios_defined;
        if (s.ratios_defined) {
            lo_l = std::min(lo_l, s.ratio_lower);
            hi_l = std::max(hi_l, s.ratio_lower);
            lo_u = std::min(lo_u, s.ratio_upper);
            hi_u = std::max(hi_u, s.ratio_upper);
        }
    }
    CheckReport r;
    r.name = "deficit_sandwich";
    r.anchor = p >= 2.0 ? "c quasi_V/|Du|^p + c dist^max(2,p) <= deficit <= C quasi_U/|Du|^p"
                        : "c quasi_V/|Du|^p + c dist^max(2,p) <= deficit <= C (quasi_U/|Du|^p + mixed^2/|Du|^2p)";
    r.params = {{"N", Dim}, {"p", p}, {"level_min", levels.front()}, {"level_max", levels.back()}};
    r.samples = static_cast<long>(levels.size());
    r.constants = {{"lower_ratio_min", lo_l},
                   {"lower_ratio_max", hi_l},
                   {"upper_ratio_min", lo_u},
                   {"upper_ratio_max", hi_u},
                   {"lower_spread", hi_l / lo_l},
                   {"upper_spread", hi_u / lo_u}};
    r.passed = directions && hi_l / lo_l <= max_spread && hi_u / lo_u <= max_spread;
    return r;
}

/// All checks with default grids for (p, N).
template <int Dim>
std::vector<CheckReport> run_lemma_suite(double p, std::uint64_t seed) {
    require_sobolev_range(p, Dim);
    std::vector<CheckReport> out;
    auto append = [&](std::vector<CheckReport> v) {
        for (auto& r : v) out.push_back(std::move(r));
    };
    for (double q : {p, 1.5, 2.0, 3.0}) append(check_elementary_inequalities(q, 100000, seed));

    out.push_back(check_gradient_lower_bound_1d(2.0));
    out.push_back(check_gradient_lower_bound_1d(p));
    const int gl_level = Dim == 2 ? 3 : 2;
    out.push_back(check_gradient_lower_bound<Dim>(QuadraticField<Dim>{}, "quadratic", gl_level, p));
    {
        const RadialProfile prof(p, Dim);
        ExtremalParams<Dim> par;
        par.lambda = 4.0;
        out.push_back(check_gradient_lower_bound<Dim>(Extremal<Dim>(prof, par), "extremal", gl_level, p));
    }

    append(check_interp_scalings<Dim>(p, InterpScalingGrids::defaults(Dim)));

    out.push_back(check_tail_bracket<Dim>(p));
    out.push_back(check_small_lambda_exponent<Dim>(p));
    out.push_back(check_offcenter_tail<Dim>(p));
    out.push_back(check_hessian_envelope<Dim>(p, 1000, seed));
    out.push_back(check_hessian_integral<Dim>(p));
    if (p > 2.0) out.push_back(check_laplacian_lower<Dim>(p));

    const std::vector<int> sandwich_levels = Dim == 2 ? std::vector<int>{3, 4, 5} : std::vector<int>{2, 3, 4};
    out.push_back(check_deficit_sandwich<Dim>(p, sandwich_levels));
    return out;
}

}  // namespace sobolevlab
