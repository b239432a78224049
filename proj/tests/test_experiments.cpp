#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include <sobolevlab/experiments.hpp>

using namespace sobolevlab;

TEST(Experiments, FitRateExactPowerLaw) {
    std::vector<double> h, g;
    for (double x = 0.5; x > 0.01; x *= 0.5) {
        h.push_back(x);
        g.push_back(std::pow(x, 2.0 / 3.0));
    }
    const auto f = fit_rate(h, g);
    EXPECT_NEAR(f.slope, 2.0 / 3.0, 1e-12);
    EXPECT_NEAR(f.residual, 0.0, 1e-12);
    EXPECT_EQ(f.rows_used, static_cast<int>(h.size()));
}

TEST(Experiments, FitRatePerturbedPowerLaw) {
    std::vector<double> h, g;
    for (double x = 0.25; x >= 1.0 / 64.0; x *= 0.5) {
        h.push_back(x);
        g.push_back(3.0 * std::pow(x, 2.0 / 3.0) * (1.0 + 0.1 * x));
    }
    EXPECT_NEAR(fit_rate(h, g).slope, 2.0 / 3.0, 0.03);
}

TEST(Experiments, FitRateErrorPaths) {
    EXPECT_THROW(fit_rate({0.5, 0.25}, {1.0, 0.5}), std::invalid_argument);
    EXPECT_THROW(fit_rate({0.5, 0.25, 0.125}, {1.0, 0.5}), std::invalid_argument);
    const auto f = fit_rate({0.5, 0.25, 0.125, 0.0625}, {1.0, -0.1, 0.25, 0.125});
    EXPECT_EQ(f.rows_used, 3);
    EXPECT_NE(f.notes.find("row 1"), std::string::npos);
    EXPECT_THROW(fit_rate({0.5, 0.25, 0.125, 0.0625}, {1.0, -0.1, 0.0, 0.125}), std::invalid_argument);
}

TEST(Experiments, ConvergenceHeadline2D) {
    const auto rep = run_convergence<2>(1.5, 5);
    EXPECT_DOUBLE_EQ(rep.alpha_target, 2.0 / 3.0);
    EXPECT_NEAR(rep.gamma_min, 0.6, 1e-15);
    EXPECT_NEAR(rep.gamma_max, 0.8, 1e-15);
    ASSERT_EQ(rep.rows.size(), 5u);
    for (const auto& r : rep.rows) {
        EXPECT_GT(r.gap, -1e-6);
        EXPECT_LE(r.S_h, r.witness);
        EXPECT_TRUE(r.converged);
        EXPECT_GT(r.nearest_distance, 0.0);
        EXPECT_LT(r.nearest_distance, 1.0);
    }
    EXPECT_FALSE(rep.inconclusive);
    EXPECT_EQ(rep.fit.rows_used, 4);
    EXPECT_NEAR(rep.fit.slope, rep.alpha_target, 0.2);
    EXPECT_TRUE(rep.rate_pass);
    EXPECT_TRUE(rep.gaps_positive);
    EXPECT_TRUE(rep.witness_bound_pass);
    if (rep.rate_pass) EXPECT_TRUE(rep.bracket_pass);

    std::ostringstream csv;
    write_convergence_csv(csv, rep);
    EXPECT_EQ(csv.str().substr(0, csv.str().find('\n')), "level,h,S_h,gap,witness,nearest_distance");
    const auto j = convergence_summary(rep);
    for (const char* key : {"fitted_slope", "alpha_target", "gamma_min", "gamma_max", "pass"})
        EXPECT_TRUE(j.contains(key)) << key;
    EXPECT_EQ(j["rows"].size(), 5u);
}

TEST(Experiments, ConvergenceAlphaIn3D) {
    ConvergenceOptions o;
    o.nearest = false;
    const auto rep = run_convergence<3>(2.0, 3, o);
    EXPECT_DOUBLE_EQ(rep.alpha_target, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(rep.gamma_min, 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(rep.gamma_max, 2.0 / 3.0);
    for (const auto& r : rep.rows) EXPECT_TRUE(std::isnan(r.nearest_distance));
}

TEST(Experiments, ReportDeterminism) {
    ConvergenceOptions o;
    o.nearest = false;
    const auto a = run_convergence<2>(1.5, 4, o);
    const auto b = run_convergence<2>(1.5, 4, o);
    std::ostringstream ca, cb;
    write_convergence_csv(ca, a);
    write_convergence_csv(cb, b);
    EXPECT_EQ(ca.str(), cb.str());
    EXPECT_EQ(convergence_summary(a).dump(), convergence_summary(b).dump());
}

TEST(Experiments, InconclusiveWhenSolverStops) {
    ConvergenceOptions o;
    o.nearest = false;
    o.solver.max_iters = 1;
    const auto rep = run_convergence<2>(1.5, 3, o);
    EXPECT_TRUE(rep.inconclusive);
    EXPECT_FALSE(rep.rate_pass);
    for (const auto& r : rep.rows) EXPECT_FALSE(r.converged);
    EXPECT_TRUE(convergence_summary(rep)["fitted_slope"].is_null());
}

TEST(Experiments, Preconditions) {
    EXPECT_THROW(run_convergence<2>(1.5, 2), std::invalid_argument);
    EXPECT_THROW(run_convergence<2>(2.5, 4), std::invalid_argument);
}

TEST(Experiments, LemmaSuiteDefault2D) {
    const auto reports = run_lemma_suite<2>(1.5, 20240611);
    EXPECT_GE(reports.size(), 20u);
    for (const auto& r : reports) EXPECT_TRUE(r.passed) << r.name << " " << r.notes;
    std::ostringstream os;
    write_check_csv(os, reports);
    const std::string csv = os.str();
    EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), reports.size() + 1);
}

TEST(Experiments, SuperquadraticDeficitBranch) {
    // p >= 2: no mixed term, the upper expression is the U-weighted quasi-norm alone
    const double p = 2.5;
    const auto m = make_ball_mesh<3>(2);
    const QuadratureRule rule(3, 6);
    const auto u = witness_function(m, RadialProfile(p, 3), 1.0);
    const auto fit = nearest_extremal(u, p, DistanceMetric::SobolevP, rule, false, 400);
    const auto s = deficit_sandwich(u, fit, p, rule);
    EXPECT_EQ(s.mixed, 0.0);
    EXPECT_NEAR(s.upper, s.quasi_u / grad_p_norm_p(u, p), 1e-15);
    EXPECT_GT(s.deficit, 0.0);
    EXPECT_GT(s.lower, 0.0);
    const auto ineq = check_elementary_inequalities(p, 100000, 1);
    for (const auto& r : ineq) EXPECT_TRUE(r.passed) << r.name;
}
