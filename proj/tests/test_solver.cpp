#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include <sobolevlab/solver.hpp>

using namespace sobolevlab;

namespace {

template <int Dim>
Eigen::VectorXd random_tangent(const Mesh<Dim>& m, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(m.num_vertices());
    for (std::size_t i = 0; i < m.num_vertices(); ++i)
        if (!m.is_boundary(i)) v[i] = n(rng);
    return v;
}

template <int Dim>
void directional_derivative_check(double p, double eps, int level) {
    const auto m = make_ball_mesh<Dim>(level);
    const QuadratureRule rule(Dim, default_quadrature_order(Dim));
    const RadialProfile prof(p, Dim);
    const auto u = witness_function(m, prof, optimal_lambda(std::min(m->h(), 0.999), p, Dim, LambdaMode::Quasi));
    const Eigen::VectorXd g = quotient_gradient(u, p, eps, rule);
    std::mt19937_64 rng(17);
    for (int k = 0; k < 5; ++k) {
        const Eigen::VectorXd v = random_tangent(*m, rng);
        const double t = 1e-6 * u.coeffs().cwiseAbs().maxCoeff() / v.cwiseAbs().maxCoeff();
        const double fp = regularized_quotient(FeFunction<Dim>(m, u.coeffs() + t * v), p, eps, rule);
        const double fm = regularized_quotient(FeFunction<Dim>(m, u.coeffs() - t * v), p, eps, rule);
        const double fd = (fp - fm) / (2.0 * t);
        const double an = g.dot(v);
        EXPECT_NEAR(an, fd, 1e-5 * std::abs(fd)) << "direction " << k;
    }
    // Euler relation for the 0-homogeneous quotient
    if (eps == 0.0) EXPECT_NEAR(g.dot(u.coeffs()), 0.0, 1e-10 * g.norm() * u.coeffs().norm());
}

template <int Dim>
void check_invariants(const SolveResult<Dim>& r, double p) {
    const double S = sobolev_constant_ref(p, Dim);
    EXPECT_GE(r.S_h, S - 1e-6);
    EXPECT_LE(r.S_h, r.witness_quotient);
    ASSERT_FALSE(r.history.empty());
    for (std::size_t i = 1; i < r.history.size(); ++i) EXPECT_LE(r.history[i], r.history[i - 1]) << "step " << i;
    for (double v : r.history) EXPECT_GE(v, S - 1e-6);
    EXPECT_LE(r.history.back(), r.history.front());
    EXPECT_TRUE(r.u_h.vanishes_on_boundary());
    EXPECT_LE(r.lpstar_check.relative_change, 1e-8);
    EXPECT_NEAR(lpstar_norm(r.u_h, p, QuadratureRule(Dim, 2 * default_quadrature_order(Dim))), 1.0, 1e-8);
}

}  // namespace

TEST(Solver, QuotientGradientFiniteDifferences3D) { directional_derivative_check<3>(2.0, 0.0, 2); }

TEST(Solver, QuotientGradientFiniteDifferences2D) {
    directional_derivative_check<2>(1.5, 0.0, 3);
    directional_derivative_check<2>(1.5, 1e-2, 3);
}

TEST(Solver, RegularizedQuotientReducesToRayleigh) {
    const auto m = make_ball_mesh<2>(3);
    const QuadratureRule rule(2, 8);
    const auto u = witness_function(m, RadialProfile(1.5, 2), 2.0);
    EXPECT_NEAR(regularized_quotient(u, 1.5, 0.0, rule), rayleigh(u, 1.5, rule), 1e-13);
    EXPECT_GT(regularized_quotient(u, 1.5, 1e-2, rule), rayleigh(u, 1.5, rule));
}

TEST(Solver, Smoke2D) {
    const double p = 1.5;
    const auto m = make_ball_mesh<2>(3);
    const auto r = solve_sh<2>(m, p);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(r.projected_gradient, SolverOptions{}.grad_tol);
    check_invariants(r, p);
    EXPECT_LT(r.S_h, r.witness_quotient);
    // continuation floor against the unregularized quotient of the final iterate
    EXPECT_NEAR(r.quotient_at_floor, r.S_h, 1e-7);
}

TEST(Solver, CriticalPoint3D) {
    const double p = 2.0;
    const auto m = make_ball_mesh<3>(2);
    const auto r = solve_sh<3>(m, p);
    EXPECT_TRUE(r.converged);
    EXPECT_LT(r.projected_gradient, SolverOptions{}.grad_tol);
    check_invariants(r, p);
    // stationarity in the plain Euclidean sense as well
    const QuadratureRule rule(3, 6);
    const Eigen::VectorXd g = quotient_gradient(r.u_h, p, 0.0, rule);
    const auto w = witness_function(m, RadialProfile(p, 3), r.lambda_star);
    const Eigen::VectorXd gw = quotient_gradient(w, p, 0.0, rule);
    EXPECT_LT(g.norm() / r.u_h.coeffs().norm(), 1e-4 * gw.norm() / w.coeffs().norm());
}

TEST(Solver, RefinementTrend) {
    const double p = 1.5;
    double prev = INFINITY;
    for (int l = 1; l <= 5; ++l) {
        const auto r = solve_sh<2>(make_ball_mesh<2>(l), p);
        EXPECT_LT(r.S_h, prev + 1e-8) << "level " << l;
        prev = r.S_h;
    }
}

TEST(Solver, WarmStartAndDeterminism) {
    const double p = 1.5;
    const auto m = make_ball_mesh<2>(3);
    const auto a = solve_sh<2>(m, p);
    const auto b = solve_sh<2>(m, p);
    EXPECT_EQ(a.S_h, b.S_h);
    EXPECT_EQ(a.history, b.history);
    const auto c = solve_sh<2>(m, p, SolverOptions{}, &a.u_h);
    EXPECT_NEAR(c.S_h, a.S_h, 1e-9);
}

TEST(Solver, WitnessIsUpperBound) {
    for (int l = 1; l <= 3; ++l) {
        const auto m = make_ball_mesh<3>(l);
        const auto r = solve_sh<3>(m, 2.0);
        const auto w = witness_function(m, RadialProfile(2.0, 3), r.lambda_star);
        EXPECT_NEAR(r.witness_quotient, rayleigh(w, 2.0, QuadratureRule(3, 6)), 1e-14);
        EXPECT_LE(r.S_h, r.witness_quotient);
    }
}

TEST(Solver, OptionValidation) {
    const auto m = make_ball_mesh<2>(1);
    SolverOptions o;
    o.epsilon_schedule = {1e-2, 1e-2};
    EXPECT_THROW(solve_sh<2>(m, 1.5, o), std::invalid_argument);
    o.epsilon_schedule = {1e-2, 1e-12};
    EXPECT_THROW(solve_sh<2>(m, 1.5, o), std::invalid_argument);
    o = SolverOptions{};
    o.grad_tol = 0.0;
    EXPECT_THROW(solve_sh<2>(m, 1.5, o), std::invalid_argument);
    EXPECT_THROW(solve_sh<2>(m, 2.0), std::invalid_argument);
    std::vector<Vec<2>> v = {Vec<2>(1, 0), Vec<2>(-0.5, 0.8), Vec<2>(-0.5, -0.8)};
    const auto bare = std::make_shared<const Mesh<2>>(v, std::vector<Element<2>>{{0, 1, 2}},
                                                      std::vector<std::uint8_t>{1, 1, 1});
    EXPECT_THROW(solve_sh<2>(bare, 1.5), std::invalid_argument);
}
