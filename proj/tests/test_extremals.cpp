#include <algorithm>
#include <cmath>
#include <random>

#include <boost/math/special_functions/beta.hpp>
#include <gtest/gtest.h>

#include <sobolevlab/extremals.hpp>

using namespace sobolevlab;

namespace {

// integral_0^inf r^a (1 + r^b)^{-c} dr = B((a+1)/b, c - (a+1)/b) / b
double beta_radial(double a, double b, double c) {
    const double s = (a + 1.0) / b;
    return boost::math::beta(s, c - s) / b;
}

// k0 from the closed form: |u0'|^p r^{N-1} = k0^p kfac^p r^{N-1+q} (1+r^q)^{-N}
double k0_oracle(double p, int N) {
    const double q = p / (p - 1.0), kfac = (N - p) / (p - 1.0);
    const double raw = sphere_area(N) * std::pow(kfac, p) * beta_radial(N - 1.0 + q, q, N);
    return std::pow(raw, -1.0 / p);
}

// |u0|^{p*} r^{N-1} = k0^{p*} r^{N-1} (1+r^q)^{-N}
double sobolev_oracle(double p, int N) {
    const double q = p / (p - 1.0), ps = sobolev_conjugate(p, N);
    const double m = sphere_area(N) * std::pow(k0_oracle(p, N), ps) * beta_radial(N - 1.0, q, N);
    return 1.0 / std::pow(m, 1.0 / ps);
}

struct Case {
    double p;
    int N;
};
const Case kCases[] = {{1.5, 2}, {1.2, 2}, {1.8, 2}, {2.0, 3}, {1.5, 3}, {2.5, 3}};

template <int Dim>
ExtremalParams<Dim> random_params(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(-0.5, 0.5);
    ExtremalParams<Dim> par;
    par.c = 0.5 + (d(rng) + 0.5) * 2.0;
    par.lambda = std::exp(3.0 * d(rng));
    for (int k = 0; k < Dim; ++k) par.x0[k] = d(rng);
    return par;
}

template <int Dim>
void finite_difference_check(double p) {
    std::mt19937_64 rng(42);
    const RadialProfile prof(p, Dim);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int i = 0; i < 20; ++i) {
        auto par = random_params<Dim>(rng);
        par.lambda = std::clamp(par.lambda, 0.5, 2.0);
        const Extremal<Dim> U(prof, par);
        // scaled radius in [0.05, 5], where the gradient is not lost to cancellation
        Vec<Dim> dir;
        do {
            for (int k = 0; k < Dim; ++k) dir[k] = d(rng);
        } while (dir.norm() < 0.1 || dir.norm() > 1.0);
        const double r = 0.05 + 4.95 * std::abs(d(rng));
        const Vec<Dim> x = par.x0 + dir.normalized() * (r / U.dilation());
        // step 1e-5 in the scaled variable
        const double h = 1e-5 / U.dilation();
        Vec<Dim> g_fd;
        Mat<Dim> h_fd;
        for (int k = 0; k < Dim; ++k) {
            Vec<Dim> e = Vec<Dim>::Zero();
            e[k] = h;
            g_fd[k] = (U.value(x + e) - U.value(x - e)) / (2 * h);
            h_fd.col(k) = (U.gradient(x + e) - U.gradient(x - e)) / (2 * h);
        }
        const Vec<Dim> g = U.gradient(x);
        EXPECT_LE((g - g_fd).norm(), 1e-6 * g.norm()) << "sample " << i;
        EXPECT_NEAR(U.gradient_norm(x), g.norm(), 1e-13 * g.norm());
        const Mat<Dim> H = U.hessian(x);
        EXPECT_LE((H - h_fd).norm(), 1e-6 * H.norm()) << "sample " << i;
        EXPECT_LE((H - H.transpose()).norm(), 1e-14 * H.norm());
    }
}

}  // namespace

TEST(Extremals, Exponents) {
    EXPECT_DOUBLE_EQ(alpha_exponent(2.0, 3), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(alpha_exponent(1.5, 2), 2.0 / 3.0);
    EXPECT_DOUBLE_EQ(gamma_exponent(1.5, 2), 0.4);
    EXPECT_DOUBLE_EQ(gamma_exponent(2.0, 3), 1.0 / 3.0);
    EXPECT_THROW(require_sobolev_range(2.0, 2), std::invalid_argument);
    EXPECT_THROW(require_sobolev_range(1.0, 3), std::invalid_argument);
    EXPECT_THROW(RadialProfile(1.5, 4), std::invalid_argument);
}

TEST(Extremals, K0AgainstBetaOracle) {
    for (const auto& c : kCases) {
        const RadialProfile prof(c.p, c.N);
        EXPECT_NEAR(prof.k0(), k0_oracle(c.p, c.N), 1e-10 * prof.k0()) << c.p << "," << c.N;
        EXPECT_NEAR(prof.seminorm_p(), 1.0, 1e-10);
        EXPECT_NEAR(compute_k0(c.p, c.N), prof.k0(), 0.0);
    }
}

TEST(Extremals, SobolevConstantAgainstBetaOracle) {
    for (const auto& c : kCases)
        EXPECT_NEAR(sobolev_constant_ref(c.p, c.N), sobolev_oracle(c.p, c.N), 1e-9) << c.p << "," << c.N;
}

TEST(Extremals, SobolevConstantClosedFormAtPEqualsTwo) {
    // N = 3, p = 2: S = sqrt(pi N (N-2)) (Gamma(N/2) / Gamma(N))^{1/N}
    const double N = 3.0;
    const double S = std::sqrt(M_PI * N * (N - 2.0)) * std::pow(std::tgamma(N / 2.0) / std::tgamma(N), 1.0 / N);
    EXPECT_NEAR(sobolev_constant_ref(2.0, 3), S, 1e-10);
    EXPECT_NEAR(sobolev_constant_ref(2.0, 3), 2.340492275042011, 1e-12);
    EXPECT_NEAR(sobolev_constant_ref(1.5, 2), 2.526183904594747, 1e-12);
}

TEST(Extremals, QuotientInvariantUnderDilation) {
    for (const auto& c : kCases) {
        const RadialProfile prof(c.p, c.N);
        const double lam = 7.0, s = std::pow(lam, prof.beta()), ps = prof.p_star();
        // U_lambda(x) = lambda u0(s |x|)
        const double grad = sphere_area(c.N) * radial_integral(
                                                   [&](double r) {
                                                       if (r <= 0.0 || !std::isfinite(s * r)) return 0.0;
                                                       const double g = lam * s * std::abs(prof.du0(s * r));
                                                       return g == 0.0 ? 0.0 : std::exp(c.p * std::log(g) + (c.N - 1.0) * std::log(r));
                                                   },
                                                   0.0, INFINITY, prof.q());
        const double mass = sphere_area(c.N) * radial_integral(
                                                   [&](double r) {
                                                       if (r <= 0.0 || !std::isfinite(s * r)) return 0.0;
                                                       const double u = lam * prof.u0(s * r);
                                                       return u == 0.0 ? 0.0 : std::exp(ps * std::log(u) + (c.N - 1.0) * std::log(r));
                                                   },
                                                   0.0, INFINITY, prof.q());
        EXPECT_NEAR(grad, 1.0, 1e-10);
        EXPECT_NEAR(std::pow(grad, 1.0 / c.p) / std::pow(mass, 1.0 / ps), prof.sobolev_constant(), 1e-10);
    }
}

TEST(Extremals, SeminormNormalizationForRandomParameters) {
    std::mt19937_64 rng(8);
    for (const auto& c : kCases) {
        const RadialProfile prof(c.p, c.N);
        for (int i = 0; i < 5; ++i) {
            double total, cp;
            if (c.N == 2) {
                const auto par = random_params<2>(rng);
                const auto sp = split_seminorm_unit_ball(prof, par, 256);
                total = sp.inside + sp.outside;
                cp = std::pow(par.c, c.p);
            } else {
                const auto par = random_params<3>(rng);
                const auto sp = split_seminorm_unit_ball(prof, par, 16);
                total = sp.inside + sp.outside;
                cp = std::pow(par.c, c.p);
            }
            EXPECT_NEAR(total, cp, 1e-10 * cp) << c.p << "," << c.N;
        }
    }
}

TEST(Extremals, GradientVanishesAtCenter) {
    const RadialProfile prof(1.5, 2);
    ExtremalParams<2> par;
    par.x0 = Vec<2>(0.2, -0.1);
    par.lambda = 3.0;
    const Extremal<2> U(prof, par);
    EXPECT_EQ(U.gradient(par.x0).norm(), 0.0);
    EXPECT_THROW(Extremal<2>(prof, ExtremalParams<2>{1.0, 0.0, Vec<2>::Zero()}), std::invalid_argument);
    EXPECT_THROW(Extremal<3>(prof, ExtremalParams<3>{}), std::invalid_argument);
}

TEST(Extremals, FiniteDifferences2D) {
    finite_difference_check<2>(1.5);
    finite_difference_check<2>(1.8);
}

TEST(Extremals, FiniteDifferences3D) {
    finite_difference_check<3>(2.0);
    finite_difference_check<3>(2.5);
}

TEST(Extremals, IntegrabilityExponents) {
    for (const auto& c : kCases) {
        const double q = c.p / (c.p - 1.0);
        EXPECT_GT(c.N - 1.0 + q, -1.0);
        EXPECT_LT(c.N - 1.0 + q - c.N * q, -1.0);
    }
}

TEST(Extremals, HessianEnvelopeMatchesProfile) {
    const RadialProfile prof(1.5, 2);
    for (double r : {0.01, 0.3, 1.0, 4.0})
        EXPECT_NEAR(hessian_envelope_a(r, 1.5, 2), prof.envelope_a(r), 1e-15 * prof.envelope_a(r));
}

TEST(Extremals, OptimalLambdaQuasiBalance) {
    for (const auto& c : kCases)
        for (double h : {0.5, 0.1, 0.01}) {
            const double lam = optimal_lambda(h, c.p, c.N, LambdaMode::Quasi);
            const double beta = c.p / (c.N - c.p);
            const double tail = std::pow(lam, -c.p / (c.p - 1.0));
            const double interp = std::pow(h * std::pow(lam, beta), 2.0);
            EXPECT_NEAR(tail, interp, 1e-12 * tail);
            EXPECT_NEAR(interp, std::pow(h, alpha_exponent(c.p, c.N)), 1e-12 * interp);
        }
}

TEST(Extremals, OptimalLambdaSobolevMode) {
    for (double h : {0.5, 0.1, 0.01}) {
        EXPECT_NEAR(optimal_lambda(h, 2.0, 3, LambdaMode::Sobolev), std::pow(h, -1.0 / 3.0), 1e-12);
        // lambda^{-1/(p-1)} = h lambda^{p/(N-p)}
        const double lam = optimal_lambda(h, 1.5, 2, LambdaMode::Sobolev);
        EXPECT_NEAR(std::pow(lam, -2.0), h * std::pow(lam, 3.0), 1e-12 * std::pow(lam, -2.0));
    }
    EXPECT_THROW(optimal_lambda(1.2, 1.5, 2, LambdaMode::Quasi), std::invalid_argument);
}

TEST(Extremals, SphereDirections) {
    double s2 = 0.0;
    for (const auto& [d, w] : sphere_directions<2>(64)) {
        EXPECT_NEAR(d.norm(), 1.0, 1e-15);
        s2 += w;
    }
    EXPECT_NEAR(s2, 2.0 * M_PI, 1e-13);
    double s3 = 0.0, z2 = 0.0;
    for (const auto& [d, w] : sphere_directions<3>(8)) {
        s3 += w;
        z2 += w * d[2] * d[2];
    }
    EXPECT_NEAR(s3, 4.0 * M_PI, 1e-12);
    EXPECT_NEAR(z2, 4.0 * M_PI / 3.0, 1e-12);
    const auto ico = icosphere_directions(2);
    EXPECT_EQ(ico.size(), 162u);
    double si = 0.0;
    for (const auto& [d, w] : ico) {
        EXPECT_NEAR(d.norm(), 1.0, 1e-15);
        si += w;
    }
    EXPECT_NEAR(si, 4.0 * M_PI, 1e-12);
}

TEST(Extremals, CenteredSplitMatchesAngularSplit) {
    const RadialProfile prof(1.5, 2);
    ExtremalParams<2> par;
    par.lambda = 3.0;
    const double exact = tail_integral_p(prof, par);
    par.x0 = Vec<2>(1e-9, 0.0);
    EXPECT_NEAR(tail_integral_p(prof, par, 128), exact, 1e-8 * exact);
}
