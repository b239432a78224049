#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <Eigen/Dense>

#include "mesh.hpp"
#include "quadrature.hpp"

namespace sobolevlab {

inline void require_sobolev_range(double p, int N) {
    if (!(p > 1.0 && p < N))
        throw std::invalid_argument("exponent p=" + std::to_string(p) + " outside (1, N=" +
                                    std::to_string(N) + ")");
}

inline double sobolev_conjugate(double p, int N) { return N * p / (N - p); }

/// Sharp rate of S_h - S: 2(N-p)/(N+p-2).
inline double alpha_exponent(double p, int N) { return 2.0 * (N - p) / (N + p - 2.0); }

/// Rate of the Sobolev-norm distance from the interpolated extremal: (N-p)/(N+p(p-2)).
inline double gamma_exponent(double p, int N) { return (N - p) / (N + p * (p - 2.0)); }

/// |S^{N-1}|
inline double sphere_area(int N) { return N == 2 ? 2.0 * M_PI : 4.0 * M_PI; }

/// Integral over [r0, r1] (r1 may be +inf) after the substitution
/// t = r^q/(1+r^q). The piece with t > 1/2 is integrated in w = 1 - t so the
/// tail keeps full relative precision.
template <class F>
double radial_integral(const F& f, double r0, double r1, double q, double tol = 1e-14) {
    static thread_local boost::math::quadrature::tanh_sinh<double> integrator;
    if (!(r1 > r0)) return 0.0;
    const auto t_of = [q](double r) {
        if (r <= 0.0) return 0.0;
        const double rq = std::pow(r, q);
        return rq / (1.0 + rq);
    };
    const auto w_of = [q](double r) {
        if (std::isinf(r)) return 0.0;
        return 1.0 / (1.0 + std::pow(r, q));
    };
    // dr = r / (q s (1-s)) ds for s = t or w
    const auto lower = [&](double t) {
        const double r = std::pow(t / (1.0 - t), 1.0 / q);
        const double v = f(r) * r;
        return v / (q * t * (1.0 - t));
    };
    const auto upper = [&](double w) {
        const double r = std::pow((1.0 - w) / w, 1.0 / q);
        if (std::isinf(r)) return 0.0;
        const double v = f(r) * r;
        return v / (q * w * (1.0 - w));
    };
    double total = 0.0;
    const double t0 = t_of(r0);
    if (t0 < 0.5) {
        const double t1 = std::min(0.5, r1 >= 1.0 ? 0.5 : t_of(r1));
        if (t1 > t0) total += integrator.integrate(lower, t0, t1, tol);
    }
    if (r1 > 1.0) {
        const double wa = w_of(r1);
        const double wb = std::min(0.5, r0 <= 1.0 ? 0.5 : w_of(r0));
        if (wb > wa) total += integrator.integrate(upper, wa, wb, tol);
    }
    return total;
}

/// The radial Aubin-Talenti profile u0(r) = k0 (1 + r^{p/(p-1)})^{-(N-p)/p},
/// normalized so that the gradient of U(x) = u0(|x|) has unit L^p(R^N) norm.
class RadialProfile {
public:
    RadialProfile(double p, int N) : p_(p), n_(N) {
        if (N != 2 && N != 3) throw std::invalid_argument("RadialProfile: N must be 2 or 3");
        require_sobolev_range(p, N);
        q_ = p / (p - 1.0);
        beta_ = p / (N - p);
        kfac_ = (N - p) / (p - 1.0);
        k0_ = 1.0;
        // with k0 = 1, the seminorm^p is sphere_area * radial integral
        const double raw = sphere_area(N) * radial_integral(
                                                [this](double r) { return grad_p_density(r); }, 0.0,
                                                INFINITY, q_);
        k0_ = std::pow(raw, -1.0 / p);
    }

    double p() const { return p_; }
    int dim() const { return n_; }
    double q() const { return q_; }
    /// Dilation exponent p/(N-p) in U_lambda(x) = lambda U(lambda^beta x).
    double beta() const { return beta_; }
    double p_star() const { return sobolev_conjugate(p_, n_); }
    double k0() const { return k0_; }

    /// log(1 + r^q) without overflow
    double log1p_rq(double r) const {
        if (r > 1.0) return q_ * std::log(r) + std::log1p(std::pow(r, -q_));
        return std::log1p(std::pow(r, q_));
    }

    double u0(double r) const { return k0_ * std::exp(-(n_ - p_) / p_ * log1p_rq(r)); }

    /// u0'(r) = -k0 (N-p)/(p-1) r^{1/(p-1)} (1+r^q)^{-N/p}
    double du0(double r) const {
        if (r <= 0.0) return 0.0;
        return -k0_ * kfac_ * std::exp(std::log(r) / (p_ - 1.0) - n_ / p_ * log1p_rq(r));
    }

    /// u0''(r) = -k0 (N-p)/(p-1)^2 r^{(2-p)/(p-1)} (1+r^q)^{-N/p-1} (1 - (N-1) r^q)
    double d2u0(double r) const {
        const double rr = std::max(r, 1e-300);
        const double mag = k0_ * kfac_ / (p_ - 1.0) *
                           std::exp((2.0 - p_) / (p_ - 1.0) * std::log(rr) -
                                    (n_ / p_ + 1.0) * log1p_rq(rr));
        // (1 - (N-1) r^q) (1+r^q)^{-1} written to avoid overflow
        const double rq = std::pow(rr, q_);
        const double shape = std::isinf(rq) ? -(n_ - 1.0) : (1.0 - (n_ - 1.0) * rq);
        return -mag * shape;
    }

    /// u0'(r)/r = -k0 (N-p)/(p-1) a(r)
    double du0_over_r(double r) const { return -k0_ * kfac_ * envelope_a(r); }

    /// a(r) = r^{(2-p)/(p-1)} (1+r^q)^{-N/p}
    double envelope_a(double r) const {
        const double rr = std::max(r, 1e-300);
        return std::exp((2.0 - p_) / (p_ - 1.0) * std::log(rr) - n_ / p_ * log1p_rq(rr));
    }

    /// |u0'(r)|^p r^{N-1}
    double grad_p_density(double r) const {
        if (r <= 0.0) return 0.0;
        const double log_du = std::log(k0_ * kfac_) + std::log(r) / (p_ - 1.0) - n_ / p_ * log1p_rq(r);
        return std::exp(p_ * log_du + (n_ - 1.0) * std::log(r));
    }

    /// |u0(r)|^{p*} r^{N-1}
    double lpstar_density(double r) const {
        if (r <= 0.0) return 0.0;
        const double ps = p_star();
        return std::exp(ps * (std::log(k0_) - (n_ - p_) / p_ * log1p_rq(r)) + (n_ - 1.0) * std::log(r));
    }

    /// Radial cumulative of the seminorm density: integral over [r0, r1] of
    /// |u0'|^p r^{N-1} (not yet multiplied by the sphere area).
    double grad_p_radial(double r0, double r1) const {
        return radial_integral([this](double r) { return grad_p_density(r); }, r0, r1, q_);
    }

    /// ||DU||_p^p over R^N; 1 up to quadrature accuracy.
    double seminorm_p() const { return sphere_area(n_) * grad_p_radial(0.0, INFINITY); }

    /// ||U||_{p*}
    double lpstar_norm() const {
        const double m = sphere_area(n_) *
                         radial_integral([this](double r) { return lpstar_density(r); }, 0.0,
                                         INFINITY, q_);
        return std::pow(m, 1.0 / p_star());
    }

    /// S(p,N) = ||DU||_p / ||U||_{p*}
    double sobolev_constant() const { return std::pow(seminorm_p(), 1.0 / p_) / lpstar_norm(); }

private:
    double p_;
    int n_;
    double q_ = 0.0;
    double beta_ = 0.0;
    double kfac_ = 0.0;
    double k0_ = 1.0;
};

inline double compute_k0(double p, int N) { return RadialProfile(p, N).k0(); }

inline double sobolev_constant_ref(double p, int N) { return RadialProfile(p, N).sobolev_constant(); }

/// a(r) = u0'(r)/r up to the constant factor: r^{(2-p)/(p-1)} (1+r^{p/(p-1)})^{-N/p}.
inline double hessian_envelope_a(double r, double p, int N) {
    require_sobolev_range(p, N);
    return std::pow(r, (2.0 - p) / (p - 1.0)) * std::pow(1.0 + std::pow(r, p / (p - 1.0)), -N / p);
}

template <int Dim>
struct ExtremalParams {
    double c = 1.0;
    double lambda = 1.0;
    Vec<Dim> x0 = Vec<Dim>::Zero();
};

/// U_{c,lambda,x0}(x) = c lambda U(lambda^{p/(N-p)} (x - x0)).
template <int Dim>
class Extremal {
public:
    Extremal(RadialProfile profile, ExtremalParams<Dim> params)
        : profile_(std::move(profile)), params_(std::move(params)) {
        if (profile_.dim() != Dim) throw std::invalid_argument("Extremal: profile dimension mismatch");
        if (!(params_.lambda > 0.0) || !std::isfinite(params_.lambda))
            throw std::invalid_argument("Extremal: lambda must be positive");
        scale_ = std::pow(params_.lambda, profile_.beta());
    }

    const RadialProfile& profile() const { return profile_; }
    const ExtremalParams<Dim>& params() const { return params_; }
    /// lambda^{p/(N-p)}: inverse concentration length.
    double dilation() const { return scale_; }

    double value(const Vec<Dim>& x) const {
        const double r = scale_ * (x - params_.x0).norm();
        return params_.c * params_.lambda * profile_.u0(r);
    }

    Vec<Dim> gradient(const Vec<Dim>& x) const {
        const Vec<Dim> y = scale_ * (x - params_.x0);
        const double r = y.norm();
        if (r == 0.0) return Vec<Dim>::Zero();
        return (params_.c * params_.lambda * scale_ * profile_.du0_over_r(r)) * y;
    }

    double gradient_norm(const Vec<Dim>& x) const {
        const double r = scale_ * (x - params_.x0).norm();
        return std::abs(params_.c) * params_.lambda * scale_ * std::abs(profile_.du0(r));
    }

    /// Analytic Hessian. Points closer than 1e-12 (scaled) to x0 are moved out
    /// to that radius along e1.
    Mat<Dim> hessian(const Vec<Dim>& x) const {
        Vec<Dim> y = scale_ * (x - params_.x0);
        double r = y.norm();
        Vec<Dim> dir = Vec<Dim>::Zero();
        if (r < 1e-12) {
            dir[0] = 1.0;
            r = 1e-12;
        } else {
            dir = y / r;
        }
        const Mat<Dim> radial = dir * dir.transpose();
        const Mat<Dim> tangential = Mat<Dim>::Identity() - radial;
        const double f = params_.c * params_.lambda * scale_ * scale_;
        return f * (profile_.d2u0(r) * radial + profile_.du0_over_r(r) * tangential);
    }

private:
    RadialProfile profile_;
    ExtremalParams<Dim> params_;
    double scale_ = 1.0;
};

/// Integration directions over S^{N-1}; weights sum to |S^{N-1}|.
/// 2D: n equispaced angles. 3D: n Gauss-Legendre nodes in cos(theta) times
/// 2n equispaced azimuths.
template <int Dim>
std::vector<std::pair<Vec<Dim>, double>> sphere_directions(int n);

template <>
inline std::vector<std::pair<Vec<2>, double>> sphere_directions<2>(int n) {
    std::vector<std::pair<Vec<2>, double>> out;
    for (int k = 0; k < n; ++k) {
        const double t = 2.0 * M_PI * (k + 0.5) / n;
        out.emplace_back(Vec<2>(std::cos(t), std::sin(t)), 2.0 * M_PI / n);
    }
    return out;
}

template <>
inline std::vector<std::pair<Vec<3>, double>> sphere_directions<3>(int n) {
    // Gauss-Legendre nodes on [-1,1] by Newton on P_n
    std::vector<std::pair<Vec<3>, double>> out;
    for (int i = 0; i < n; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 1.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = x;
            for (int k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) break;
        }
        const double wz = 2.0 / ((1.0 - x * x) * dp * dp);
        const double s = std::sqrt(std::max(0.0, 1.0 - x * x));
        const int m = 2 * n;
        for (int k = 0; k < m; ++k) {
            const double ph = 2.0 * M_PI * (k + 0.5) / m;
            out.emplace_back(Vec<3>(s * std::cos(ph), s * std::sin(ph), x), wz * 2.0 * M_PI / m);
        }
    }
    return out;
}

/// Vertices of the subdivided icosahedron (12, 42, 162, ... points) as unit
/// directions with equal weights summing to 4 pi.
inline std::vector<std::pair<Vec<3>, double>> icosphere_directions(int level) {
    const double t = 0.5 * (1.0 + std::sqrt(5.0));
    std::vector<Vec<3>> v = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                             {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (auto& x : v) x.normalize();
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            v.push_back((v[a] + v[b]).normalized());
            return mid[key] = static_cast<int>(v.size()) - 1;
        };
        std::vector<std::array<int, 3>> next;
        for (const auto& [a, b, c] : f) {
            const int ab = midpoint(a, b), bc = midpoint(b, c), ca = midpoint(c, a);
            next.push_back({a, ab, ca});
            next.push_back({b, bc, ab});
            next.push_back({c, ca, bc});
            next.push_back({ab, bc, ca});
        }
        f = std::move(next);
    }
    std::vector<std::pair<Vec<3>, double>> out;
    for (const auto& x : v) out.emplace_back(x, 4.0 * M_PI / static_cast<double>(v.size()));
    return out;
}

/// Split of the whole-space seminorm ||DU_{c,lambda,x0}||_p^p = |c|^p into the
/// parts inside and outside the unit ball.
struct BallSplit {
    double inside = 0.0;
    double outside = 0.0;
    /// |difference| against the same computation with doubled angular resolution
    /// (zero for centered extremals, which use the exact radial formula).
    double refinement_delta = 0.0;
};

namespace detail {

template <int Dim>
BallSplit ball_split_angular(const RadialProfile& prof, const ExtremalParams<Dim>& par, int n) {
    const double s = std::pow(par.lambda, prof.beta());
    const double x0sq = par.x0.squaredNorm();
    const double total_radial = prof.grad_p_radial(0.0, INFINITY);
    CompensatedSum in, out;
    for (const auto& [dir, w] : sphere_directions<Dim>(n)) {
        const double b = par.x0.dot(dir);
        const double disc = b * b - x0sq + 1.0;
        if (disc <= 0.0) {
            out.add(w * total_radial);
            continue;
        }
        const double rp = -b + std::sqrt(disc);
        const double rm = std::max(0.0, -b - std::sqrt(disc));
        if (rp <= 0.0) {
            out.add(w * total_radial);
            continue;
        }
        const double a = s * rm, c = s * rp;
        in.add(w * prof.grad_p_radial(a, c));
        out.add(w * (prof.grad_p_radial(0.0, a) + prof.grad_p_radial(c, INFINITY)));
    }
    const double cp = std::pow(std::abs(par.c), prof.p());
    return {cp * in.value(), cp * out.value(), 0.0};
}

}  // namespace detail

template <int Dim>
BallSplit split_seminorm_unit_ball(const RadialProfile& prof, const ExtremalParams<Dim>& par,
                                   int n_angles = 64) {
    const double cp = std::pow(std::abs(par.c), prof.p());
    if (par.x0.norm() == 0.0) {
        const double R = std::pow(par.lambda, prof.beta());
        const double w = sphere_area(Dim);
        return {cp * w * prof.grad_p_radial(0.0, R), cp * w * prof.grad_p_radial(R, INFINITY), 0.0};
    }
    BallSplit coarse = detail::ball_split_angular(prof, par, n_angles);
    const BallSplit fine = detail::ball_split_angular(prof, par, 2 * n_angles);
    BallSplit out = fine;
    out.refinement_delta = std::abs(fine.outside - coarse.outside);
    return out;
}

/// Integral of |DU_{c,lambda,x0}|^p over |x| > 1.
template <int Dim>
double tail_integral_p(const RadialProfile& prof, const ExtremalParams<Dim>& par, int n_angles = 64) {
    return split_seminorm_unit_ball(prof, par, n_angles).outside;
}

enum class LambdaMode { Sobolev, Quasi };

/// Concentration parameter balancing the tail against the interpolation
/// error. Sobolev: lambda^{-1/(p-1)} = h lambda^{p/(N-p)}.
/// Quasi: lambda^{-p/(p-1)} = (h lambda^{p/(N-p)})^2.
inline double optimal_lambda(double h, double p, int N, LambdaMode mode) {
    if (!(h > 0.0 && h < 1.0)) throw std::invalid_argument("optimal_lambda: h must lie in (0,1)");
    require_sobolev_range(p, N);
    const double e = mode == LambdaMode::Sobolev
                         ? (p - 1.0) * (N - p) / (N + p * p - 2.0 * p)
                         : 2.0 * (p - 1.0) * (N - p) / (p * (N + p - 2.0));
    return std::pow(h, -e);
}

}  // namespace sobolevlab
