#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <type_traits>

#include "extremals.hpp"
#include "fespace.hpp"
#include "quadrature.hpp"

namespace sobolevlab {

// Gradient access shared by the integrands below: FeFunctions have a
// constant gradient per element, extremals are evaluated pointwise.

template <int Dim>
Vec<Dim> gradient_at(const FeFunction<Dim>& u, std::size_t e, const Vec<Dim>& /*x*/) {
    return u.element_gradient(e);
}

template <int Dim>
Vec<Dim> gradient_at(const Extremal<Dim>& v, std::size_t /*e*/, const Vec<Dim>& x) {
    return v.gradient(x);
}

template <class T>
struct is_extremal : std::false_type {};
template <int Dim>
struct is_extremal<Extremal<Dim>> : std::true_type {};

/// ||Du||_p^p = sum_T |T| |grad u|_T|^p, exact for P1.
template <int Dim>
double grad_p_norm_p(const FeFunction<Dim>& u, double p) {
    const auto& mesh = u.mesh();
    CompensatedSum sum;
    for (std::size_t e = 0; e < mesh.num_elements(); ++e)
        sum += mesh.volume(e) * std::pow(u.element_gradient(e).norm(), p);
    return sum.value();
}

/// Integral of |u|^{p*} over B_h by quadrature.
template <int Dim>
double lpstar_integral(const FeFunction<Dim>& u, double p, const QuadratureRule& rule) {
    const double ps = sobolev_conjugate(p, Dim);
    const auto& mesh = u.mesh();
    if (rule.dim() != Dim) throw std::invalid_argument("lpstar_integral: rule dimension mismatch");
    CompensatedSum sum;
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        double acc = 0.0;
        for (std::size_t q = 0; q < rule.size(); ++q)
            acc += rule.weight(q) * std::pow(std::abs(u.value_bary(e, rule.point(q))), ps);
        sum += acc * mesh.volume(e);
    }
    const double v = sum.value();
    if (!std::isfinite(v)) throw std::runtime_error("lpstar_integral: non-finite value");
    return v;
}

template <int Dim>
double lpstar_norm(const FeFunction<Dim>& u, double p, const QuadratureRule& rule) {
    return std::pow(lpstar_integral(u, p, rule), 1.0 / sobolev_conjugate(p, Dim));
}

struct VerifiedIntegral {
    double value = 0.0;
    int order = 0;
    /// |I(order) - I(2 order)| / |I(2 order)| at the accepted order
    double relative_change = 0.0;
    bool escalated = false;
};

/// ||u||_{p*} with the order-doubling check: the order is raised until
/// doubling it changes the integral by at most `tol` (relative).
template <int Dim>
VerifiedIntegral lpstar_norm_verified(const FeFunction<Dim>& u, double p, int order,
                                      double tol = 1e-8, int max_order = 32) {
    VerifiedIntegral out;
    out.order = order;
    for (;;) {
        const double a = lpstar_integral(u, p, QuadratureRule(Dim, out.order));
        const double b = lpstar_integral(u, p, QuadratureRule(Dim, 2 * out.order));
        out.relative_change = b != 0.0 ? std::abs(a - b) / std::abs(b) : 0.0;
        out.value = std::pow(a, 1.0 / sobolev_conjugate(p, Dim));
        if (out.relative_change <= tol || 2 * out.order > max_order) return out;
        out.order *= 2;
        out.escalated = true;
    }
}

/// ||Du||_p / ||u||_{p*}
template <int Dim>
double rayleigh(const FeFunction<Dim>& u, double p, const QuadratureRule& rule) {
    const double den = lpstar_norm(u, p, rule);
    if (den == 0.0) throw std::invalid_argument("rayleigh: zero function");
    return std::pow(grad_p_norm_p(u, p), 1.0 / p) / den;
}

/// Integral of |Dv|^p over B_h by mesh quadrature.
template <int Dim>
double interior_grad_p(const Extremal<Dim>& v, const Mesh<Dim>& mesh, const QuadratureRule& rule) {
    const double p = v.profile().p();
    return integrate_mesh([&](const Vec<Dim>& x) { return std::pow(v.gradient_norm(x), p); }, mesh,
                          rule);
}

/// Integral of |Dv|^p over the complement of B_h: |c|^p minus the interior part.
template <int Dim>
double exterior_grad_p(const Extremal<Dim>& v, const Mesh<Dim>& mesh, const QuadratureRule& rule) {
    const double whole = std::pow(std::abs(v.params().c), v.profile().p());
    return whole - interior_grad_p(v, mesh, rule);
}

enum class WeightMode {
    /// (|Du| + |D(u-v)|)^{p-2} |D(u-v)|^2
    UWeight,
    /// (|Dv| + |D(u-v)|)^{p-2} |D(u-v)|^2
    VWeight,
};

/// Quasi-norm |u - v|^2 over R^N. When v is an extremal, u (zero outside B_h)
/// contributes the exterior integral of |Dv|^p (UWeight) or 2^{p-2}|Dv|^p
/// (VWeight), taken from the whole-space identity.
template <int Dim, class V>
double quasinorm_sq(const FeFunction<Dim>& u, const V& v, double p, WeightMode mode,
                    const QuadratureRule& rule) {
    if (!(p > 1.0)) throw std::invalid_argument("quasinorm_sq: p must exceed 1");
    if (mode != WeightMode::UWeight && mode != WeightMode::VWeight)
        throw std::invalid_argument("quasinorm_sq: invalid weight mode");
    if constexpr (!is_extremal<V>::value) {
        if (&v.mesh() != &u.mesh()) throw std::invalid_argument("quasinorm_sq: meshes differ");
    }
    const auto& mesh = u.mesh();
    const double interior = integrate_elementwise(
        [&](std::size_t e, std::size_t, const Vec<Dim>& x) {
            const Vec<Dim> du = u.element_gradient(e);
            const Vec<Dim> dv = gradient_at(v, e, x);
            const double diff = (du - dv).norm();
            if (diff == 0.0) return 0.0;
            const double base = (mode == WeightMode::UWeight ? du.norm() : dv.norm()) + diff;
            return std::pow(base, p - 2.0) * diff * diff;
        },
        mesh, rule);
    if constexpr (is_extremal<V>::value) {
        const double ext = exterior_grad_p(v, mesh, rule);
        return interior + (mode == WeightMode::UWeight ? 1.0 : std::pow(2.0, p - 2.0)) * ext;
    } else {
        return interior;
    }
}

/// Integral of |Dv|^{p-1} |D(u - v)| over R^N, for 1 < p < 2.
template <int Dim>
double mixed_term(const FeFunction<Dim>& u, const Extremal<Dim>& v, double p,
                  const QuadratureRule& rule) {
    if (!(p > 1.0 && p < 2.0)) throw std::invalid_argument("mixed_term: requires 1 < p < 2");
    const auto& mesh = u.mesh();
    const double interior = integrate_elementwise(
        [&](std::size_t e, std::size_t, const Vec<Dim>& x) {
            const Vec<Dim> dv = v.gradient(x);
            return std::pow(dv.norm(), p - 1.0) * (u.element_gradient(e) - dv).norm();
        },
        mesh, rule);
    return interior + exterior_grad_p(v, mesh, rule);
}

/// ||Du - Dv||_{L^p(R^N)}^p.
template <int Dim, class V>
double sobolev_distance_p(const FeFunction<Dim>& u, const V& v, double p, const QuadratureRule& rule) {
    const auto& mesh = u.mesh();
    if constexpr (is_extremal<V>::value) {
        const double interior = integrate_elementwise(
            [&](std::size_t e, std::size_t, const Vec<Dim>& x) {
                return std::pow((u.element_gradient(e) - v.gradient(x)).norm(), p);
            },
            mesh, rule);
        return interior + exterior_grad_p(v, mesh, rule);
    } else {
        if (&v.mesh() != &mesh) throw std::invalid_argument("sobolev_distance_p: meshes differ");
        return grad_p_norm_p(FeFunction<Dim>(u.mesh_ptr(), u.coeffs() - v.coeffs()), p);
    }
}

/// Deficits below this are not resolved by the reference constant and quadrature.
inline constexpr double kDeficitResolution = 1e-8;

struct DeficitReport {
    double rayleigh = 0.0;
    double deficit = 0.0;
    double grad_p_norm_p = 0.0;
    double lpstar_norm = 0.0;
    bool below_resolution = false;
};

/// delta(u) = ||Du||_p / ||u||_{p*} - S_ref
template <int Dim>
DeficitReport deficit(const FeFunction<Dim>& u, double p, double s_ref, const QuadratureRule& rule) {
    DeficitReport r;
    r.grad_p_norm_p = grad_p_norm_p(u, p);
    r.lpstar_norm = lpstar_norm(u, p, rule);
    if (r.lpstar_norm == 0.0) throw std::invalid_argument("deficit: zero function");
    r.rayleigh = std::pow(r.grad_p_norm_p, 1.0 / p) / r.lpstar_norm;
    r.deficit = r.rayleigh - s_ref;
    r.below_resolution = std::abs(r.deficit) < kDeficitResolution;
    return r;
}

}  // namespace sobolevlab
