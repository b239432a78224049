#pragma once

#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "mesh.hpp"

namespace sobolevlab {

/// Continuous piecewise-linear function on a mesh, one coefficient per
/// vertex, extended by zero outside B_h. Functions in V_h vanish at
/// boundary vertices; `interpolate` can build functions that do not (used
/// to test affine reproduction).
template <int Dim>
class FeFunction {
public:
    FeFunction() = default;
    explicit FeFunction(MeshPtr<Dim> mesh)
        : mesh_(std::move(mesh)), coeffs_(Eigen::VectorXd::Zero(mesh_->num_vertices())) {}
    FeFunction(MeshPtr<Dim> mesh, Eigen::VectorXd coeffs)
        : mesh_(std::move(mesh)), coeffs_(std::move(coeffs)) {
        if (static_cast<std::size_t>(coeffs_.size()) != mesh_->num_vertices())
            throw std::invalid_argument("FeFunction: coefficient count does not match mesh");
    }

    const Mesh<Dim>& mesh() const { return *mesh_; }
    const MeshPtr<Dim>& mesh_ptr() const { return mesh_; }
    const Eigen::VectorXd& coeffs() const { return coeffs_; }
    Eigen::VectorXd& coeffs() { return coeffs_; }
    double operator[](std::size_t i) const { return coeffs_[static_cast<Eigen::Index>(i)]; }

    bool vanishes_on_boundary() const {
        for (std::size_t i = 0; i < mesh_->num_vertices(); ++i)
            if (mesh_->is_boundary(i) && coeffs_[i] != 0.0) return false;
        return true;
    }

    FeFunction scaled(double c) const { return FeFunction(mesh_, c * coeffs_); }

    /// Constant gradient on element `e`.
    Vec<Dim> element_gradient(std::size_t e) const {
        const auto& el = mesh_->element(e);
        const auto& g = mesh_->barycentric_gradients(e);
        Vec<Dim> out = Vec<Dim>::Zero();
        for (int k = 0; k <= Dim; ++k) out += coeffs_[el[k]] * g[k];
        return out;
    }

    /// Value at barycentric coordinates `bary` of element `e`.
    double value_bary(std::size_t e, const double* bary) const {
        const auto& el = mesh_->element(e);
        double v = 0.0;
        for (int k = 0; k <= Dim; ++k) v += bary[k] * coeffs_[el[k]];
        return v;
    }

    /// Point evaluation; zero outside B_h.
    double evaluate(const Vec<Dim>& x) const {
        const long e = mesh_->locate(x);
        if (e < 0) return 0.0;
        const auto b = mesh_->barycentric(static_cast<std::size_t>(e), x);
        return value_bary(static_cast<std::size_t>(e), b.data());
    }

private:
    MeshPtr<Dim> mesh_;
    Eigen::VectorXd coeffs_;
};

template <int Dim>
Vec<Dim> element_gradient(const FeFunction<Dim>& u, std::size_t e) {
    return u.element_gradient(e);
}

/// Plain nodal interpolant (no boundary handling).
template <int Dim, class F>
FeFunction<Dim> interpolate(const F& f, const MeshPtr<Dim>& mesh) {
    Eigen::VectorXd c(mesh->num_vertices());
    for (std::size_t i = 0; i < mesh->num_vertices(); ++i) {
        c[i] = f(mesh->vertex(i));
        if (!std::isfinite(c[i])) throw std::runtime_error("interpolate: non-finite vertex value");
    }
    return FeFunction<Dim>(mesh, std::move(c));
}

/// Result of the boundary-shifted interpolation; `shift` is the constant
/// subtracted, `boundary_spread` the max deviation of f over boundary
/// vertices from it (zero up to roundoff for radial fields).
template <int Dim>
struct ShiftedInterpolant {
    FeFunction<Dim> function;
    double shift = 0.0;
    double boundary_spread = 0.0;
};

/// I^h(f - f|_{dB_h}): nodal values f(x_i) - C at interior vertices and zero
/// at boundary vertices, C = f at the first boundary vertex.
template <int Dim, class F>
ShiftedInterpolant<Dim> interpolate_shifted_report(const F& f, const MeshPtr<Dim>& mesh) {
    const std::size_t nv = mesh->num_vertices();
    std::size_t first = nv;
    for (std::size_t i = 0; i < nv; ++i)
        if (mesh->is_boundary(i)) {
            first = i;
            break;
        }
    if (first == nv) throw std::invalid_argument("interpolate_shifted: mesh has no boundary vertex");
    ShiftedInterpolant<Dim> out;
    out.shift = f(mesh->vertex(first));
    if (!std::isfinite(out.shift)) throw std::runtime_error("interpolate_shifted: non-finite vertex value");
    Eigen::VectorXd c(nv);
    for (std::size_t i = 0; i < nv; ++i) {
        const double v = f(mesh->vertex(i));
        if (!std::isfinite(v)) throw std::runtime_error("interpolate_shifted: non-finite vertex value");
        if (mesh->is_boundary(i)) {
            out.boundary_spread = std::max(out.boundary_spread, std::abs(v - out.shift));
            c[i] = 0.0;
        } else {
            c[i] = v - out.shift;
        }
    }
    out.function = FeFunction<Dim>(mesh, std::move(c));
    return out;
}

template <int Dim, class F>
FeFunction<Dim> interpolate_shifted(const F& f, const MeshPtr<Dim>& mesh) {
    return interpolate_shifted_report(f, mesh).function;
}

// FeFunction text format: header `N n_vertices`, one coefficient per line.

template <int Dim>
void write_function(std::ostream& os, const FeFunction<Dim>& u) {
    os << Dim << ' ' << u.mesh().num_vertices() << '\n' << std::setprecision(17);
    for (Eigen::Index i = 0; i < u.coeffs().size(); ++i) os << u.coeffs()[i] << '\n';
}

template <int Dim>
FeFunction<Dim> read_function(std::istream& is, MeshPtr<Dim> mesh) {
    int dim = 0;
    std::size_t n = 0;
    if (!(is >> dim >> n)) throw std::runtime_error("read_function: bad header");
    if (dim != Dim || n != mesh->num_vertices())
        throw std::runtime_error("read_function: header does not match mesh");
    Eigen::VectorXd c(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) is >> c[static_cast<Eigen::Index>(i)];
    if (!is) throw std::runtime_error("read_function: truncated input");
    return FeFunction<Dim>(std::move(mesh), std::move(c));
}

template <int Dim>
void save_function(const std::string& path, const FeFunction<Dim>& u) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    write_function(os, u);
}

}  // namespace sobolevlab
