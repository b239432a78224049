#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace sobolevlab {

template <int Dim>
using Vec = Eigen::Matrix<double, Dim, 1>;

template <int Dim>
using Mat = Eigen::Matrix<double, Dim, Dim>;

template <int Dim>
using Element = std::array<int, Dim + 1>;

/// Simplicial mesh of an inscribed polyhedral approximation B_h of the unit
/// ball. Geometry (volumes, diameters, inradii, barycentric gradients) is
/// computed once at construction; the mesh is immutable afterwards.
template <int Dim>
class Mesh {
    static_assert(Dim == 2 || Dim == 3, "only 2D and 3D meshes are supported");

public:
    static constexpr int kDim = Dim;
    static constexpr int kNodes = Dim + 1;

    Mesh(std::vector<Vec<Dim>> vertices, std::vector<Element<Dim>> elements,
         std::vector<std::uint8_t> boundary)
        : vertices_(std::move(vertices)),
          elements_(std::move(elements)),
          boundary_(std::move(boundary)) {
        if (boundary_.size() != vertices_.size())
            throw std::invalid_argument("Mesh: boundary flag count does not match vertex count");
        for (const auto& el : elements_)
            for (int v : el)
                if (v < 0 || static_cast<std::size_t>(v) >= vertices_.size())
                    throw std::invalid_argument("Mesh: element references a missing vertex");
        compute_geometry();
    }

    std::size_t num_vertices() const { return vertices_.size(); }
    std::size_t num_elements() const { return elements_.size(); }

    const std::vector<Vec<Dim>>& vertices() const { return vertices_; }
    const Vec<Dim>& vertex(std::size_t i) const { return vertices_[i]; }
    const std::vector<Element<Dim>>& elements() const { return elements_; }
    const Element<Dim>& element(std::size_t e) const { return elements_[e]; }
    bool is_boundary(std::size_t i) const { return boundary_[i] != 0; }
    const std::vector<std::uint8_t>& boundary_flags() const { return boundary_; }

    double volume(std::size_t e) const { return volume_[e]; }
    double diameter(std::size_t e) const { return diameter_[e]; }
    /// Diameter of the inscribed ball (twice the inradius).
    double inball_diameter(std::size_t e) const { return inball_[e]; }
    /// Gradients of the barycentric coordinates; constant on the element.
    const std::array<Vec<Dim>, Dim + 1>& barycentric_gradients(std::size_t e) const {
        return bary_grad_[e];
    }

    double h() const { return h_; }
    double total_volume() const { return total_volume_; }

    Vec<Dim> map_barycentric(std::size_t e, const double* bary) const {
        Vec<Dim> x = Vec<Dim>::Zero();
        const auto& el = elements_[e];
        for (int k = 0; k < kNodes; ++k) x += bary[k] * vertices_[el[k]];
        return x;
    }

    std::array<double, Dim + 1> barycentric(std::size_t e, const Vec<Dim>& x) const {
        std::array<double, Dim + 1> b{};
        const auto& el = elements_[e];
        const Vec<Dim> d = x - vertices_[el[0]];
        double rest = 1.0;
        for (int k = 1; k < kNodes; ++k) {
            b[k] = bary_grad_[e][k].dot(d);
            rest -= b[k];
        }
        b[0] = rest;
        return b;
    }

    /// Brute-force point location. Returns -1 outside B_h.
    long locate(const Vec<Dim>& x, double tol = 1e-12) const {
        for (std::size_t e = 0; e < elements_.size(); ++e) {
            const auto b = barycentric(e, x);
            if (std::all_of(b.begin(), b.end(), [tol](double v) { return v >= -tol; }))
                return static_cast<long>(e);
        }
        return -1;
    }

private:
    void compute_geometry() {
        const std::size_t ne = elements_.size();
        volume_.resize(ne);
        diameter_.resize(ne);
        inball_.resize(ne);
        bary_grad_.resize(ne);
        double fact = 1.0;
        for (int k = 2; k <= Dim; ++k) fact *= k;
        h_ = 0.0;
        total_volume_ = 0.0;
        for (std::size_t e = 0; e < ne; ++e) {
            auto& el = elements_[e];
            Mat<Dim> jac;
            for (int k = 0; k < Dim; ++k) jac.col(k) = vertices_[el[k + 1]] - vertices_[el[0]];
            double det = jac.determinant();
            if (det < 0) {
                std::swap(el[Dim - 1], el[Dim]);
                jac.col(Dim - 2).swap(jac.col(Dim - 1));
                det = -det;
            }
            double diam = 0.0;
            for (int a = 0; a < kNodes; ++a)
                for (int b = a + 1; b < kNodes; ++b)
                    diam = std::max(diam, (vertices_[el[a]] - vertices_[el[b]]).norm());
            const double vol = det / fact;
            if (vol <= 1e-14 * std::pow(diam, Dim))
                throw std::runtime_error("Mesh: degenerate element " + std::to_string(e));

            const Mat<Dim> inv = jac.inverse();
            auto& grads = bary_grad_[e];
            grads[0] = Vec<Dim>::Zero();
            for (int k = 0; k < Dim; ++k) {
                grads[k + 1] = inv.row(k).transpose();
                grads[0] -= grads[k + 1];
            }
            // Facet opposite vertex k has measure |grad lambda_k|^{-1} * Dim * vol.
            double facet_sum = 0.0;
            for (int k = 0; k < kNodes; ++k) facet_sum += Dim * vol * grads[k].norm();
            volume_[e] = vol;
            diameter_[e] = diam;
            inball_[e] = 2.0 * Dim * vol / facet_sum;
            h_ = std::max(h_, diam);
            total_volume_ += vol;
        }
    }

    std::vector<Vec<Dim>> vertices_;
    std::vector<Element<Dim>> elements_;
    std::vector<std::uint8_t> boundary_;

    std::vector<double> volume_;
    std::vector<double> diameter_;
    std::vector<double> inball_;
    std::vector<std::array<Vec<Dim>, Dim + 1>> bary_grad_;
    double h_ = 0.0;
    double total_volume_ = 0.0;
};

template <int Dim>
using MeshPtr = std::shared_ptr<const Mesh<Dim>>;

struct MeshMetrics {
    double h = 0.0;
    double sigma = 0.0;
    double q0 = 0.0;
};

template <int Dim>
MeshMetrics mesh_metrics(const Mesh<Dim>& mesh) {
    MeshMetrics m;
    double hmin = std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        const double hT = mesh.diameter(e);
        m.h = std::max(m.h, hT);
        hmin = std::min(hmin, hT);
        m.sigma = std::max(m.sigma, hT / mesh.inball_diameter(e));
    }
    m.q0 = mesh.num_elements() > 0 ? hmin / m.h : 0.0;
    return m;
}

namespace detail {

inline std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | static_cast<std::uint32_t>(b);
}

template <int Dim>
std::vector<Element<Dim>> coarse_elements();

template <>
inline std::vector<Element<2>> coarse_elements<2>() {
    std::vector<Element<2>> els;
    for (int k = 0; k < 6; ++k) els.push_back({0, 1 + k, 1 + (k + 1) % 6});
    return els;
}

template <>
inline std::vector<Element<3>> coarse_elements<3>() {
    // vertices: 0 origin, 1/2 = +-e1, 3/4 = +-e2, 5/6 = +-e3
    std::vector<Element<3>> els;
    for (int a : {1, 2})
        for (int b : {3, 4})
            for (int c : {5, 6}) els.push_back({0, a, b, c});
    return els;
}

template <int Dim>
std::vector<Vec<Dim>> coarse_vertices();

template <>
inline std::vector<Vec<2>> coarse_vertices<2>() {
    std::vector<Vec<2>> v{Vec<2>::Zero()};
    for (int k = 0; k < 6; ++k) {
        const double t = k * M_PI / 3.0;
        v.emplace_back(std::cos(t), std::sin(t));
    }
    return v;
}

template <>
inline std::vector<Vec<3>> coarse_vertices<3>() {
    std::vector<Vec<3>> v{Vec<3>::Zero()};
    for (int d = 0; d < 3; ++d)
        for (double s : {1.0, -1.0}) {
            Vec<3> x = Vec<3>::Zero();
            x[d] = s;
            v.push_back(x);
        }
    return v;
}

/// Facets (sorted vertex tuples) that belong to exactly one element.
template <int Dim>
std::vector<std::array<int, Dim>> boundary_facets(const Mesh<Dim>& mesh) {
    std::map<std::array<int, Dim>, int> count;
    for (const auto& el : mesh.elements()) {
        for (int skip = 0; skip <= Dim; ++skip) {
            std::array<int, Dim> f{};
            int j = 0;
            for (int k = 0; k <= Dim; ++k)
                if (k != skip) f[j++] = el[k];
            std::sort(f.begin(), f.end());
            ++count[f];
        }
    }
    std::vector<std::array<int, Dim>> out;
    for (const auto& [f, c] : count)
        if (c == 1) out.push_back(f);
    return out;
}

}  // namespace detail

/// Uniform red refinement: every simplex is split into 2^Dim children.
/// Midpoints of boundary edges are projected radially onto the unit sphere.
/// In 3D the interior octahedron is cut along its shortest diagonal.
template <int Dim>
Mesh<Dim> refine(const Mesh<Dim>& mesh) {
    std::vector<Vec<Dim>> verts = mesh.vertices();
    std::vector<std::uint8_t> bnd = mesh.boundary_flags();

    std::unordered_map<std::uint64_t, char> boundary_edges;
    for (const auto& f : detail::boundary_facets(mesh))
        for (int a = 0; a < Dim; ++a)
            for (int b = a + 1; b < Dim; ++b) boundary_edges[detail::edge_key(f[a], f[b])] = 1;

    std::unordered_map<std::uint64_t, int> midpoint;
    auto mid = [&](int a, int b) {
        const auto key = detail::edge_key(a, b);
        if (auto it = midpoint.find(key); it != midpoint.end()) return it->second;
        Vec<Dim> x = 0.5 * (verts[a] + verts[b]);
        const bool on_boundary = boundary_edges.count(key) > 0;
        if (on_boundary) x /= x.norm();
        const int id = static_cast<int>(verts.size());
        verts.push_back(x);
        bnd.push_back(on_boundary ? 1 : 0);
        midpoint.emplace(key, id);
        return id;
    };

    std::vector<Element<Dim>> children;
    children.reserve(mesh.num_elements() * (1u << Dim));
    for (const auto& el : mesh.elements()) {
        if constexpr (Dim == 2) {
            const int m01 = mid(el[0], el[1]), m12 = mid(el[1], el[2]), m02 = mid(el[0], el[2]);
            children.push_back({el[0], m01, m02});
            children.push_back({m01, el[1], m12});
            children.push_back({m02, m12, el[2]});
            children.push_back({m01, m12, m02});
        } else {
            const int m01 = mid(el[0], el[1]), m02 = mid(el[0], el[2]), m03 = mid(el[0], el[3]);
            const int m12 = mid(el[1], el[2]), m13 = mid(el[1], el[3]), m23 = mid(el[2], el[3]);
            children.push_back({el[0], m01, m02, m03});
            children.push_back({m01, el[1], m12, m13});
            children.push_back({m02, m12, el[2], m23});
            children.push_back({m03, m13, m23, el[3]});
            const std::array<std::pair<int, int>, 3> diag{{{m01, m23}, {m02, m13}, {m03, m12}}};
            const std::array<std::array<int, 4>, 3> ring{{{m02, m03, m13, m12},
                                                          {m01, m03, m23, m12},
                                                          {m01, m02, m23, m13}}};
            int best = 0;
            double best_len = std::numeric_limits<double>::infinity();
            for (int d = 0; d < 3; ++d) {
                const double len = (verts[diag[d].first] - verts[diag[d].second]).norm();
                if (len < best_len - 1e-14) {
                    best_len = len;
                    best = d;
                }
            }
            const auto& r = ring[best];
            for (int k = 0; k < 4; ++k)
                children.push_back({diag[best].first, diag[best].second, r[k], r[(k + 1) % 4]});
        }
    }
    return Mesh<Dim>(std::move(verts), std::move(children), std::move(bnd));
}

/// Fan mesh of the ball (hexagon in 2D, octahedron in 3D) refined `level` times.
template <int Dim>
Mesh<Dim> build_ball_mesh(int level) {
    if (level < 0) throw std::invalid_argument("build_ball_mesh: negative level");
    auto verts = detail::coarse_vertices<Dim>();
    std::vector<std::uint8_t> bnd(verts.size(), 1);
    bnd[0] = 0;
    Mesh<Dim> mesh(std::move(verts), detail::coarse_elements<Dim>(), std::move(bnd));
    for (int l = 0; l < level; ++l) mesh = refine(mesh);
    return mesh;
}

template <int Dim>
MeshPtr<Dim> make_ball_mesh(int level) {
    return std::make_shared<const Mesh<Dim>>(build_ball_mesh<Dim>(level));
}

// ---------------------------------------------------------------------------
// Text format
//   N n_vertices n_elements
//   x_1 .. x_N flag          (n_vertices lines)
//   i_0 .. i_N               (n_elements lines, zero-based)

template <int Dim>
void write_mesh(std::ostream& os, const Mesh<Dim>& mesh) {
    os << Dim << ' ' << mesh.num_vertices() << ' ' << mesh.num_elements() << '\n';
    os << std::setprecision(17);
    for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
        for (int d = 0; d < Dim; ++d) os << mesh.vertex(i)[d] << ' ';
        os << (mesh.is_boundary(i) ? 1 : 0) << '\n';
    }
    for (const auto& el : mesh.elements()) {
        for (int k = 0; k <= Dim; ++k) os << el[k] << (k == Dim ? '\n' : ' ');
    }
}

template <int Dim>
Mesh<Dim> read_mesh(std::istream& is) {
    int dim = 0;
    std::size_t nv = 0, ne = 0;
    if (!(is >> dim >> nv >> ne)) throw std::runtime_error("read_mesh: bad header");
    if (dim != Dim) throw std::runtime_error("read_mesh: dimension mismatch");
    std::vector<Vec<Dim>> verts(nv);
    std::vector<std::uint8_t> bnd(nv);
    for (std::size_t i = 0; i < nv; ++i) {
        int flag = 0;
        for (int d = 0; d < Dim; ++d) is >> verts[i][d];
        is >> flag;
        bnd[i] = flag ? 1 : 0;
    }
    std::vector<Element<Dim>> els(ne);
    for (auto& el : els)
        for (int k = 0; k <= Dim; ++k) is >> el[k];
    if (!is) throw std::runtime_error("read_mesh: truncated input");
    return Mesh<Dim>(std::move(verts), std::move(els), std::move(bnd));
}

template <int Dim>
void save_mesh(const std::string& path, const Mesh<Dim>& mesh) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path);
    write_mesh(os, mesh);
}

}  // namespace sobolevlab
