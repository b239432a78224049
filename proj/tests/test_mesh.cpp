#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include <sobolevlab/mesh.hpp>

using namespace sobolevlab;

namespace {

template <int Dim>
std::map<std::vector<int>, int> facet_counts(const Mesh<Dim>& mesh) {
    std::map<std::vector<int>, int> count;
    for (const auto& el : mesh.elements())
        for (int skip = 0; skip <= Dim; ++skip) {
            std::vector<int> f;
            for (int k = 0; k <= Dim; ++k)
                if (k != skip) f.push_back(el[k]);
            std::sort(f.begin(), f.end());
            ++count[f];
        }
    return count;
}

template <int Dim>
void expect_conforming(const Mesh<Dim>& mesh) {
    for (const auto& [facet, n] : facet_counts(mesh)) {
        ASSERT_LE(n, 2);
        if (n == 1) {
            for (int v : facet) EXPECT_TRUE(mesh.is_boundary(v));
        }
    }
}

}  // namespace

TEST(Mesh, HexagonFanArea) {
    const auto m = build_ball_mesh<2>(0);
    EXPECT_EQ(m.num_elements(), 6u);
    EXPECT_NEAR(m.total_volume(), 3.0 * std::sqrt(3.0) / 2.0, 1e-14);
}

TEST(Mesh, HexagonFanMeshSize) {
    EXPECT_NEAR(build_ball_mesh<2>(0).h(), 1.0, 1e-14);
}

TEST(Mesh, OctahedronFanVolume) {
    const auto m = build_ball_mesh<3>(0);
    EXPECT_EQ(m.num_elements(), 8u);
    // 8 corner tetrahedra with unit legs
    EXPECT_NEAR(m.total_volume(), 8.0 / 6.0, 1e-14);
}

TEST(Mesh, RefinementCounts) {
    EXPECT_EQ(build_ball_mesh<2>(1).num_elements(), 24u);
    EXPECT_EQ(build_ball_mesh<2>(3).num_elements(), 6u * 64u);
    for (int l = 0; l < 3; ++l)
        EXPECT_EQ(build_ball_mesh<3>(l + 1).num_elements(), 8u * build_ball_mesh<3>(l).num_elements());
}

TEST(Mesh, EquilateralShapeRatio) {
    const double a = 0.7;
    std::vector<Vec<2>> v = {Vec<2>(0, 0), Vec<2>(a, 0), Vec<2>(a / 2, a * std::sqrt(3.0) / 2)};
    const Mesh<2> m(v, {{0, 1, 2}}, {0, 0, 0});
    // inradius a/(2 sqrt 3), so h/rho = a / (a/sqrt 3)
    EXPECT_NEAR(m.diameter(0) / m.inball_diameter(0), std::sqrt(3.0), 1e-13);
    const MeshMetrics mm = mesh_metrics(m);
    EXPECT_NEAR(mm.q0, 1.0, 1e-15);
    EXPECT_NEAR(mm.sigma, std::sqrt(3.0), 1e-13);
}

TEST(Mesh, NegativeOrientationIsNormalized) {
    std::vector<Vec<2>> v = {Vec<2>(0, 0), Vec<2>(0, 1), Vec<2>(1, 0)};
    const Mesh<2> m(v, {{0, 1, 2}}, {0, 0, 0});
    EXPECT_NEAR(m.volume(0), 0.5, 1e-15);
}

TEST(Mesh, DegenerateElementThrows) {
    std::vector<Vec<2>> v = {Vec<2>(0, 0), Vec<2>(1, 0), Vec<2>(2, 0)};
    EXPECT_THROW(Mesh<2>(v, {{0, 1, 2}}, {0, 0, 0}), std::runtime_error);
}

TEST(Mesh, BadInputsThrow) {
    std::vector<Vec<2>> v = {Vec<2>(0, 0), Vec<2>(1, 0), Vec<2>(0, 1)};
    EXPECT_THROW(Mesh<2>(v, {{0, 1, 3}}, {0, 0, 0}), std::invalid_argument);
    EXPECT_THROW(Mesh<2>(v, {{0, 1, 2}}, {0, 0}), std::invalid_argument);
    EXPECT_THROW(build_ball_mesh<2>(-1), std::invalid_argument);
}

// Halving of h holds asymptotically; the first refinement of the fan and, in
// 3D, the next two are dominated by boundary projection. Measured ratios:
// 2D 0.62, 0.544, 0.519, 0.509, ...; 3D 0.79, 0.579, 0.589, 0.541, 0.514.
template <int Dim>
void check_family(int levels, double sigma_cap) {
    const double ball = Dim == 2 ? M_PI : 4.0 * M_PI / 3.0;
    const double first_ratio = Dim == 2 ? 0.65 : 0.8;
    const double later_ratio = Dim == 2 ? 0.55 : 0.6;
    double prev_vol = 0.0, prev_h = 0.0, prev_sigma = 0.0;
    Mesh<Dim> m = build_ball_mesh<Dim>(0);
    for (int l = 0; l <= levels; ++l) {
        if (l > 0) m = refine(m);
        for (std::size_t i = 0; i < m.num_vertices(); ++i) {
            if (m.is_boundary(i)) {
                EXPECT_LE(std::abs(m.vertex(i).norm() - 1.0), 1e-12);
            } else {
                EXPECT_LT(m.vertex(i).norm(), 1.0);
            }
        }
        for (std::size_t e = 0; e < m.num_elements(); ++e) EXPECT_GT(m.volume(e), 0.0);
        expect_conforming(m);
        EXPECT_GT(m.total_volume(), prev_vol);
        EXPECT_LT(m.total_volume(), ball);
        const MeshMetrics mm = mesh_metrics(m);
        if (l > 0) {
            EXPECT_GE(m.h(), 0.45 * prev_h) << "level " << l;
            EXPECT_LE(m.h(), (l == 1 ? first_ratio : later_ratio) * prev_h) << "level " << l;
            EXPECT_LE(mm.sigma, 1.5 * prev_sigma) << "level " << l;
        }
        EXPECT_LE(mm.sigma, sigma_cap);
        EXPECT_GT(mm.q0, 0.4);
        prev_vol = m.total_volume();
        prev_h = m.h();
        prev_sigma = mm.sigma;
    }
}

TEST(Mesh, FamilyInvariants2D) { check_family<2>(6, 2.5); }
TEST(Mesh, FamilyInvariants3D) { check_family<3>(4, 6.0); }

TEST(Mesh, AreaApproachesDisk) {
    const double a6 = build_ball_mesh<2>(6).total_volume();
    EXPECT_LT(a6, M_PI);
    EXPECT_GT(a6, M_PI - 1e-3);
}

TEST(Mesh, RoundTrip) {
    const auto m = build_ball_mesh<3>(1);
    std::stringstream ss;
    write_mesh(ss, m);
    const auto r = read_mesh<3>(ss);
    ASSERT_EQ(r.num_vertices(), m.num_vertices());
    ASSERT_EQ(r.num_elements(), m.num_elements());
    for (std::size_t i = 0; i < m.num_vertices(); ++i) {
        EXPECT_EQ(r.vertex(i), m.vertex(i));
        EXPECT_EQ(r.is_boundary(i), m.is_boundary(i));
    }
    EXPECT_DOUBLE_EQ(r.total_volume(), m.total_volume());
}

TEST(Mesh, LocateAndBarycentric) {
    const auto m = build_ball_mesh<2>(2);
    const Vec<2> x(0.21, -0.33);
    const long e = m.locate(x);
    ASSERT_GE(e, 0);
    const auto b = m.barycentric(static_cast<std::size_t>(e), x);
    const Vec<2> back = m.map_barycentric(static_cast<std::size_t>(e), b.data());
    EXPECT_LT((back - x).norm(), 1e-14);
    EXPECT_EQ(m.locate(Vec<2>(0.99, 0.99)), -1);
}
