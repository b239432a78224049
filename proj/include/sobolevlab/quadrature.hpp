#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "mesh.hpp"

namespace sobolevlab {

/// Neumaier-compensated running sum.
class CompensatedSum {
public:
    void add(double x) {
        const double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x))
            comp_ += (sum_ - t) + x;
        else
            comp_ += (x - t) + sum_;
        sum_ = t;
    }
    CompensatedSum& operator+=(double x) {
        add(x);
        return *this;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

/// Gauss-Jacobi rule on [0,1] for the weight (1-s)^alpha, n points,
/// computed by Golub-Welsch on the Jacobi recurrence.
inline std::pair<std::vector<double>, std::vector<double>> gauss_jacobi01(int n, double alpha) {
    if (n < 1) throw std::invalid_argument("gauss_jacobi01: need at least one point");
    const double a = alpha, b = 0.0;
    Eigen::VectorXd diag(n), sub(std::max(n - 1, 1));
    for (int k = 0; k < n; ++k) {
        const double s = 2.0 * k + a + b;
        diag[k] = (k == 0 && a + b == 0.0) ? (b - a) / (a + b + 2.0)
                                           : (b * b - a * a) / (s * (s + 2.0));
    }
    for (int k = 1; k < n; ++k) {
        const double s = 2.0 * k + a + b;
        sub[k - 1] = std::sqrt(4.0 * k * (k + a) * (k + b) * (k + a + b) /
                               (s * s * (s + 1.0) * (s - 1.0)));
    }
    std::vector<double> x(n), w(n);
    // integral of (1-x)^a over [-1,1]
    const double mu0 = std::pow(2.0, a + 1.0) / (a + 1.0);
    if (n == 1) {
        x[0] = diag[0];
        w[0] = mu0;
    } else {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
        es.computeFromTridiagonal(diag, sub.head(n - 1), Eigen::ComputeEigenvectors);
        for (int k = 0; k < n; ++k) {
            x[k] = es.eigenvalues()[k];
            const double v0 = es.eigenvectors()(0, k);
            w[k] = mu0 * v0 * v0;
        }
    }
    // map [-1,1] -> [0,1]; (1-s)^a ds = 2^{-a-1} (1-x)^a dx
    const double scale = std::pow(2.0, -a - 1.0);
    for (int k = 0; k < n; ++k) {
        x[k] = 0.5 * (x[k] + 1.0);
        w[k] *= scale;
    }
    return {x, w};
}

/// Conical-product (collapsed Gauss-Jacobi) rule on the reference simplex.
/// Points are stored in barycentric coordinates; weights sum to one, i.e.
/// they are fractions of the element volume.
class QuadratureRule {
public:
    QuadratureRule() = default;

    QuadratureRule(int dim, int order) : dim_(dim), order_(order) {
        if (dim != 2 && dim != 3) throw std::invalid_argument("QuadratureRule: dim must be 2 or 3");
        if (order < 0) throw std::invalid_argument("QuadratureRule: negative order");
        const int n = std::max(1, (order + 2) / 2);
        const auto [xl, wl] = gauss_jacobi01(n, 0.0);
        const auto [x1, w1] = gauss_jacobi01(n, 1.0);
        if (dim == 2) {
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) {
                    const double x = x1[i];
                    const double y = xl[j] * (1.0 - x1[i]);
                    push({1.0 - x - y, x, y}, 2.0 * w1[i] * wl[j]);
                }
        } else {
            const auto [x2, w2] = gauss_jacobi01(n, 2.0);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j)
                    for (int k = 0; k < n; ++k) {
                        const double x = x2[i];
                        const double y = x1[j] * (1.0 - x2[i]);
                        const double z = xl[k] * (1.0 - x2[i]) * (1.0 - x1[j]);
                        push({1.0 - x - y - z, x, y, z}, 6.0 * w2[i] * w1[j] * wl[k]);
                    }
        }
    }

    int dim() const { return dim_; }
    int order() const { return order_; }
    std::size_t size() const { return weights_.size(); }
    /// Barycentric coordinates of point q (dim+1 entries).
    const double* point(std::size_t q) const { return &bary_[q * (dim_ + 1)]; }
    double weight(std::size_t q) const { return weights_[q]; }
    /// Weight on the unit reference simplex (volume 1/dim!).
    double reference_weight(std::size_t q) const {
        return weights_[q] / (dim_ == 2 ? 2.0 : 6.0);
    }

private:
    void push(std::initializer_list<double> b, double w) {
        bary_.insert(bary_.end(), b.begin(), b.end());
        weights_.push_back(w);
    }

    int dim_ = 0;
    int order_ = 0;
    std::vector<double> bary_;
    std::vector<double> weights_;
};

inline int default_quadrature_order(int dim) { return dim == 2 ? 8 : 6; }

/// Sum_q w_q |T| f(x_q) on element `e`. `f` takes a physical point.
template <int Dim, class F>
double integrate_element(const F& f, const Mesh<Dim>& mesh, std::size_t e,
                         const QuadratureRule& rule) {
    if (rule.dim() != Dim) throw std::invalid_argument("integrate_element: rule dimension mismatch");
    double acc = 0.0;
    for (std::size_t q = 0; q < rule.size(); ++q) {
        const double v = f(mesh.map_barycentric(e, rule.point(q)));
        if (!std::isfinite(v))
            throw std::runtime_error("integrate_element: non-finite integrand on element " +
                                     std::to_string(e));
        acc += rule.weight(q) * v;
    }
    return acc * mesh.volume(e);
}

template <int Dim, class F>
double integrate_mesh(const F& f, const Mesh<Dim>& mesh, const QuadratureRule& rule) {
    CompensatedSum sum;
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) sum += integrate_element(f, mesh, e, rule);
    return sum.value();
}

/// Integrates a per-element integrand g(e, q, x) where q indexes the rule's
/// nodes and x is the physical node. Used when the integrand needs the
/// element index (e.g. piecewise-constant gradients).
template <int Dim, class G>
double integrate_elementwise(const G& g, const Mesh<Dim>& mesh, const QuadratureRule& rule) {
    if (rule.dim() != Dim) throw std::invalid_argument("integrate_elementwise: rule dimension mismatch");
    CompensatedSum sum;
    for (std::size_t e = 0; e < mesh.num_elements(); ++e) {
        double acc = 0.0;
        for (std::size_t q = 0; q < rule.size(); ++q) {
            const double v = g(e, q, mesh.map_barycentric(e, rule.point(q)));
            if (!std::isfinite(v))
                throw std::runtime_error("integrate_elementwise: non-finite integrand on element " +
                                         std::to_string(e));
            acc += rule.weight(q) * v;
        }
        sum += acc * mesh.volume(e);
    }
    return sum.value();
}

}  // namespace sobolevlab
