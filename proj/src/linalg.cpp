#include "tprox/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace tprox {

SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& input, bool want_vectors, double tol, int max_sweeps) {
    if (input.rows() != input.cols()) throw std::invalid_argument("jacobi_eigen: matrix must be square");
    if (!input.allFinite()) throw std::invalid_argument("jacobi_eigen: non-finite entries");
    const Eigen::Index n = input.rows();
    Eigen::MatrixXd a = 0.5 * (input + input.transpose());
    Eigen::MatrixXd v;
    if (want_vectors) v = Eigen::MatrixXd::Identity(n, n);

    const double scale = a.norm();
    SymmetricEigen out;
    auto off_norm = [&] {
        double s = 0.0;
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index i = j + 1; i < n; ++i) s += 2.0 * a(i, j) * a(i, j);
        return std::sqrt(s);
    };

    while (scale > 0.0 && off_norm() > tol * scale) {
        if (out.sweeps >= max_sweeps) throw std::runtime_error("jacobi_eigen: no convergence");
        ++out.sweeps;
        for (Eigen::Index p = 0; p < n - 1; ++p) {
            for (Eigen::Index q = p + 1; q < n; ++q) {
                const double apq = a(p, q);
                if (apq == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (Eigen::Index k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                a(p, q) = a(q, p) = 0.0;
                if (want_vectors) {
                    for (Eigen::Index k = 0; k < n; ++k) {
                        const double vkp = v(k, p), vkq = v(k, q);
                        v(k, p) = c * vkp - s * vkq;
                        v(k, q) = s * vkp + c * vkq;
                    }
                }
            }
        }
    }

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    std::stable_sort(order.begin(), order.end(), [&](Eigen::Index x, Eigen::Index y) { return a(x, x) < a(y, y); });
    out.values.resize(n);
    if (want_vectors) out.vectors.resize(n, n);
    for (Eigen::Index k = 0; k < n; ++k) {
        out.values[k] = a(order[k], order[k]);
        if (want_vectors) out.vectors.col(k) = v.col(order[k]);
    }
    return out;
}

double spectral_norm(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    const Eigen::MatrixXd gram = m.rows() <= m.cols() ? Eigen::MatrixXd(m * m.transpose())
                                                      : Eigen::MatrixXd(m.transpose() * m);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(eig.eigenvalues().maxCoeff(), 0.0));
}

Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a) {
    const auto eig = jacobi_eigen(a, true);
    const Eigen::VectorXd root = eig.values.cwiseMax(0.0).cwiseSqrt();
    return eig.vectors * root.asDiagonal() * eig.vectors.transpose();
}

} // namespace tprox
