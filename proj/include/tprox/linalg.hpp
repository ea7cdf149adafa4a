#pragma once

#include <Eigen/Dense>

namespace tprox {

struct SymmetricEigen {
    Eigen::VectorXd values;   // ascending
    Eigen::MatrixXd vectors;  // column k pairs with values[k]; empty when not requested
    int sweeps = 0;
};

// Cyclic Jacobi rotations until the off-diagonal Frobenius norm falls below tol * ||A||_F.
// Only the lower-and-upper average of `a` is used, so slight asymmetry is tolerated.
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& a, bool want_vectors = true, double tol = 1e-14,
                            int max_sweeps = 100);

// Largest singular value, from the Gram matrix on the smaller side.
double spectral_norm(const Eigen::MatrixXd& m);

// Symmetric PSD square root with negative eigenvalues clipped to zero.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& a);

} // namespace tprox
