#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tprox/denoiser.hpp"

namespace tprox {

struct GraphEdge {
    int i = 0;
    int j = 0;
    double w = 1.0;
};

// Undirected weighted graph, each pair stored once, no self-loops, positive weights.
struct LocalGraph {
    int n = 0;
    std::vector<GraphEdge> edges;

    void validate() const;
    static LocalGraph path(std::span<const double> weights);  // nodes 0..K-1 joined in order
};

// L = D - W.
Matrix laplacian(const LocalGraph& g);

bool is_connected(const LocalGraph& g);

struct AlgebraicConnectivity {
    double lambda2 = 0.0;
    bool connected = false;  // when false lambda2 is exactly 0
};

// Second-smallest Laplacian eigenvalue via the cyclic Jacobi solver.
AlgebraicConnectivity lambda2(const LocalGraph& g);

struct DirichletEnergies {
    double e_s = 0.0;                // 1/2 sum w ||f_i - f_j||^2
    std::optional<double> e_g;       // 1/2 sum w ||J_i - J_j||_F^2 (only with Jacobians)
};

DirichletEnergies dirichlet_energies(std::span<const Vector> outputs, const std::vector<Matrix>* jacobians,
                                     const LocalGraph& g);

struct BoundCheck {
    bool holds = false;
    double lhs = 0.0;
    double rhs = 0.0;
    double slack = 0.0;  // rhs - lhs
};

// ||(u_i - u_j) - (J_i^T s_ij + D_ij^T f_j)|| with s_ij = f_i - f_j, D_ij = J_i - J_j.
// Exact (zero up to rounding) when u = J^T f, i.e. for the loss 1/2 ||f||^2 of the given field f.
double decomposition_residual(const Vector& u_i, const Vector& u_j, const Matrix& J_i, const Matrix& J_j,
                              const Vector& f_i, const Vector& f_j);

struct DecompositionCheck {
    double residual_output = 0.0;    // f = raw network output, u = grad ||eps - f||^2
    double residual_centered = 0.0;  // f = output - eps, u = grad 1/2 ||eps - f||^2 (exact form)
    double scale = 0.0;              // ||u_i - u_j|| for the centred form
};

// Both readings of the pairwise gradient decomposition for the squared-error loss at shared noise `eps`.
DecompositionCheck verify_decomposition(const Vector& u_i, const Vector& u_j, const Matrix& J_i, const Matrix& J_j,
                                        const Vector& f_i, const Vector& f_j, const Vector& eps);

// ||u_i - u_j||^2 <= 2 G^2 ||s_ij||^2 + 2 F^2 ||D_ij||_2^2 (spectral norm of D_ij).
BoundCheck verify_pairwise_bound(const Vector& u_i, const Vector& u_j, const Vector& s_ij, const Matrix& D_ij,
                                 double G, double F);

// (1/N) sum ||u_i - mean||^2 <= 1/(N lambda2) sum_E w ||u_i - u_j||^2. Throws on disconnected graphs.
BoundCheck verify_poincare(std::span<const Vector> u, const LocalGraph& g, double rel_tol = 1e-9);

// K frames of one shared-noise window with their edge weights.
struct ProbeWindow {
    Matrix noisy;                 // d x K
    int t = 0;
    Vector eps;                   // shared target
    std::vector<double> weights;  // K - 1
};

struct AnalysisReport {
    double e_s = 0.0;
    double e_g = 0.0;
    double lambda2 = 0.0;
    double G = 0.0;
    double F = 0.0;
    double grad_variance = 0.0;  // LHS: (1/N) sum ||u_i - mean u||^2
    double bound_rhs = 0.0;      // 4/(N lambda2) (G^2 E_S + F^2 E_G)
    double poincare_rhs = 0.0;   // 1/(N lambda2) sum_E w ||u_i - u_j||^2
    bool bound_holds = false;
    std::vector<double> d_ij_norms;  // Frobenius, per edge
    std::vector<BoundCheck> pairwise;
    std::vector<DecompositionCheck> decomposition;
    double grad_norm = 0.0;       // ||mean u||
    double param_travel = 0.0;

    // Same quantities read with the raw output and loss ||eps - f||^2 (F = max ||f||).
    double raw_grad_variance = 0.0;
    double raw_F = 0.0;
    double raw_bound_rhs = 0.0;
    std::vector<BoundCheck> raw_pairwise;
};

// Full window analysis with the per-sample loss l_i = 1/2 ||eps - f_i||^2 and the window's
// residual field f_i - eps; G and F are exact suprema over the window. Needs Jacobians.
AnalysisReport verify_variance_bound(const DenoiserModel& model, const ProbeWindow& window,
                                     std::size_t jacobian_budget = 2'000'000);

struct ProbeStatistics {
    double grad_variance = 0.0;  // mean over windows of the within-window variance
    double e_s = 0.0;            // mean over windows
    double grad_norm = 0.0;      // norm of the mean gradient over all probe frames
};

// Jacobian-free statistics over several probe windows (any model size).
ProbeStatistics probe_statistics(const DenoiserModel& model, std::span<const ProbeWindow> windows);

struct DynamicsPoint {
    std::int64_t step = 0;
    double grad_norm = 0.0;
    double param_travel = 0.0;
    double grad_variance = 0.0;
    double mean_d_ij = 0.0;  // NaN when the model is too large for Jacobians
};

struct CheckpointParams {
    std::int64_t step = 0;
    std::vector<double> params;
};

// ||theta_k - theta_0|| plus probe statistics at each checkpoint. `interval_grad_norms`, when
// non-empty, supplies the training-time mean gradient norm per checkpoint instead of the probe's.
std::vector<DynamicsPoint> track_dynamics(const Architecture& arch, std::span<const CheckpointParams> checkpoints,
                                          std::span<const ProbeWindow> probes,
                                          std::span<const double> interval_grad_norms = {},
                                          std::size_t jacobian_budget = 2'000'000);

double param_distance(std::span<const double> a, std::span<const double> b);

} // namespace tprox
