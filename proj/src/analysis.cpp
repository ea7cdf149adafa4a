#include "tprox/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "tprox/linalg.hpp"

namespace tprox {

namespace {

double mean_sq_deviation(std::span<const Vector> u) {
    Vector mean = Vector::Zero(u.front().size());
    for (const auto& x : u) mean += x;
    mean /= static_cast<double>(u.size());
    double acc = 0.0;
    for (const auto& x : u) acc += (x - mean).squaredNorm();
    return acc / static_cast<double>(u.size());
}

bool within(double lhs, double rhs, double rel_tol) { return lhs <= rhs + rel_tol * std::abs(rhs); }

} // namespace

void LocalGraph::validate() const {
    if (n < 1) throw std::invalid_argument("LocalGraph: need at least one node");
    for (const auto& e : edges) {
        if (e.i < 0 || e.j < 0 || e.i >= n || e.j >= n) throw std::invalid_argument("LocalGraph: node out of range");
        if (e.i == e.j) throw std::invalid_argument("LocalGraph: self-loop");
        if (!(e.w > 0.0) || !std::isfinite(e.w)) throw std::invalid_argument("LocalGraph: weights must be positive");
    }
    std::set<std::pair<int, int>> seen;
    for (const auto& e : edges)
        if (!seen.insert(std::minmax(e.i, e.j)).second) throw std::invalid_argument("LocalGraph: duplicate edge");
}

LocalGraph LocalGraph::path(std::span<const double> weights) {
    LocalGraph g;
    g.n = static_cast<int>(weights.size()) + 1;
    for (std::size_t k = 0; k < weights.size(); ++k)
        g.edges.push_back({static_cast<int>(k), static_cast<int>(k) + 1, weights[k]});
    return g;
}

Matrix laplacian(const LocalGraph& g) {
    g.validate();
    Matrix L = Matrix::Zero(g.n, g.n);
    for (const auto& e : g.edges) {
        L(e.i, e.i) += e.w;
        L(e.j, e.j) += e.w;
        L(e.i, e.j) -= e.w;
        L(e.j, e.i) -= e.w;
    }
    return L;
}

bool is_connected(const LocalGraph& g) {
    g.validate();
    std::vector<int> parent(static_cast<std::size_t>(g.n));
    for (int k = 0; k < g.n; ++k) parent[k] = k;
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    int components = g.n;
    for (const auto& e : g.edges) {
        const int a = find(e.i), b = find(e.j);
        if (a != b) {
            parent[a] = b;
            --components;
        }
    }
    return components == 1;
}

AlgebraicConnectivity lambda2(const LocalGraph& g) {
    if (g.n < 2) throw std::invalid_argument("lambda2: need at least two nodes");
    AlgebraicConnectivity out;
    out.connected = is_connected(g);
    if (!out.connected) return out;
    const auto eig = jacobi_eigen(laplacian(g), false);
    out.lambda2 = eig.values[1];
    return out;
}

DirichletEnergies dirichlet_energies(std::span<const Vector> outputs, const std::vector<Matrix>* jacobians,
                                     const LocalGraph& g) {
    g.validate();
    if (outputs.size() != static_cast<std::size_t>(g.n))
        throw std::invalid_argument("dirichlet_energies: one output per node required");
    if (jacobians && jacobians->size() != static_cast<std::size_t>(g.n))
        throw std::invalid_argument("dirichlet_energies: one Jacobian per node required");
    DirichletEnergies out;
    double eg = 0.0;
    for (const auto& e : g.edges) {
        out.e_s += 0.5 * e.w * (outputs[e.i] - outputs[e.j]).squaredNorm();
        if (jacobians) eg += 0.5 * e.w * ((*jacobians)[e.i] - (*jacobians)[e.j]).squaredNorm();
    }
    if (jacobians) out.e_g = eg;
    return out;
}

double decomposition_residual(const Vector& u_i, const Vector& u_j, const Matrix& J_i, const Matrix& J_j,
                              const Vector& f_i, const Vector& f_j) {
    if (J_i.rows() != f_i.size() || J_j.rows() != f_j.size() || J_i.cols() != u_i.size() ||
        J_j.cols() != u_j.size() || u_i.size() != u_j.size())
        throw std::invalid_argument("decomposition_residual: shape mismatch");
    const Vector s = f_i - f_j;
    const Vector predicted = J_i.transpose() * s + (J_i - J_j).transpose() * f_j;
    return ((u_i - u_j) - predicted).norm();
}

DecompositionCheck verify_decomposition(const Vector& u_i, const Vector& u_j, const Matrix& J_i, const Matrix& J_j,
                                        const Vector& f_i, const Vector& f_j, const Vector& eps) {
    DecompositionCheck c;
    c.residual_output = decomposition_residual(u_i, u_j, J_i, J_j, f_i, f_j);
    const Vector half_i = 0.5 * u_i, half_j = 0.5 * u_j;
    c.residual_centered = decomposition_residual(half_i, half_j, J_i, J_j, f_i - eps, f_j - eps);
    c.scale = (half_i - half_j).norm();
    return c;
}

BoundCheck verify_pairwise_bound(const Vector& u_i, const Vector& u_j, const Vector& s_ij, const Matrix& D_ij,
                                 double G, double F) {
    BoundCheck c;
    c.lhs = (u_i - u_j).squaredNorm();
    const double dn = D_ij.size() ? spectral_norm(D_ij) : 0.0;
    c.rhs = 2.0 * G * G * s_ij.squaredNorm() + 2.0 * F * F * dn * dn;
    c.slack = c.rhs - c.lhs;
    c.holds = within(c.lhs, c.rhs, 1e-12);
    return c;
}

BoundCheck verify_poincare(std::span<const Vector> u, const LocalGraph& g, double rel_tol) {
    g.validate();
    if (u.size() != static_cast<std::size_t>(g.n)) throw std::invalid_argument("verify_poincare: one vector per node");
    const auto conn = lambda2(g);
    if (!conn.connected) throw std::invalid_argument("verify_poincare: graph is disconnected");
    BoundCheck c;
    c.lhs = mean_sq_deviation(u);
    double energy = 0.0;
    for (const auto& e : g.edges) energy += e.w * (u[e.i] - u[e.j]).squaredNorm();
    c.rhs = energy / (static_cast<double>(g.n) * conn.lambda2);
    c.slack = c.rhs - c.lhs;
    c.holds = c.slack >= -rel_tol * std::abs(c.rhs);
    return c;
}

AnalysisReport verify_variance_bound(const DenoiserModel& model, const ProbeWindow& w, std::size_t budget) {
    const auto K = w.noisy.cols();
    if (K < 2) throw std::invalid_argument("verify_variance_bound: need at least two frames");
    if (w.weights.size() != static_cast<std::size_t>(K - 1))
        throw std::invalid_argument("verify_variance_bound: need K-1 weights");
    const std::vector<int> ts(static_cast<std::size_t>(K), w.t);
    Matrix targets(w.noisy.rows(), K);
    targets.colwise() = w.eps;
    const auto b = per_sample_gradients(model, w.noisy, ts, targets, true, budget);
    const auto& J = *b.jacobians;

    const auto g = LocalGraph::path(w.weights);
    const auto conn = lambda2(g);
    if (!conn.connected || conn.lambda2 <= 0.0) throw std::invalid_argument("verify_variance_bound: lambda2 = 0");

    std::vector<Vector> half(static_cast<std::size_t>(K)), resid(static_cast<std::size_t>(K));
    AnalysisReport r;
    for (Eigen::Index i = 0; i < K; ++i) {
        half[i] = 0.5 * b.per_sample_grads[i];
        resid[i] = b.outputs[i] - w.eps;
        r.G = std::max(r.G, spectral_norm(J[i]));
        r.F = std::max(r.F, resid[i].norm());
        r.raw_F = std::max(r.raw_F, b.outputs[i].norm());
    }
    const auto energies = dirichlet_energies(resid, &J, g);
    r.e_s = energies.e_s;
    r.e_g = *energies.e_g;
    r.lambda2 = conn.lambda2;
    const double N = static_cast<double>(K);

    r.grad_variance = mean_sq_deviation(half);
    r.bound_rhs = 4.0 / (N * r.lambda2) * (r.G * r.G * r.e_s + r.F * r.F * r.e_g);
    r.poincare_rhs = verify_poincare(half, g).rhs;
    r.bound_holds = within(r.grad_variance, r.bound_rhs, 1e-12);

    r.raw_grad_variance = b.variance();
    r.raw_bound_rhs = 4.0 / (N * r.lambda2) * (r.G * r.G * r.e_s + r.raw_F * r.raw_F * r.e_g);

    for (const auto& e : g.edges) {
        const Matrix D = J[e.i] - J[e.j];
        const Vector s = b.outputs[e.i] - b.outputs[e.j];
        r.d_ij_norms.push_back(D.norm());
        r.pairwise.push_back(verify_pairwise_bound(half[e.i], half[e.j], s, D, r.G, r.F));
        r.raw_pairwise.push_back(verify_pairwise_bound(b.per_sample_grads[e.i], b.per_sample_grads[e.j], s, D, r.G,
                                                       r.raw_F));
        r.decomposition.push_back(verify_decomposition(b.per_sample_grads[e.i], b.per_sample_grads[e.j], J[e.i],
                                                       J[e.j], b.outputs[e.i], b.outputs[e.j], w.eps));
    }
    r.grad_norm = (0.5 * b.mean_grad).norm();
    return r;
}

ProbeStatistics probe_statistics(const DenoiserModel& model, std::span<const ProbeWindow> windows) {
    if (windows.empty()) throw std::invalid_argument("probe_statistics: no probe windows");
    ProbeStatistics s;
    Vector total = Vector::Zero(static_cast<Eigen::Index>(model.size()));
    std::size_t frames = 0;
    for (const auto& w : windows) {
        const auto K = w.noisy.cols();
        const std::vector<int> ts(static_cast<std::size_t>(K), w.t);
        Matrix targets(w.noisy.rows(), K);
        targets.colwise() = w.eps;
        const auto b = per_sample_gradients(model, w.noisy, ts, targets, false);
        std::vector<Vector> half;
        for (const auto& u : b.per_sample_grads) {
            half.push_back(0.5 * u);
            total += half.back();
        }
        frames += static_cast<std::size_t>(K);
        s.grad_variance += mean_sq_deviation(half);
        if (K >= 2) s.e_s += dirichlet_energies(b.outputs, nullptr, LocalGraph::path(w.weights)).e_s;
    }
    s.grad_variance /= static_cast<double>(windows.size());
    s.e_s /= static_cast<double>(windows.size());
    s.grad_norm = (total / static_cast<double>(frames)).norm();
    return s;
}

double param_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw std::invalid_argument("param_distance: size mismatch");
    double acc = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) acc += (a[k] - b[k]) * (a[k] - b[k]);
    return std::sqrt(acc);
}

std::vector<DynamicsPoint> track_dynamics(const Architecture& arch, std::span<const CheckpointParams> checkpoints,
                                          std::span<const ProbeWindow> probes,
                                          std::span<const double> interval_grad_norms, std::size_t budget) {
    if (checkpoints.empty()) throw std::invalid_argument("track_dynamics: no checkpoints");
    if (!interval_grad_norms.empty() && interval_grad_norms.size() != checkpoints.size())
        throw std::invalid_argument("track_dynamics: one gradient norm per checkpoint required");
    const bool jac = static_cast<std::size_t>(arch.frame_dim()) * arch.param_count() <= budget;
    std::vector<DynamicsPoint> out;
    for (std::size_t k = 0; k < checkpoints.size(); ++k) {
        const auto& c = checkpoints[k];
        DenoiserModel m{arch, c.params};
        DynamicsPoint p;
        p.step = c.step;
        p.param_travel = param_distance(c.params, checkpoints.front().params);
        p.mean_d_ij = std::numeric_limits<double>::quiet_NaN();
        if (!probes.empty()) {
            const auto st = probe_statistics(m, probes);
            p.grad_variance = st.grad_variance;
            p.grad_norm = st.grad_norm;
            if (jac) {
                double acc = 0.0;
                int edges = 0;
                for (const auto& w : probes) {
                    std::vector<Matrix> J;
                    for (Eigen::Index i = 0; i < w.noisy.cols(); ++i)
                        J.push_back(jacobian(m, column_to_frame(w.noisy, i, arch.channels, arch.height, arch.width),
                                             w.t, budget));
                    for (std::size_t i = 0; i + 1 < J.size(); ++i, ++edges) acc += (J[i] - J[i + 1]).norm();
                }
                p.mean_d_ij = edges ? acc / edges : 0.0;
            }
        }
        if (!interval_grad_norms.empty()) p.grad_norm = interval_grad_norms[k];
        out.push_back(p);
    }
    return out;
}

} // namespace tprox
