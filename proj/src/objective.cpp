#include "tprox/objective.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "tprox/errors.hpp"

namespace tprox {

std::string to_string(Variant v) {
    switch (v) {
    case Variant::baseline: return "baseline";
    case Variant::seq_preserving: return "seq_preserving";
    case Variant::adjacent_uniform: return "adjacent_uniform";
    case Variant::dispersive: return "dispersive";
    case Variant::flow: return "flow";
    case Variant::divergence: return "divergence";
    }
    return "unknown";
}

Variant parse_variant(std::string_view name) {
    for (auto v : {Variant::baseline, Variant::seq_preserving, Variant::adjacent_uniform, Variant::dispersive,
                   Variant::flow, Variant::divergence})
        if (name == to_string(v)) return v;
    throw std::invalid_argument("unknown variant '" + std::string(name) + "'");
}

bool is_windowed(Variant v) {
    return v == Variant::adjacent_uniform || v == Variant::flow || v == Variant::divergence;
}

double loss_mse(std::span<const Vector> predictions, const Vector& eps) {
    if (predictions.empty()) throw std::invalid_argument("loss_mse: no predictions");
    double acc = 0.0;
    for (const auto& p : predictions) {
        if (p.size() != eps.size()) throw std::invalid_argument("loss_mse: shape mismatch");
        acc += (eps - p).squaredNorm() / static_cast<double>(eps.size());
    }
    return acc / static_cast<double>(predictions.size());
}

double loss_reg(std::span<const Vector> predictions, std::span<const double> weights) {
    if (predictions.size() < 2) throw std::invalid_argument("loss_reg: need at least two predictions");
    if (weights.size() != predictions.size() - 1)
        throw std::invalid_argument("loss_reg: need exactly K-1 weights");
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < predictions.size(); ++i) {
        if (predictions[i].size() != predictions[i + 1].size()) throw std::invalid_argument("loss_reg: shape mismatch");
        acc += weights[i] * (predictions[i] - predictions[i + 1]).squaredNorm() /
               static_cast<double>(predictions[i].size());
    }
    return acc;
}

double loss_dispersive(std::span<const Vector> hidden, double temperature) {
    if (hidden.size() < 2) throw std::invalid_argument("loss_dispersive: need at least two activations");
    Matrix h(hidden.front().size(), static_cast<Eigen::Index>(hidden.size()));
    for (std::size_t i = 0; i < hidden.size(); ++i) h.col(static_cast<Eigen::Index>(i)) = hidden[i];
    return loss_dispersive_columns(h, temperature, nullptr);
}

double loss_dispersive_columns(const Matrix& h, double temperature, Matrix* grad) {
    const Eigen::Index B = h.cols();
    if (B < 2) throw std::invalid_argument("loss_dispersive: need at least two activations");
    if (!(temperature > 0.0)) throw std::invalid_argument("loss_dispersive: temperature must be positive");
    const Vector sq = h.colwise().squaredNorm().transpose();
    Matrix dist = -2.0 * (h.transpose() * h);
    dist.colwise() += sq;
    dist.rowwise() += sq.transpose();
    dist = dist.cwiseMax(0.0);
    Matrix logits = -dist / temperature;
    double m = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < B; ++j)
        for (Eigen::Index i = 0; i < B; ++i)
            if (i != j) m = std::max(m, logits(i, j));
    Matrix e = (logits.array() - m).exp().matrix();
    e.diagonal().setZero();
    const double s = e.sum();
    const double value = m + std::log(s) - std::log(static_cast<double>(B) * static_cast<double>(B - 1));
    if (grad) {
        // dL/dh_i = -(4 / (temperature * s)) * sum_j e_ij (h_i - h_j)
        const Vector rows = e.rowwise().sum();
        *grad = (h * rows.asDiagonal() - h * e) * (-4.0 / (temperature * s));
    }
    return value;
}

LossResult loss_total(const ObjectiveConfig& cfg, const DenoiserModel& model, const TrainingBatch& batch,
                      bool want_grad) {
    const int F = batch.frame_count();
    const int nW = batch.window_count();
    if (F == 0 || nW <= 0) throw std::invalid_argument("loss_total: empty batch");
    if (batch.target.rows() != batch.noisy.rows() || batch.target.cols() != F ||
        batch.t.size() != static_cast<std::size_t>(F) || batch.window_offset.back() != F)
        throw std::invalid_argument("loss_total: inconsistent batch");

    const bool uses_reg = cfg.variant == Variant::adjacent_uniform || cfg.variant == Variant::flow ||
                          cfg.variant == Variant::divergence;
    const bool uses_disp = cfg.variant == Variant::dispersive;

    LossResult res;
    res.tape = forward_batch(model, batch.noisy, batch.t);
    const Matrix& out = res.tape.output;
    const double d = static_cast<double>(out.rows());
    const Matrix resid = out - batch.target;

    Matrix dout;
    if (want_grad) dout.setZero(out.rows(), F);

    double mse = 0.0;
    for (int w = 0; w < nW; ++w) {
        const int lo = batch.window_offset[w], hi = batch.window_offset[w + 1];
        const double K = static_cast<double>(hi - lo);
        for (int f = lo; f < hi; ++f) {
            mse += resid.col(f).squaredNorm() / (d * K);
            if (want_grad) dout.col(f) += (2.0 / (d * K * nW)) * resid.col(f);
        }
    }
    res.loss.l_mse = mse / nW;

    if (uses_reg) {
        double reg = 0.0;
        for (const auto& e : batch.edges) {
            const double w = cfg.variant == Variant::adjacent_uniform ? 1.0 : e.w;
            const Vector diff = out.col(e.a) - out.col(e.b);
            reg += w * diff.squaredNorm() / d;
            if (want_grad) {
                const Vector g = (2.0 * cfg.lambda * w / (d * nW)) * diff;
                dout.col(e.a) += g;
                dout.col(e.b) -= g;
            }
        }
        res.loss.l_reg = reg / nW;
        res.loss.lambda = cfg.lambda;
    }

    Matrix dhidden;
    if (uses_disp) {
        res.loss.l_disp = loss_dispersive_columns(res.tape.a1, cfg.temperature, want_grad ? &dhidden : nullptr);
        res.loss.lambda_disp = cfg.lambda_disp;
        if (want_grad) dhidden *= cfg.lambda_disp;
    }

    res.loss.l_total = res.loss.l_mse + res.loss.lambda * res.loss.l_reg + res.loss.lambda_disp * res.loss.l_disp;
    if (!std::isfinite(res.loss.l_total)) throw NumericalDivergence("loss_total: non-finite loss");
    if (want_grad) res.grad = backward(model, res.tape, dout, uses_disp ? &dhidden : nullptr);
    return res;
}

} // namespace tprox
