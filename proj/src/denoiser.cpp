#include "tprox/denoiser.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tprox/errors.hpp"
#include "tprox/rng.hpp"

namespace tprox {

namespace {

using ConstMap = Eigen::Map<const Matrix>;
using MutMap = Eigen::Map<Matrix>;

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Matrix silu(const Matrix& z) {
    return z.unaryExpr([](double v) { return v * sigmoid(v); });
}

Matrix silu_grad(const Matrix& z) {
    return z.unaryExpr([](double v) {
        const double s = sigmoid(v);
        return s * (1.0 + v * (1.0 - s));
    });
}

// Aligned, owned copies of the weight blocks.
struct Views {
    Matrix w1, w2, w3;
    Vector b1, b2, b3;
    Vector gw;
    double gb = 0.0;
};

Views views(const DenoiserModel& m) {
    const auto& a = m.arch;
    const auto L = a.layout();
    const double* p = m.params.data();
    Views v{ConstMap(p + L.w1, a.hidden1, a.input_dim()),
            ConstMap(p + L.w2, a.hidden2, a.hidden1),
            ConstMap(p + L.w3, a.frame_dim(), a.hidden2),
            Eigen::Map<const Vector>(p + L.b1, a.hidden1),
            Eigen::Map<const Vector>(p + L.b2, a.hidden2),
            Eigen::Map<const Vector>(p + L.b3, a.frame_dim()),
            Vector(),
            0.0};
    if (a.gated_skip) {
        v.gw = Eigen::Map<const Vector>(p + L.gate, a.time_dim);
        v.gb = p[L.gate + a.time_dim];
    }
    return v;
}

double gate_scale(const Architecture& a) { return 1.0 / std::sqrt(static_cast<double>(a.frame_dim())); }

void check_model(const DenoiserModel& m) {
    if (m.params.size() != m.arch.param_count())
        throw std::invalid_argument("denoiser: parameter count does not match architecture");
}


Matrix jacobian_from_tape(const DenoiserModel& model, const ForwardTape& tape, Eigen::Index col) {
    const auto P = static_cast<Eigen::Index>(model.size());
    const int d = model.arch.frame_dim();
    Matrix J(d, P);
    Vector e = Vector::Zero(d);
    Vector row(P);
    for (int k = 0; k < d; ++k) {
        e[k] = 1.0;
        backward_column(model, tape, col, e, std::span<double>(row.data(), row.size()));
        J.row(k) = row.transpose();
        e[k] = 0.0;
    }
    return J;
}

} // namespace

std::size_t Architecture::param_count() const { return layout().end; }

Architecture::Layout Architecture::layout() const {
    Layout L{};
    const std::size_t d = static_cast<std::size_t>(frame_dim());
    L.w1 = 0;
    L.b1 = L.w1 + static_cast<std::size_t>(hidden1) * input_dim();
    L.w2 = L.b1 + hidden1;
    L.b2 = L.w2 + static_cast<std::size_t>(hidden2) * hidden1;
    L.w3 = L.b2 + hidden2;
    L.b3 = L.w3 + d * hidden2;
    L.gate = L.b3 + d;
    L.end = L.gate + (gated_skip ? static_cast<std::size_t>(time_dim) + 1 : 0);
    return L;
}

std::string Architecture::descriptor() const {
    std::ostringstream os;
    os << "mlp c=" << channels << " h=" << height << " w=" << width << " emb=" << time_dim
       << " hidden=" << hidden1 << "," << hidden2 << " act=silu skip=" << (gated_skip ? "gate" : "none");
    return os.str();
}

Architecture Architecture::parse(std::string_view descriptor) {
    Architecture a;
    a.gated_skip = false;
    std::istringstream is{std::string(descriptor)};
    std::string tok;
    is >> tok;
    if (tok != "mlp") throw std::invalid_argument("architecture descriptor: expected 'mlp'");
    bool seen_hidden = false;
    while (is >> tok) {
        const auto eq = tok.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("architecture descriptor: bad token " + tok);
        const std::string key = tok.substr(0, eq);
        const std::string val = tok.substr(eq + 1);
        if (key == "c") a.channels = std::stoi(val);
        else if (key == "h") a.height = std::stoi(val);
        else if (key == "w") a.width = std::stoi(val);
        else if (key == "emb") a.time_dim = std::stoi(val);
        else if (key == "hidden") {
            const auto comma = val.find(',');
            if (comma == std::string::npos) throw std::invalid_argument("architecture descriptor: hidden needs two widths");
            a.hidden1 = std::stoi(val.substr(0, comma));
            a.hidden2 = std::stoi(val.substr(comma + 1));
            seen_hidden = true;
        } else if (key == "act") {
            if (val != "silu") throw std::invalid_argument("architecture descriptor: unsupported activation " + val);
        } else if (key == "skip") {
            if (val != "gate" && val != "none") throw std::invalid_argument("architecture descriptor: bad skip " + val);
            a.gated_skip = val == "gate";
        } else {
            throw std::invalid_argument("architecture descriptor: unknown key " + key);
        }
    }
    if (!seen_hidden || a.channels <= 0 || a.height <= 0 || a.width <= 0 || a.time_dim < 0 || a.time_dim % 2 != 0 ||
        a.hidden1 <= 0 || a.hidden2 <= 0)
        throw std::invalid_argument("architecture descriptor: invalid dimensions");
    return a;
}

Architecture Architecture::preset(std::string_view name, int channels, int height, int width) {
    Architecture a;
    a.channels = channels;
    a.height = height;
    a.width = width;
    if (name == "base") {
        a.time_dim = 32;
        a.hidden1 = a.hidden2 = 128;
    } else if (name == "tiny") {
        a.time_dim = 8;
        a.hidden1 = a.hidden2 = 8;
    } else {
        throw std::invalid_argument("unknown model preset '" + std::string(name) + "'");
    }
    return a;
}

DenoiserModel init_model(const Architecture& arch, std::uint64_t seed) {
    DenoiserModel m{arch, std::vector<double>(arch.param_count())};
    const auto L = arch.layout();
    CounterRng rng = CounterRng::keyed(seed, 0x1417);
    auto fill = [&](std::size_t from, std::size_t to, int fan_in) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (std::size_t k = from; k < to; ++k) m.params[k] = rng.uniform(-bound, bound);
    };
    fill(L.w1, L.w2, arch.input_dim());
    fill(L.w2, L.w3, arch.hidden1);
    fill(L.w3, L.gate, arch.hidden2);
    return m;  // gate starts closed
}

void time_embedding(int t, int dim, double* out) {
    const int half = dim / 2;
    for (int k = 0; k < half; ++k) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
        out[k] = std::sin(t * freq);
        out[half + k] = std::cos(t * freq);
    }
}

ForwardTape forward_batch(const DenoiserModel& model, const Matrix& noisy, std::span<const int> t) {
    check_model(model);
    const auto& a = model.arch;
    if (noisy.rows() != a.frame_dim()) throw std::invalid_argument("forward: input size does not match architecture");
    if (static_cast<std::size_t>(noisy.cols()) != t.size())
        throw std::invalid_argument("forward: one timestep per column required");
    const auto v = views(model);
    ForwardTape tape;
    const Eigen::Index B = noisy.cols();
    // Columns padded to a multiple of 8; identical inputs then give bit-identical outputs.
    const Eigen::Index Bp = (B + 7) / 8 * 8;
    Matrix input = Matrix::Zero(a.input_dim(), Bp);
    input.topLeftCorner(a.frame_dim(), B) = noisy;
    for (Eigen::Index j = 0; j < B; ++j)
        time_embedding(t[j], a.time_dim, input.col(j).data() + a.frame_dim());

    Matrix z = v.w1 * input;
    tape.z1 = z.leftCols(B);
    tape.z1.colwise() += v.b1;
    tape.a1 = silu(tape.z1);
    Matrix h = Matrix::Zero(a.hidden1, Bp);
    h.leftCols(B) = tape.a1;
    z = v.w2 * h;
    tape.z2 = z.leftCols(B);
    tape.z2.colwise() += v.b2;
    tape.a2 = silu(tape.z2);
    h = Matrix::Zero(a.hidden2, Bp);
    h.leftCols(B) = tape.a2;
    z = v.w3 * h;
    tape.output = z.leftCols(B);
    tape.output.colwise() += v.b3;
    tape.input = input.leftCols(B);
    if (a.gated_skip) {
        tape.gate = (v.gw.transpose() * tape.input.bottomRows(a.time_dim)).transpose();
        tape.gate.array() += v.gb;
        tape.gate *= gate_scale(a);
        tape.output += noisy * tape.gate.asDiagonal();
    }
    if (!tape.output.allFinite())
        throw NumericalDivergence("forward: non-finite denoiser output");
    return tape;
}

Frame forward(const DenoiserModel& model, const Frame& noisy, int t) {
    const auto& a = model.arch;
    if (noisy.channels != a.channels || noisy.height != a.height || noisy.width != a.width)
        throw std::invalid_argument("forward: frame shape does not match architecture");
    const Matrix x = Eigen::Map<const Vector>(noisy.pixels.data(), noisy.size());
    const int ts[1] = {t};
    const auto tape = forward_batch(model, x, ts);
    return column_to_frame(tape.output, 0, a.channels, a.height, a.width);
}

std::vector<double> backward(const DenoiserModel& model, const ForwardTape& tape, const Matrix& grad_output,
                             const Matrix* grad_hidden1) {
    check_model(model);
    const auto& a = model.arch;
    if (grad_output.rows() != tape.output.rows() || grad_output.cols() != tape.output.cols())
        throw std::invalid_argument("backward: gradient shape does not match recorded output");
    const auto v = views(model);
    const auto L = a.layout();
    Vector buffer = Vector::Zero(static_cast<Eigen::Index>(model.params.size()));
    double* g = buffer.data();

    MutMap(g + L.w3, a.frame_dim(), a.hidden2).noalias() = grad_output * tape.a2.transpose();
    Eigen::Map<Vector>(g + L.b3, a.frame_dim()) = grad_output.rowwise().sum();
    if (a.gated_skip) {
        const Vector dgate =
            grad_output.cwiseProduct(tape.input.topRows(a.frame_dim())).colwise().sum().transpose();
        Eigen::Map<Vector>(g + L.gate, a.time_dim) = gate_scale(a) * (tape.input.bottomRows(a.time_dim) * dgate);
        g[L.gate + a.time_dim] = gate_scale(a) * dgate.sum();
    }

    Matrix dz2 = (v.w3.transpose() * grad_output).cwiseProduct(silu_grad(tape.z2));
    MutMap(g + L.w2, a.hidden2, a.hidden1).noalias() = dz2 * tape.a1.transpose();
    Eigen::Map<Vector>(g + L.b2, a.hidden2) = dz2.rowwise().sum();

    Matrix da1 = v.w2.transpose() * dz2;
    if (grad_hidden1) {
        if (grad_hidden1->rows() != da1.rows() || grad_hidden1->cols() != da1.cols())
            throw std::invalid_argument("backward: hidden gradient shape mismatch");
        da1 += *grad_hidden1;
    }
    const Matrix dz1 = da1.cwiseProduct(silu_grad(tape.z1));
    MutMap(g + L.w1, a.hidden1, a.input_dim()).noalias() = dz1 * tape.input.transpose();
    Eigen::Map<Vector>(g + L.b1, a.hidden1) = dz1.rowwise().sum();
    return std::vector<double>(buffer.data(), buffer.data() + buffer.size());
}

void backward_column(const DenoiserModel& model, const ForwardTape& tape, Eigen::Index col,
                     const Vector& grad_output_col, std::span<double> grad_out) {
    const auto& a = model.arch;
    const auto L = a.layout();
    if (grad_out.size() != L.end) throw std::invalid_argument("backward_column: output span has wrong size");
    const auto v = views(model);
    double* g = grad_out.data();

    MutMap(g + L.w3, a.frame_dim(), a.hidden2).noalias() = grad_output_col * tape.a2.col(col).transpose();
    Eigen::Map<Vector>(g + L.b3, a.frame_dim()) = grad_output_col;
    if (a.gated_skip) {
        const double dgate = gate_scale(a) * grad_output_col.dot(tape.input.col(col).head(a.frame_dim()));
        Eigen::Map<Vector>(g + L.gate, a.time_dim) = dgate * tape.input.col(col).tail(a.time_dim);
        g[L.gate + a.time_dim] = dgate;
    }

    const Vector dz2 = (v.w3.transpose() * grad_output_col).cwiseProduct(silu_grad(tape.z2.col(col)));
    MutMap(g + L.w2, a.hidden2, a.hidden1).noalias() = dz2 * tape.a1.col(col).transpose();
    Eigen::Map<Vector>(g + L.b2, a.hidden2) = dz2;

    const Vector dz1 = (v.w2.transpose() * dz2).cwiseProduct(silu_grad(tape.z1.col(col)));
    MutMap(g + L.w1, a.hidden1, a.input_dim()).noalias() = dz1 * tape.input.col(col).transpose();
    Eigen::Map<Vector>(g + L.b1, a.hidden1) = dz1;
}

double GradientBundle::variance() const {
    if (per_sample_grads.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& u : per_sample_grads) acc += (u - mean_grad).squaredNorm();
    return acc / static_cast<double>(per_sample_grads.size());
}

GradientBundle per_sample_gradients(const DenoiserModel& model, const Matrix& noisy, std::span<const int> t,
                                    const Matrix& eps, bool with_jacobians, std::size_t jacobian_budget) {
    if (eps.rows() != noisy.rows() || eps.cols() != noisy.cols())
        throw std::invalid_argument("per_sample_gradients: target shape mismatch");
    const auto& a = model.arch;
    if (with_jacobians && static_cast<std::size_t>(a.frame_dim()) * model.size() > jacobian_budget)
        throw std::invalid_argument("per_sample_gradients: Jacobian exceeds d*P budget");
    const auto tape = forward_batch(model, noisy, t);
    const Eigen::Index N = noisy.cols();
    const auto P = static_cast<Eigen::Index>(model.size());

    GradientBundle b;
    b.mean_grad = Vector::Zero(P);
    if (with_jacobians) b.jacobians.emplace();
    Vector u(P);
    for (Eigen::Index i = 0; i < N; ++i) {
        const Vector resid = tape.output.col(i) - eps.col(i);
        backward_column(model, tape, i, 2.0 * resid, std::span<double>(u.data(), u.size()));
        b.per_sample_grads.push_back(u);
        b.mean_grad += u;
        b.outputs.emplace_back(tape.output.col(i));
        b.losses.push_back(resid.squaredNorm());
        if (with_jacobians) b.jacobians->push_back(jacobian_from_tape(model, tape, i));
    }
    b.mean_grad /= static_cast<double>(N);
    return b;
}

Matrix jacobian(const DenoiserModel& model, const Frame& noisy, int t, std::size_t budget) {
    const auto& a = model.arch;
    if (static_cast<std::size_t>(a.frame_dim()) * model.size() > budget)
        throw std::invalid_argument("jacobian: d*P = " + std::to_string(a.frame_dim() * model.size()) +
                                    " exceeds budget " + std::to_string(budget));
    const Matrix x = Eigen::Map<const Vector>(noisy.pixels.data(), noisy.size());
    const int ts[1] = {t};
    return jacobian_from_tape(model, forward_batch(model, x, ts), 0);
}

Matrix frames_to_matrix(std::span<const Frame> frames) {
    if (frames.empty()) return Matrix();
    Matrix m(static_cast<Eigen::Index>(frames.front().size()), static_cast<Eigen::Index>(frames.size()));
    for (std::size_t j = 0; j < frames.size(); ++j) {
        require_same_shape(frames[j], frames.front(), "frames_to_matrix");
        m.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const Vector>(frames[j].pixels.data(), frames[j].size());
    }
    return m;
}

Frame column_to_frame(const Matrix& m, Eigen::Index col, int channels, int height, int width) {
    Frame f(channels, height, width);
    if (static_cast<std::size_t>(m.rows()) != f.size()) throw std::invalid_argument("column_to_frame: size mismatch");
    Eigen::Map<Vector>(f.pixels.data(), f.size()) = m.col(col);
    return f;
}

} // namespace tprox
