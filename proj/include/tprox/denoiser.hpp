#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "tprox/frame.hpp"

namespace tprox {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// flatten(frame) ++ sinusoidal(t) -> affine -> SiLU -> affine -> SiLU -> affine -> frame shape.
// With `gated_skip` the output adds g(t) * x, where g(t) = (v . emb(t) + c) / sqrt(frame_dim) is a learned
// scalar gate.
struct Architecture {
    int channels = 1;
    int height = 16;
    int width = 16;
    int time_dim = 32;
    int hidden1 = 128;
    int hidden2 = 128;
    bool gated_skip = true;

    int frame_dim() const { return channels * height * width; }
    int input_dim() const { return frame_dim() + time_dim; }
    std::size_t param_count() const;

    // Offsets of each parameter block inside the flat vector (column-major weights).
    struct Layout {
        std::size_t w1, b1, w2, b2, w3, b3, gate, end;  // gate: time_dim weights + 1 bias
    };
    Layout layout() const;

    std::string descriptor() const;
    static Architecture parse(std::string_view descriptor);

    // "base": 128x128 hidden, 32-dim time embedding (~87k params on 16x16x1).
    // "tiny": 8x8 hidden, 8-dim embedding (<5k params) for Jacobian studies. Both use the gated skip.
    static Architecture preset(std::string_view name, int channels = 1, int height = 16, int width = 16);

    bool operator==(const Architecture&) const = default;
};

struct DenoiserModel {
    Architecture arch;
    std::vector<double> params;

    std::size_t size() const { return params.size(); }
};

// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias.
DenoiserModel init_model(const Architecture& arch, std::uint64_t seed);

// sin/cos features with geometric frequencies 10000^(-k/half).
void time_embedding(int t, int dim, double* out);

// Activations recorded by a forward pass; columns are samples.
struct ForwardTape {
    Matrix input;  // frame_dim + time_dim rows
    Matrix z1, a1;
    Matrix z2, a2;
    Matrix output;  // frame_dim rows
    Vector gate;    // g(t) per column (empty without the skip)
};

// Batched forward. `noisy` is frame_dim x B; `t` has B entries.
// Throws NumericalDivergence if any output is non-finite.
ForwardTape forward_batch(const DenoiserModel& model, const Matrix& noisy, std::span<const int> t);

Frame forward(const DenoiserModel& model, const Frame& noisy, int t);

// Reverse pass over a recorded batch. `grad_output` is dL/d(output); `grad_hidden1`, when given,
// is an extra dL/d(a1) term (first hidden layer, post-activation). Returns dL/dtheta.
std::vector<double> backward(const DenoiserModel& model, const ForwardTape& tape, const Matrix& grad_output,
                             const Matrix* grad_hidden1 = nullptr);

// Gradient contribution of a single recorded column.
void backward_column(const DenoiserModel& model, const ForwardTape& tape, Eigen::Index col,
                     const Vector& grad_output_col, std::span<double> grad_out);

struct GradientBundle {
    std::vector<Vector> per_sample_grads;  // u_i = grad of ||eps_i - f_i||^2
    Vector mean_grad;
    std::vector<Vector> outputs;            // f_i
    std::vector<double> losses;             // l_i
    std::optional<std::vector<Matrix>> jacobians;  // d x P each

    // (1/N) sum ||u_i - mean||^2
    double variance() const;
};

// Per-sample squared-error gradients for columns of `noisy` against per-column targets `eps`.
GradientBundle per_sample_gradients(const DenoiserModel& model, const Matrix& noisy, std::span<const int> t,
                                    const Matrix& eps, bool with_jacobians = false,
                                    std::size_t jacobian_budget = 2'000'000);

// Full d x P Jacobian of the output w.r.t. parameters, one reverse pass per output coordinate.
// Refuses when d * P exceeds `budget`.
Matrix jacobian(const DenoiserModel& model, const Frame& noisy, int t, std::size_t budget = 2'000'000);

Matrix frames_to_matrix(std::span<const Frame> frames);
Frame column_to_frame(const Matrix& m, Eigen::Index col, int channels, int height, int width);

} // namespace tprox
