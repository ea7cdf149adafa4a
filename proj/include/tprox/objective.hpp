#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tprox/denoiser.hpp"

namespace tprox {

enum class Variant { baseline, seq_preserving, adjacent_uniform, dispersive, flow, divergence };

std::string to_string(Variant v);
Variant parse_variant(std::string_view name);

// Windowed variants train on shared-noise K-frame windows; the others on independent single frames.
bool is_windowed(Variant v);

struct LossBreakdown {
    double l_mse = 0.0;
    double l_reg = 0.0;
    double l_disp = 0.0;
    double lambda = 0.0;       // effective regulariser weight (0 for single-frame variants)
    double lambda_disp = 0.0;  // effective dispersive weight (0 unless dispersive)
    double l_total = 0.0;
};

// mean_i ||eps - pred_i||^2 / d
double loss_mse(std::span<const Vector> predictions, const Vector& eps);

// sum_i w_{i,i+1} ||pred_i - pred_{i+1}||^2 / d
double loss_reg(std::span<const Vector> predictions, std::span<const double> weights);

// log( 1/(B(B-1)) sum_{i != j} exp(-||h_i - h_j||^2 / temperature) )
double loss_dispersive(std::span<const Vector> hidden, double temperature);

// Same as loss_dispersive on the columns of `hidden`, also writing d/dhidden into `grad` when non-null.
double loss_dispersive_columns(const Matrix& hidden, double temperature, Matrix* grad);

struct Edge {
    int a = 0;
    int b = 0;
    double w = 1.0;
};

// Frames of window k are columns [window_offset[k], window_offset[k+1]); all frames of one window
// share t and target. Edges join adjacent frames of a window.
struct TrainingBatch {
    Matrix noisy;
    Matrix target;
    std::vector<int> t;
    std::vector<int> window_offset{0};
    std::vector<Edge> edges;

    int window_count() const { return static_cast<int>(window_offset.size()) - 1; }
    int frame_count() const { return static_cast<int>(noisy.cols()); }
};

struct ObjectiveConfig {
    Variant variant = Variant::baseline;
    double lambda = 0.1;
    double lambda_disp = 0.005;
    double temperature = 0.5;
};

struct LossResult {
    LossBreakdown loss;
    std::vector<double> grad;  // empty unless requested
    ForwardTape tape;
};

// L_total = mean over windows of (l_mse + lambda * l_reg) + lambda_disp * l_disp(first hidden layer).
// baseline / seq_preserving ignore edges; adjacent_uniform forces w = 1.
LossResult loss_total(const ObjectiveConfig& cfg, const DenoiserModel& model, const TrainingBatch& batch,
                      bool want_grad = true);

} // namespace tprox
