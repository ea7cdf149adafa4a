#pragma once

#include <string>
#include <vector>

#include "tprox/frame.hpp"
#include "tprox/schedule.hpp"

namespace tprox {

struct FlowVector {
    double dy = 0.0;
    double dx = 0.0;
};

// Dense per-pixel flow i -> j; every pixel of a block carries that block's vector.
struct FlowField {
    int height = 0;
    int width = 0;
    int radius = 0;
    std::vector<FlowVector> vectors;  // row-major, height * width

    const FlowVector& at(int y, int x) const { return vectors[static_cast<std::size_t>(y) * width + x]; }
};

struct FlowConfig {
    int block = 4;
    int radius = 3;
    bool subpixel = true;     // parabolic refinement of the SSD minimum along each axis
    double smoothness = 10.0; // block-grid smoothness weight; 0 keeps the raw matches
};

// Integer block match for one block: the displacement within [-radius, radius]^2 minimising the SSD
// against frame_j (edge-clamped sampling). Ties go to the smaller displacement magnitude, then to the
// lexicographically smaller (dy, dx).
struct BlockMatch {
    int dy = 0;
    int dx = 0;
    double sub_dy = 0.0;      // refined vector (equals the integer one without refinement)
    double sub_dx = 0.0;
    double confidence = 0.0;  // max SSD - min SSD over the search window
};

std::vector<BlockMatch> match_blocks(const Frame& frame_i, const Frame& frame_j, const FlowConfig& cfg = {});

// Dense flow i -> j. Block matches (optionally refined) are fused with a confidence-weighted
// smoothness prior on the block grid: V minimises sum_k c_k |v_k - m_k|^2 + s * sum_{k~l} |v_k - v_l|^2,
// so textureless blocks take the motion of their textured neighbours.
FlowField estimate_flow(const Frame& frame_i, const Frame& frame_j, const FlowConfig& cfg = {});

// Mean squared flow magnitude over pixels.
double pi_flow(const FlowField& flow);
double pi_flow(const Frame& frame_i, const Frame& frame_j, const FlowConfig& cfg = {});

// Central difference in diffusion time of the normalised squared distance between the two frames
// corrupted with the same noise `eps`. Endpoints outside [0, T-1] are clamped and the difference is
// taken over the actual gap.
double pi_divergence(const Frame& frame_i, const Frame& frame_j, int t, int dt, const std::vector<double>& eps,
                     const NoiseSchedule& sched);

enum class ProximityKind { flow, divergence, uniform };

std::string to_string(ProximityKind k);

struct WeightFloors {
    double delta = 1e-3;  // flow: w = 1 / (pi + delta)
    double eps_w = 1e-3;  // divergence: w = 1 / (eps_w + sqrt|pi|)
};

struct ProximityWeight {
    double pi = 0.0;
    double w = 1.0;
    ProximityKind kind = ProximityKind::uniform;
};

double weight(double pi, ProximityKind kind, const WeightFloors& floors = {});

ProximityWeight make_weight(double pi, ProximityKind kind, const WeightFloors& floors = {});

} // namespace tprox
