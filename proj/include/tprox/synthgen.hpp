#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tprox/frame.hpp"

namespace tprox {

enum class ShapeKind { gaussian_blob, rectangle, bar };

std::string to_string(ShapeKind k);

// Everything needed to render one clip deterministically.
struct ClipSpec {
    int num_frames = 13;
    int height = 16;
    int width = 16;
    int channels = 1;
    ShapeKind shape = ShapeKind::gaussian_blob;
    double amplitude = 1.0;      // peak intensity in (0, 1]
    double size_major = 1.5;     // blob sigma or rectangle half-extent along the shape axis (px)
    double size_minor = 1.5;     // blob sigma or half-extent across the shape axis (px)
    double start_x = 8.0;        // centre at frame 0 (px, continuous; pixel centres at k + 0.5)
    double start_y = 8.0;
    double heading = 0.0;        // direction of travel at frame 0 (rad)
    double turn_rate = 0.0;      // heading change per px travelled (rad/px)
    double orientation = 0.0;    // shape rotation at frame 0 (rad)
    double spin = 0.0;           // rotation per px travelled (rad/px)
    double breathe = 0.0;        // relative scale amplitude, modulated along arc length
    std::vector<double> speed;   // per-step displacement magnitude, num_frames - 1 entries (px/frame)

    // Radius outside which the rendered shape is below 1% of its peak (largest scale reached).
    double support_radius() const;
};

struct Clip {
    std::vector<Frame> frames;
    std::vector<std::array<double, 2>> true_displacement;  // (dx, dy) between frame i and i + 1
};

// Renders a clip. Centre positions fold back into the feasible box so the support stays in frame;
// recorded displacements are the centre differences actually rendered.
Clip render_clip(const ClipSpec& spec);

// Parameter ranges for random clip specs.
struct ClipDistribution {
    int num_frames = 13;
    int height = 16;
    int width = 16;
    double speed_min = 0.0;
    double speed_max = 3.0;
    double blob_sigma_min = 1.1;
    double blob_sigma_max = 1.5;
    double rect_half_min = 1.5;
    double rect_half_max = 2.5;
    double bar_half_length_min = 2.5;
    double bar_half_length_max = 3.5;
    double bar_half_width_min = 0.8;
    double bar_half_width_max = 1.1;
    double amplitude_min = 0.7;
    double amplitude_max = 1.0;
    double max_turn_rate = 0.15;
    double max_spin = 0.04;
    double max_breathe = 0.05;
};

// Per-clip spec drawn from the distribution. Speed ramps smoothly between one endpoint from the lower
// half of [speed_min, speed_max] and one from the upper half, so every clip has slow and fast segments.
ClipSpec sample_clip_spec(const ClipDistribution& dist, std::uint64_t seed, std::uint64_t clip_index);

struct Dataset {
    std::vector<Clip> clips;

    std::size_t frame_count() const;
};

// Clips [first_index, first_index + n_clips) of the stream keyed by `seed`.
Dataset generate_dataset(int n_clips, const ClipDistribution& dist, std::uint64_t seed, std::uint64_t first_index = 0);

// Little-endian "TDV1" container. Pixels and displacements stored as f32.
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);
std::vector<unsigned char> encode_dataset(const Dataset& ds);
Dataset decode_dataset(const std::vector<unsigned char>& bytes);

enum class IterationMode { iid_frames, sequence_preserving, windowed };

// A contiguous frame run inside one clip.
struct WindowRef {
    std::uint32_t clip = 0;
    std::uint32_t start = 0;
    std::uint32_t length = 1;
    std::uint64_t id = 0;  // stable index of this item in the unshuffled enumeration
};

// Epoch-ordered item stream: single frames for iid / sequence-preserving, length-K windows
// (stride 1, never crossing clips) for windowed.
class WindowIterator {
public:
    WindowIterator(const Dataset& ds, int K, IterationMode mode, std::uint64_t seed);

    std::size_t items_per_epoch() const { return items_.size(); }
    std::vector<WindowRef> epoch(std::uint64_t epoch_index) const;

    // Infinite stream: item `i` of the concatenation of epochs 0, 1, ...
    WindowRef at(std::uint64_t i, std::uint64_t* epoch_out = nullptr) const;

    int window_length() const { return K_; }
    IterationMode mode() const { return mode_; }

private:
    std::vector<WindowRef> items_;
    std::vector<std::vector<std::uint32_t>> clip_items_;  // per clip, for sequence-preserving order
    int K_;
    IterationMode mode_;
    std::uint64_t seed_;
    mutable std::uint64_t cached_epoch_ = ~std::uint64_t{0};
    mutable std::vector<WindowRef> cached_order_;
};

} // namespace tprox
