#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tprox/analysis.hpp"
#include "tprox/checkpoint.hpp"
#include "tprox/config.hpp"
#include "tprox/metrics.hpp"
#include "tprox/metrics_log.hpp"
#include "tprox/objective.hpp"
#include "tprox/proximity.hpp"
#include "tprox/schedule.hpp"
#include "tprox/synthgen.hpp"

namespace tprox {

IterationMode iteration_mode(Variant v);
ProximityKind proximity_kind(Variant v);

// Training split plus a validation split of n/5 clips drawn from the disjoint index range [n, n + n/5).
struct DataSplits {
    Dataset train;
    Dataset val;
};
DataSplits generate_splits(int n_clips, const ClipDistribution& dist, std::uint64_t seed);

std::vector<Frame> dataset_frames(const Dataset& ds);
Dataset frames_as_dataset(std::span<const Frame> frames);  // single-frame clips

// Deterministic batches: step s consumes items [s*B, (s+1)*B) of the iterator stream. Each item's
// (tau, eps) is keyed by (seed, epoch, item id); windows share one pair across their frames.
class BatchBuilder {
public:
    BatchBuilder(const Dataset& ds, const RunConfig& cfg, const NoiseSchedule& sched);

    int batch_size() const { return batch_size_; }
    std::int64_t steps_per_epoch() const;
    TrainingBatch batch(std::int64_t step);
    const WindowIterator& iterator() const { return iter_; }

private:
    double flow_weight(std::uint32_t clip, std::uint32_t frame);

    const Dataset& ds_;
    const NoiseSchedule& sched_;
    RunConfig cfg_;
    WindowIterator iter_;
    int batch_size_;
    std::unordered_map<std::uint64_t, double> flow_cache_;
};

// Parameter updates (SGD or Adam) followed by the EMA update.
class Trainer {
public:
    Trainer(const RunConfig& cfg, DenoiserModel init);

    LossResult step(const TrainingBatch& batch);

    const DenoiserModel& model() const { return model_; }
    const std::vector<double>& ema() const { return ema_; }
    std::int64_t steps() const { return steps_; }
    Checkpoint checkpoint() const;

private:
    ObjectiveConfig objective_;
    double lr_;
    double decay_;
    bool adam_;
    DenoiserModel model_;
    std::vector<double> ema_;
    std::vector<double> m_, v_;
    std::int64_t steps_ = 0;
};

DenoiserModel initial_model(const RunConfig& cfg, const Architecture& arch);
NoiseSchedule schedule_for(const RunConfig& cfg);

// Fixed windows of K frames drawn by the run seed (independent of the variant), corrupted with
// shared noise; edge weights follow `kind` (uniform weights are 1).
std::vector<ProbeWindow> make_probe_windows(const Dataset& ds, const RunConfig& cfg, const NoiseSchedule& sched,
                                            ProximityKind kind);

// Reference statistics for desk-FID; the training and validation fits are computed once.
class Evaluator {
public:
    Evaluator(std::span<const Frame> train, std::span<const Frame> val, std::uint64_t extractor_seed,
              std::size_t min_samples = 500);

    struct Result {
        double fid_train = 0.0;
        double fid_val = 0.0;
        double diversity = 0.0;
    };
    Result evaluate(std::span<const Frame> samples) const;
    const FeatureExtractor& extractor() const { return fx_; }

private:
    FeatureExtractor fx_;
    GaussianFit train_fit_, val_fit_;
    std::size_t min_samples_;
};

struct RunRecord {
    RunConfig config;
    std::string config_hash;
    std::filesystem::path metrics_path;
    std::filesystem::path config_path;
    std::vector<std::filesystem::path> checkpoints;
    std::vector<double> epoch_seconds;
    std::int64_t steps = 0;
};

// Writes config.txt, metrics.csv and ckpt_<step>.tdck into cfg.out_dir. Progress goes to `log` if given.
RunRecord train(const RunConfig& cfg, std::ostream* log = nullptr);

// DDIM samples from the EMA parameters, stored as single-frame clips.
std::vector<Frame> sample(const Checkpoint& ckpt, const NoiseSchedule& sched, int n, std::uint64_t seed,
                          int steps = 100);
void sample_to_file(const std::filesystem::path& checkpoint, const std::filesystem::path& out, int n,
                    std::uint64_t seed, int steps, const NoiseSchedule& sched);

// Full window analysis of a checkpoint over the run's probe windows.
struct AnalysisRow {
    std::int64_t step = 0;
    int window = 0;
    AnalysisReport report;
    bool pairwise_holds = false;
};
std::vector<AnalysisRow> analyze(const Checkpoint& ckpt, const Dataset& ds, const RunConfig& cfg,
                                 std::size_t jacobian_budget = 2'000'000);
std::string analysis_header();
std::string format_analysis_row(const AnalysisRow& row);

struct RunSummary {
    std::filesystem::path dir;
    RunConfig config;
    std::vector<MetricsRow> rows;
};
RunSummary load_run(const std::filesystem::path& dir);

struct ComparisonRow {
    std::string label;  // run directory, or the variant name for seed-averaged rows
    std::string variant;
    int runs = 1;
    double best_fid_val = 0.0;
    std::int64_t best_step = 0;
    std::optional<std::int64_t> steps_to_target;
    double final_fid_val = 0.0;
    double final_fid_train = 0.0;
    std::optional<double> final_grad_variance;
    std::optional<double> final_param_travel;
    std::optional<double> speedup_ratio;  // steps_to_target / reference steps_to_target
};

struct ComparisonReport {
    double target = 0.0;
    std::string reference;
    std::vector<ComparisonRow> runs;
    std::vector<ComparisonRow> variants;  // validation curves averaged over seeds
};

// Needs >= 2 runs over the same dataset and extractor seed. The target defaults to the best
// (seed-averaged) validation desk-FID of the reference variant, which defaults to the first run's.
ComparisonReport compare(std::span<const RunSummary> runs, std::optional<double> target = std::nullopt,
                         const std::string& reference_variant = "");
std::string format_comparison(const ComparisonReport& report);

} // namespace tprox
