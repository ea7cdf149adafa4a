#include <chrono>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "tprox/ddim.hpp"
#include "tprox/errors.hpp"
#include "tprox/harness.hpp"
#include "tprox/rng.hpp"

namespace tprox {

namespace {

constexpr std::uint64_t kInitTag = 0x1A17;
constexpr std::uint64_t kOrderTag = 0x0DE5;
constexpr std::uint64_t kNoiseTag = 0x2015E;
constexpr std::uint64_t kProbeTag = 0x9B0BE;
constexpr std::uint64_t kEvalTag = 0xE7A1;

std::vector<Frame> window_frames(const Dataset& ds, const WindowRef& ref) {
    const auto& frames = ds.clips[ref.clip].frames;
    return {frames.begin() + ref.start, frames.begin() + ref.start + ref.length};
}

void put_frame(Matrix& m, Eigen::Index col, const std::vector<double>& px) {
    m.col(col) = Eigen::Map<const Vector>(px.data(), static_cast<Eigen::Index>(px.size()));
}

double edge_weight(ProximityKind kind, const Frame& a, const Frame& b, int tau, const std::vector<double>& eps,
                   const RunConfig& cfg, const NoiseSchedule& sched) {
    const WeightFloors floors{cfg.delta, cfg.eps_w};
    switch (kind) {
    case ProximityKind::flow:
        return weight(pi_flow(a, b, FlowConfig{cfg.flow_block, cfg.flow_radius, true, cfg.flow_smoothness}), kind, floors);
    case ProximityKind::divergence:
        return weight(pi_divergence(a, b, tau, cfg.dt, eps, sched), kind, floors);
    case ProximityKind::uniform:
        break;
    }
    return 1.0;
}

bool uses_regularizer(Variant v) {
    return v == Variant::adjacent_uniform || v == Variant::flow || v == Variant::divergence;
}

} // namespace

IterationMode iteration_mode(Variant v) {
    if (is_windowed(v)) return IterationMode::windowed;
    return v == Variant::seq_preserving ? IterationMode::sequence_preserving : IterationMode::iid_frames;
}

ProximityKind proximity_kind(Variant v) {
    if (v == Variant::flow) return ProximityKind::flow;
    if (v == Variant::divergence) return ProximityKind::divergence;
    return ProximityKind::uniform;
}

NoiseSchedule schedule_for(const RunConfig& cfg) { return build_schedule(cfg.T, cfg.beta_start, cfg.beta_end); }

DenoiserModel initial_model(const RunConfig& cfg, const Architecture& arch) {
    return init_model(arch, derive_key(cfg.seed, kInitTag));
}

BatchBuilder::BatchBuilder(const Dataset& ds, const RunConfig& cfg, const NoiseSchedule& sched)
    : ds_(ds), sched_(sched), cfg_(cfg),
      iter_(ds, is_windowed(cfg.variant) ? cfg.K : 1, iteration_mode(cfg.variant), derive_key(cfg.seed, kOrderTag)),
      batch_size_(cfg.effective_batch_size()) {}

std::int64_t BatchBuilder::steps_per_epoch() const {
    const auto items = static_cast<std::int64_t>(iter_.items_per_epoch());
    return (items + batch_size_ - 1) / batch_size_;
}

double BatchBuilder::flow_weight(std::uint32_t clip, std::uint32_t frame) {
    const std::uint64_t key = (static_cast<std::uint64_t>(clip) << 32) | frame;
    auto it = flow_cache_.find(key);
    if (it != flow_cache_.end()) return it->second;
    const auto& frames = ds_.clips[clip].frames;
    const double w = edge_weight(ProximityKind::flow, frames[frame], frames[frame + 1], 0, {}, cfg_, sched_);
    flow_cache_.emplace(key, w);
    return w;
}

TrainingBatch BatchBuilder::batch(std::int64_t step) {
    const auto B = static_cast<std::uint64_t>(batch_size_);
    const int len = iter_.window_length();
    const auto d = static_cast<Eigen::Index>(ds_.clips.front().frames.front().size());
    const bool reg = uses_regularizer(cfg_.variant);
    const ProximityKind kind = proximity_kind(cfg_.variant);

    TrainingBatch tb;
    tb.noisy.resize(d, static_cast<Eigen::Index>(B) * len);
    tb.target.resize(d, tb.noisy.cols());
    tb.t.reserve(static_cast<std::size_t>(tb.noisy.cols()));
    Eigen::Index col = 0;
    for (std::uint64_t j = 0; j < B; ++j) {
        std::uint64_t epoch = 0;
        const WindowRef ref = iter_.at(static_cast<std::uint64_t>(step) * B + j, &epoch);
        FrameWindow w;
        w.frames = window_frames(ds_, ref);
        w = corrupt_window(std::move(w), sched_, derive_key(cfg_.seed, kNoiseTag, epoch, ref.id));
        const Eigen::Index base = col;
        for (std::size_t k = 0; k < w.frames.size(); ++k, ++col) {
            put_frame(tb.noisy, col, w.noisy[k].pixels);
            put_frame(tb.target, col, w.eps);
            tb.t.push_back(w.tau);
        }
        tb.window_offset.push_back(static_cast<int>(col));
        if (!reg) continue;
        for (std::uint32_t k = 0; k + 1 < ref.length; ++k) {
            double wt = 1.0;
            if (kind == ProximityKind::flow)
                wt = flow_weight(ref.clip, ref.start + k);
            else if (kind == ProximityKind::divergence)
                wt = edge_weight(kind, w.frames[k], w.frames[k + 1], w.tau, w.eps, cfg_, sched_);
            tb.edges.push_back({static_cast<int>(base + k), static_cast<int>(base + k + 1), wt});
        }
    }
    return tb;
}

Trainer::Trainer(const RunConfig& cfg, DenoiserModel init)
    : objective_{cfg.variant, cfg.lambda, cfg.lambda_disp, cfg.temperature},
      lr_(cfg.lr),
      decay_(cfg.ema_decay),
      adam_(cfg.optimizer == "adam"),
      model_(std::move(init)),
      ema_(model_.params) {
    if (adam_) {
        m_.assign(model_.size(), 0.0);
        v_.assign(model_.size(), 0.0);
    }
}

LossResult Trainer::step(const TrainingBatch& batch) {
    LossResult res = loss_total(objective_, model_, batch, true);
    for (double g : res.grad)
        if (!std::isfinite(g)) throw NumericalDivergence("non-finite gradient");
    auto& p = model_.params;
    ++steps_;
    if (adam_) {
        constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
        for (std::size_t k = 0; k < p.size(); ++k) {
            m_[k] = b1 * m_[k] + (1.0 - b1) * res.grad[k];
            v_[k] = b2 * v_[k] + (1.0 - b2) * res.grad[k] * res.grad[k];
            p[k] -= lr_ * (m_[k] / c1) / (std::sqrt(v_[k] / c2) + eps);
        }
    } else {
        for (std::size_t k = 0; k < p.size(); ++k) p[k] -= lr_ * res.grad[k];
    }
    for (std::size_t k = 0; k < p.size(); ++k) ema_[k] = decay_ * ema_[k] + (1.0 - decay_) * p[k];
    return res;
}

Checkpoint Trainer::checkpoint() const {
    return Checkpoint{model_.arch, model_.params, ema_, static_cast<std::uint64_t>(steps_)};
}

std::vector<ProbeWindow> make_probe_windows(const Dataset& ds, const RunConfig& cfg, const NoiseSchedule& sched,
                                            ProximityKind kind) {
    const int K = std::max(cfg.K, 2);
    std::vector<std::uint32_t> eligible;
    for (std::size_t c = 0; c < ds.clips.size(); ++c)
        if (ds.clips[c].frames.size() >= static_cast<std::size_t>(K)) eligible.push_back(static_cast<std::uint32_t>(c));
    if (eligible.empty()) throw std::invalid_argument("make_probe_windows: no clip has K frames");
    auto rng = CounterRng::keyed(cfg.seed, kProbeTag);
    std::vector<ProbeWindow> out;
    for (int p = 0; p < cfg.probe_windows; ++p) {
        const std::uint32_t clip = eligible[rng.below(eligible.size())];
        const auto nf = ds.clips[clip].frames.size();
        const auto start = static_cast<std::uint32_t>(rng.below(nf - static_cast<std::size_t>(K) + 1));
        FrameWindow w;
        w.frames = window_frames(ds, WindowRef{clip, start, static_cast<std::uint32_t>(K), 0});
        w = corrupt_window(std::move(w), sched, derive_key(cfg.seed, kProbeTag, static_cast<std::uint64_t>(p)));
        ProbeWindow pw;
        pw.noisy = frames_to_matrix(w.noisy);
        pw.t = w.tau;
        pw.eps = Eigen::Map<const Vector>(w.eps.data(), static_cast<Eigen::Index>(w.eps.size()));
        for (int k = 0; k + 1 < K; ++k)
            pw.weights.push_back(edge_weight(kind, w.frames[k], w.frames[k + 1], w.tau, w.eps, cfg, sched));
        out.push_back(std::move(pw));
    }
    return out;
}

Evaluator::Evaluator(std::span<const Frame> train, std::span<const Frame> val, std::uint64_t extractor_seed,
                     std::size_t min_samples)
    : fx_(extractor_seed, train.empty() ? 1 : train.front().channels, train.empty() ? 16 : train.front().height,
          train.empty() ? 16 : train.front().width),
      min_samples_(min_samples) {
    if (train.size() < min_samples || val.size() < min_samples)
        throw std::invalid_argument("Evaluator: reference splits need at least " + std::to_string(min_samples) +
                                    " frames");
    train_fit_ = fit_gaussian(fx_.features(train));
    val_fit_ = fit_gaussian(fx_.features(val));
}

Evaluator::Result Evaluator::evaluate(std::span<const Frame> samples) const {
    if (samples.size() < min_samples_)
        throw std::invalid_argument("evaluate: need at least " + std::to_string(min_samples_) + " samples");
    const auto fit = fit_gaussian(fx_.features(samples));
    Result r;
    r.fid_train = frechet_distance(fit, train_fit_);
    r.fid_val = frechet_distance(fit, val_fit_);
    r.diversity = diversity(samples, fx_);
    return r;
}

RunRecord train(const RunConfig& cfg, std::ostream* log) {
    namespace fs = std::filesystem;
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    const Dataset ds = read_dataset(cfg.data);
    if (ds.clips.empty() || ds.clips.front().frames.empty()) throw ConfigError("training split is empty");
    const Frame& proto = ds.clips.front().frames.front();
    const Architecture arch = Architecture::preset(cfg.model, proto.channels, proto.height, proto.width);
    const NoiseSchedule sched = schedule_for(cfg);
    const DenoiserModel init = initial_model(cfg, arch);

    std::optional<Evaluator> evaluator;
    std::vector<Frame> train_frames;
    if (cfg.sample_count > 0 && !cfg.val_data.empty()) {
        train_frames = dataset_frames(ds);
        const auto val_frames = dataset_frames(read_dataset(cfg.val_data));
        evaluator.emplace(train_frames, val_frames, cfg.extractor_seed);
    }

    const ProximityKind probe_kind = proximity_kind(cfg.variant);
    const auto probes = make_probe_windows(ds, cfg, sched, probe_kind);
    const bool full_analysis =
        static_cast<std::size_t>(arch.frame_dim()) * arch.param_count() <= 2'000'000;

    RunRecord rec;
    rec.config = cfg;
    rec.config_hash = cfg.hash();
    const fs::path out(cfg.out_dir);
    fs::create_directories(out);
    rec.config_path = out / "config.txt";
    rec.metrics_path = out / "metrics.csv";
    {
        std::ofstream os(rec.config_path, std::ios::binary);
        if (!os) throw IoError("cannot write " + rec.config_path.string());
        os << cfg.serialize() << "config_hash = " << rec.config_hash << '\n';
    }
    fs::remove(rec.metrics_path);

    BatchBuilder builder(ds, cfg, sched);
    Trainer trainer(cfg, init);
    const std::int64_t per_epoch = builder.steps_per_epoch();
    const std::int64_t total = cfg.max_steps > 0 ? cfg.max_steps : cfg.epochs * per_epoch;

    MetricsRow blank;
    blank.variant = to_string(cfg.variant);
    blank.seed = cfg.seed;
    blank.config_hash = rec.config_hash;

    auto analysis_into = [&](MetricsRow& row) {
        const DenoiserModel& m = trainer.model();
        row.param_travel = param_distance(m.params, init.params);
        if (full_analysis) {
            double es = 0, eg = 0, l2 = 0, var = 0, rhs = 0, dij = 0;
            std::size_t edges = 0;
            for (const auto& p : probes) {
                const auto r = verify_variance_bound(m, p);
                es += r.e_s;
                eg += r.e_g;
                l2 += r.lambda2;
                var += r.grad_variance;
                rhs += r.bound_rhs;
                for (double v : r.d_ij_norms) dij += v;
                edges += r.d_ij_norms.size();
            }
            const double n = static_cast<double>(probes.size());
            row.e_s = es / n;
            row.e_g = eg / n;
            row.lambda2 = l2 / n;
            row.grad_variance = var / n;
            row.bound_rhs = rhs / n;
            row.mean_d_ij = dij / static_cast<double>(edges);
        } else {
            const auto st = probe_statistics(m, probes);
            row.grad_variance = st.grad_variance;
            row.e_s = st.e_s;
            double l2 = 0;
            for (const auto& p : probes) l2 += lambda2(LocalGraph::path(p.weights)).lambda2;
            row.lambda2 = l2 / static_cast<double>(probes.size());
        }
    };
    auto eval_into = [&](MetricsRow& row) {
        const auto samples = ddim_sample(DenoiserModel{arch, trainer.ema()}, sched, cfg.sample_steps,
                                         derive_key(cfg.seed, kEvalTag), cfg.sample_count);
        const auto r = evaluator->evaluate(samples);
        row.fid_train = r.fid_train;
        row.fid_val = r.fid_val;
        row.diversity = r.diversity;
    };
    auto save = [&] {
        char name[32];
        std::snprintf(name, sizeof name, "ckpt_%08lld.tdck", static_cast<long long>(trainer.steps()));
        rec.checkpoints.push_back(out / name);
        write_checkpoint(trainer.checkpoint(), rec.checkpoints.back());
    };

    {
        MetricsRow row = blank;
        row.step = 0;
        analysis_into(row);
        save();
        row.wall_seconds = elapsed();
        append_metrics(rec.metrics_path, {row});
    }

    double s_mse = 0, s_reg = 0, s_disp = 0, s_total = 0, s_gn = 0;
    int interval = 0;
    double epoch_start = elapsed();
    for (std::int64_t s = 1; s <= total; ++s) {
        const TrainingBatch batch = builder.batch(s - 1);
        LossResult res;
        try {
            res = trainer.step(batch);
        } catch (const NumericalDivergence& e) {
            std::ostringstream msg;
            msg << e.what() << " at step " << s << " (epoch " << (s - 1) / per_epoch << ", variant "
                << to_string(cfg.variant) << ", seed " << cfg.seed << ", lr " << cfg.lr;
            if (interval > 0) msg << ", recent loss_total " << s_total / interval;
            msg << ")";
            throw NumericalDivergence(msg.str());
        }
        double gn = 0.0;
        for (double g : res.grad) gn += g * g;
        s_mse += res.loss.l_mse;
        s_reg += res.loss.l_reg;
        s_disp += res.loss.l_disp;
        s_total += res.loss.l_total;
        s_gn += std::sqrt(gn);
        ++interval;

        const bool is_log = s % cfg.log_interval == 0 || s == total;
        const bool is_ckpt = s % cfg.checkpoint_interval == 0 || s == total;
        const bool is_eval = evaluator && ((cfg.eval_interval > 0 && s % cfg.eval_interval == 0) || s == total);
        if (is_log || is_ckpt || is_eval) {
            MetricsRow row = blank;
            row.step = s;
            const double n = interval;
            row.loss_mse = s_mse / n;
            row.loss_reg = s_reg / n;
            row.loss_disp = s_disp / n;
            row.loss_total = s_total / n;
            row.grad_norm = s_gn / n;
            s_mse = s_reg = s_disp = s_total = s_gn = 0;
            interval = 0;
            if (is_ckpt) {
                analysis_into(row);
                save();
            } else {
                row.param_travel = param_distance(trainer.model().params, init.params);
            }
            if (is_eval) eval_into(row);
            row.wall_seconds = elapsed();
            append_metrics(rec.metrics_path, {row});
            if (log) {
                *log << "step " << s << "/" << total << " loss " << *row.loss_total;
                if (row.fid_val) *log << " fid_val " << *row.fid_val;
                *log << '\n';
            }
        }
        if (s % per_epoch == 0 || s == total) {
            const double now = elapsed();
            rec.epoch_seconds.push_back(now - epoch_start);
            epoch_start = now;
        }
    }
    rec.steps = total;
    return rec;
}

} // namespace tprox
