#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "tprox/ddim.hpp"
#include "tprox/errors.hpp"
#include "tprox/harness.hpp"

namespace tprox {

namespace {

std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

template <typename T>
std::string num(const std::optional<T>& v) {
    if (!v) return "";
    if constexpr (std::is_floating_point_v<T>)
        return num(static_cast<double>(*v));
    else
        return std::to_string(*v);
}

struct Curve {
    std::vector<std::int64_t> steps;
    std::vector<double> fid_val, fid_train;
};

Curve eval_curve(const RunSummary& r) {
    Curve c;
    for (const auto& row : r.rows)
        if (row.fid_val && row.fid_train) {
            c.steps.push_back(row.step);
            c.fid_val.push_back(*row.fid_val);
            c.fid_train.push_back(*row.fid_train);
        }
    if (c.steps.empty()) throw ConfigError("compare: run " + r.dir.string() + " has no validation desk-FID rows");
    return c;
}

std::optional<double> last_value(const RunSummary& r, std::optional<double> MetricsRow::*field) {
    for (auto it = r.rows.rbegin(); it != r.rows.rend(); ++it)
        if ((*it).*field) return (*it).*field;
    return std::nullopt;
}

std::optional<std::int64_t> first_reaching(const Curve& c, double target) {
    for (std::size_t k = 0; k < c.steps.size(); ++k)
        if (c.fid_val[k] <= target) return c.steps[k];
    return std::nullopt;
}

ComparisonRow summarize(const std::string& label, const std::string& variant, int runs, const Curve& c) {
    ComparisonRow row;
    row.label = label;
    row.variant = variant;
    row.runs = runs;
    const auto best = std::min_element(c.fid_val.begin(), c.fid_val.end());
    row.best_fid_val = *best;
    row.best_step = c.steps[static_cast<std::size_t>(best - c.fid_val.begin())];
    row.final_fid_val = c.fid_val.back();
    row.final_fid_train = c.fid_train.back();
    return row;
}

std::optional<double> mean_of(const std::vector<std::optional<double>>& v) {
    double s = 0.0;
    for (const auto& x : v) {
        if (!x) return std::nullopt;
        s += *x;
    }
    return v.empty() ? std::nullopt : std::optional<double>(s / static_cast<double>(v.size()));
}

} // namespace

DataSplits generate_splits(int n_clips, const ClipDistribution& dist, std::uint64_t seed) {
    if (n_clips < 5) throw ConfigError("gen-data: need at least 5 clips for a validation split");
    DataSplits s;
    s.train = generate_dataset(n_clips, dist, seed, 0);
    s.val = generate_dataset(n_clips / 5, dist, seed, static_cast<std::uint64_t>(n_clips));
    return s;
}

std::vector<Frame> dataset_frames(const Dataset& ds) {
    std::vector<Frame> out;
    out.reserve(ds.frame_count());
    for (const auto& c : ds.clips) out.insert(out.end(), c.frames.begin(), c.frames.end());
    return out;
}

Dataset frames_as_dataset(std::span<const Frame> frames) {
    Dataset ds;
    ds.clips.reserve(frames.size());
    for (const auto& f : frames) ds.clips.push_back(Clip{{f}, {}});
    return ds;
}

std::vector<Frame> sample(const Checkpoint& ckpt, const NoiseSchedule& sched, int n, std::uint64_t seed, int steps) {
    if (n < 0) throw ConfigError("sample: n must be >= 0");
    if (n == 0) return {};
    return ddim_sample(ckpt.ema_model(), sched, steps, seed, n);
}

void sample_to_file(const std::filesystem::path& checkpoint, const std::filesystem::path& out, int n,
                    std::uint64_t seed, int steps, const NoiseSchedule& sched) {
    const Checkpoint ckpt = read_checkpoint(checkpoint);
    const auto frames = sample(ckpt, sched, n, seed, steps);
    write_dataset(frames_as_dataset(frames), out);
}

std::vector<AnalysisRow> analyze(const Checkpoint& ckpt, const Dataset& ds, const RunConfig& cfg,
                                 std::size_t jacobian_budget) {
    const NoiseSchedule sched = schedule_for(cfg);
    const auto probes = make_probe_windows(ds, cfg, sched, proximity_kind(cfg.variant));
    const DenoiserModel init = initial_model(cfg, ckpt.arch);
    const DenoiserModel model = ckpt.model();
    const double travel = param_distance(model.params, init.params);
    std::vector<AnalysisRow> rows;
    for (std::size_t w = 0; w < probes.size(); ++w) {
        AnalysisRow row;
        row.step = static_cast<std::int64_t>(ckpt.step);
        row.window = static_cast<int>(w);
        row.report = verify_variance_bound(model, probes[w], jacobian_budget);
        row.report.param_travel = travel;
        row.pairwise_holds = std::all_of(row.report.pairwise.begin(), row.report.pairwise.end(),
                                         [](const BoundCheck& c) { return c.holds; });
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string analysis_header() {
    return "step,window,e_s,e_g,lambda2,G,F,grad_variance,bound_rhs,poincare_rhs,bound_holds,pairwise_holds,"
           "min_pairwise_slack,mean_d_ij,max_decomposition_residual,grad_norm,param_travel,raw_grad_variance,"
           "raw_bound_rhs,raw_bound_holds,raw_pairwise_holds";
}

std::string format_analysis_row(const AnalysisRow& row) {
    const auto& r = row.report;
    double min_slack = INFINITY, dij = 0.0, resid = 0.0;
    for (const auto& c : r.pairwise) min_slack = std::min(min_slack, c.slack);
    for (double v : r.d_ij_norms) dij += v;
    if (!r.d_ij_norms.empty()) dij /= static_cast<double>(r.d_ij_norms.size());
    for (const auto& d : r.decomposition) resid = std::max(resid, d.residual_centered);
    const bool raw_pair = std::all_of(r.raw_pairwise.begin(), r.raw_pairwise.end(),
                                      [](const BoundCheck& c) { return c.holds; });
    std::ostringstream os;
    os << row.step << ',' << row.window << ',' << num(r.e_s) << ',' << num(r.e_g) << ',' << num(r.lambda2) << ','
       << num(r.G) << ',' << num(r.F) << ',' << num(r.grad_variance) << ',' << num(r.bound_rhs) << ','
       << num(r.poincare_rhs) << ',' << (r.bound_holds ? 1 : 0) << ',' << (row.pairwise_holds ? 1 : 0) << ','
       << num(min_slack) << ',' << num(dij) << ',' << num(resid) << ',' << num(r.grad_norm) << ','
       << num(r.param_travel) << ',' << num(r.raw_grad_variance) << ',' << num(r.raw_bound_rhs) << ','
       << (r.raw_grad_variance <= r.raw_bound_rhs ? 1 : 0) << ',' << (raw_pair ? 1 : 0);
    return os.str();
}

RunSummary load_run(const std::filesystem::path& dir) {
    std::ifstream is(dir / "config.txt", std::ios::binary);
    if (!is) throw IoError("cannot open " + (dir / "config.txt").string());
    std::stringstream ss;
    ss << is.rdbuf();
    RunSummary r;
    r.dir = dir;
    for (const auto& [k, v] : parse_config_text(ss.str()))
        if (k != "config_hash") r.config.set(k, v);
    r.rows = read_metrics(dir / "metrics.csv");
    return r;
}

ComparisonReport compare(std::span<const RunSummary> runs, std::optional<double> target,
                         const std::string& reference_variant) {
    if (runs.size() < 2) throw ConfigError("compare: need at least two runs");
    const RunConfig& first = runs.front().config;
    for (const auto& r : runs) {
        if (r.config.data != first.data || r.config.val_data != first.val_data)
            throw ConfigError("compare: runs use different datasets (" + r.dir.string() + ")");
        if (r.config.extractor_seed != first.extractor_seed)
            throw ConfigError("compare: runs use different extractor seeds (" + r.dir.string() + ")");
    }
    ComparisonReport rep;
    rep.reference = reference_variant.empty() ? to_string(first.variant) : reference_variant;

    std::vector<Curve> curves;
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t k = 0; k < runs.size(); ++k) {
        curves.push_back(eval_curve(runs[k]));
        const std::string v = to_string(runs[k].config.variant);
        if (!groups.count(v)) order.push_back(v);
        groups[v].push_back(k);
    }
    if (!groups.count(rep.reference)) throw ConfigError("compare: no run of reference variant " + rep.reference);

    // Seed-averaged curves over the evaluation steps every run of the variant shares.
    std::map<std::string, Curve> averaged;
    for (const auto& v : order) {
        const auto& idx = groups[v];
        Curve avg;
        for (std::size_t s = 0; s < curves[idx[0]].steps.size(); ++s) {
            const auto step = curves[idx[0]].steps[s];
            double fv = 0, ft = 0;
            bool everywhere = true;
            for (auto k : idx) {
                const auto& c = curves[k];
                const auto it = std::find(c.steps.begin(), c.steps.end(), step);
                if (it == c.steps.end()) {
                    everywhere = false;
                    break;
                }
                const auto pos = static_cast<std::size_t>(it - c.steps.begin());
                fv += c.fid_val[pos];
                ft += c.fid_train[pos];
            }
            if (!everywhere) continue;
            avg.steps.push_back(step);
            avg.fid_val.push_back(fv / static_cast<double>(idx.size()));
            avg.fid_train.push_back(ft / static_cast<double>(idx.size()));
        }
        if (avg.steps.empty()) throw ConfigError("compare: runs of " + v + " share no evaluation steps");
        averaged[v] = std::move(avg);
    }

    const Curve& ref = averaged[rep.reference];
    rep.target = target ? *target : *std::min_element(ref.fid_val.begin(), ref.fid_val.end());
    const auto ref_steps = first_reaching(ref, rep.target);
    const auto ratio = [](std::optional<std::int64_t> s, std::optional<std::int64_t> base) -> std::optional<double> {
        if (!s || !base || *base <= 0) return std::nullopt;
        return static_cast<double>(*s) / static_cast<double>(*base);
    };

    const auto ref_run = groups[rep.reference].front();
    const auto ref_run_steps = first_reaching(curves[ref_run], rep.target);
    for (std::size_t k = 0; k < runs.size(); ++k) {
        auto row = summarize(runs[k].dir.string(), to_string(runs[k].config.variant), 1, curves[k]);
        row.steps_to_target = first_reaching(curves[k], rep.target);
        row.final_grad_variance = last_value(runs[k], &MetricsRow::grad_variance);
        row.final_param_travel = last_value(runs[k], &MetricsRow::param_travel);
        row.speedup_ratio = ratio(row.steps_to_target, ref_run_steps);
        rep.runs.push_back(std::move(row));
    }
    for (const auto& v : order) {
        auto row = summarize(v, v, static_cast<int>(groups[v].size()), averaged[v]);
        row.steps_to_target = first_reaching(averaged[v], rep.target);
        std::vector<std::optional<double>> gv, pt;
        for (auto k : groups[v]) {
            gv.push_back(rep.runs[k].final_grad_variance);
            pt.push_back(rep.runs[k].final_param_travel);
        }
        row.final_grad_variance = mean_of(gv);
        row.final_param_travel = mean_of(pt);
        row.speedup_ratio = ratio(row.steps_to_target, ref_steps);
        rep.variants.push_back(std::move(row));
    }
    return rep;
}

std::string format_comparison(const ComparisonReport& rep) {
    std::ostringstream os;
    os << "scope,label,variant,runs,best_fid_val,best_step,target,reference,steps_to_target,speedup_ratio,"
          "final_fid_val,final_fid_train,final_grad_variance,final_param_travel\n";
    auto emit = [&](const char* scope, const ComparisonRow& r) {
        os << scope << ',' << r.label << ',' << r.variant << ',' << r.runs << ',' << num(r.best_fid_val) << ','
           << r.best_step << ',' << num(rep.target) << ',' << rep.reference << ',' << num(r.steps_to_target) << ','
           << num(r.speedup_ratio) << ',' << num(r.final_fid_val) << ',' << num(r.final_fid_train) << ','
           << num(r.final_grad_variance) << ',' << num(r.final_param_travel) << '\n';
    };
    for (const auto& r : rep.runs) emit("run", r);
    for (const auto& r : rep.variants) emit("variant", r);
    return os.str();
}

} // namespace tprox
