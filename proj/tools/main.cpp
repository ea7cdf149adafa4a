#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "tprox/errors.hpp"
#include "tprox/harness.hpp"

namespace {

using namespace tprox;

// --config file first, then explicit flags.
struct RunOptions {
    std::string config_file;
    std::map<std::string, std::string> flags;

    void attach(CLI::App* app) {
        app->add_option("--config", config_file, "flat key = value configuration file");
        for (const auto& key : RunConfig::keys()) {
            flags[key];
            app->add_option("--" + key, flags[key], "overrides " + key);
        }
    }

    RunConfig resolve() const {
        RunConfig cfg = config_file.empty() ? RunConfig{} : load_config(config_file);
        for (const auto& [k, v] : flags)
            if (!v.empty()) cfg.set(k, v);
        return cfg;
    }
};

int run(int argc, char** argv) {
    CLI::App app{"temporal-proximity diffusion training toolkit"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "render the synthetic moving-shape dataset");
    int clips = 200, frames = 13, size = 16;
    std::uint64_t data_seed = 0;
    std::string out_path, val_out;
    gen->add_option("--clips", clips, "training clips (validation gets clips/5)");
    gen->add_option("--frames", frames, "frames per clip");
    gen->add_option("--size", size, "frame height and width");
    gen->add_option("--seed", data_seed, "dataset seed");
    gen->add_option("--out", out_path, "training split")->required();
    gen->add_option("--val-out", val_out, "validation split");

    auto* tr = app.add_subcommand("train", "train one variant");
    RunOptions tr_opts;
    tr_opts.attach(tr);
    bool quiet = false;
    tr->add_flag("--quiet", quiet, "no progress output");

    auto* sm = app.add_subcommand("sample", "DDIM samples from a checkpoint's EMA parameters");
    RunOptions sm_opts;
    sm_opts.attach(sm);
    std::string ckpt_path;
    int n = -1;
    sm->add_option("--checkpoint", ckpt_path, "checkpoint file")->required();
    sm->add_option("-n", n, "number of samples (default: sample_count)");
    sm->add_option("--out", out_path, "sample file")->required();

    auto* ev = app.add_subcommand("evaluate", "desk-FID against both splits and diversity");
    RunOptions ev_opts;
    ev_opts.attach(ev);
    std::string samples_path, metrics_path;
    std::int64_t step = 0;
    ev->add_option("--samples", samples_path, "sample file")->required();
    ev->add_option("--metrics", metrics_path, "metrics CSV to append to");
    ev->add_option("--step", step, "step recorded in the metrics row");

    auto* an = app.add_subcommand("analyze", "variance-bound analysis of checkpoints on probe windows");
    RunOptions an_opts;
    an_opts.attach(an);
    std::vector<std::string> ckpts;
    an->add_option("--checkpoint", ckpts, "checkpoint files")->required();
    an->add_option("--out", out_path, "analysis CSV (default stdout)");

    auto* cmp = app.add_subcommand("compare", "compare finished runs");
    std::vector<std::string> run_dirs;
    std::optional<double> target;
    std::string reference;
    cmp->add_option("runs", run_dirs, "run directories")->required();
    cmp->add_option("--target", target, "validation desk-FID threshold");
    cmp->add_option("--reference", reference, "reference variant for speedup ratios");
    cmp->add_option("--out", out_path, "comparison CSV (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    auto write_text = [](const std::string& path, const std::string& text) {
        if (path.empty()) {
            std::cout << text;
            return;
        }
        std::ofstream os(path, std::ios::binary);
        if (!os || !(os << text)) throw IoError("cannot write " + path);
    };

    if (*gen) {
        if (clips < 5 || frames < 2 || size < 4 || size % 4 != 0) throw ConfigError("gen-data: invalid sizes");
        ClipDistribution dist;
        dist.num_frames = frames;
        dist.height = dist.width = size;
        const auto splits = generate_splits(clips, dist, data_seed);
        write_dataset(splits.train, out_path);
        if (!val_out.empty()) write_dataset(splits.val, val_out);
        std::cout << "train: " << splits.train.clips.size() << " clips, " << splits.train.frame_count()
                  << " frames; val: " << splits.val.clips.size() << " clips, " << splits.val.frame_count()
                  << " frames\n";
    } else if (*tr) {
        const RunConfig cfg = tr_opts.resolve();
        const auto rec = train(cfg, quiet ? nullptr : &std::cerr);
        for (std::size_t e = 0; e < rec.epoch_seconds.size(); ++e)
            if (!quiet) std::cerr << "epoch " << e << ": " << rec.epoch_seconds[e] << " s\n";
        std::cout << "steps " << rec.steps << ", config " << rec.config_hash << ", metrics " << rec.metrics_path.string()
                  << ", " << rec.checkpoints.size() << " checkpoints\n";
    } else if (*sm) {
        const RunConfig cfg = sm_opts.resolve();
        sample_to_file(ckpt_path, out_path, n >= 0 ? n : cfg.sample_count, cfg.seed, cfg.sample_steps,
                       schedule_for(cfg));
    } else if (*ev) {
        const RunConfig cfg = ev_opts.resolve();
        if (cfg.data.empty() || cfg.val_data.empty()) throw ConfigError("evaluate: data and val_data are required");
        const auto samples = dataset_frames(read_dataset(samples_path));
        const Evaluator evaluator(dataset_frames(read_dataset(cfg.data)), dataset_frames(read_dataset(cfg.val_data)),
                                  cfg.extractor_seed);
        const auto r = evaluator.evaluate(samples);
        MetricsRow row;
        row.step = step;
        row.variant = to_string(cfg.variant);
        row.seed = cfg.seed;
        row.fid_train = r.fid_train;
        row.fid_val = r.fid_val;
        row.diversity = r.diversity;
        row.config_hash = cfg.hash();
        if (!metrics_path.empty()) append_metrics(metrics_path, {row});
        std::cout << metrics_header() << '\n' << format_metrics_row(row) << '\n';
    } else if (*an) {
        const RunConfig cfg = an_opts.resolve();
        if (cfg.data.empty()) throw ConfigError("analyze: data is required");
        const Dataset ds = read_dataset(cfg.data);
        std::string text = analysis_header() + "\n";
        for (const auto& path : ckpts)
            for (const auto& row : analyze(read_checkpoint(path), ds, cfg)) text += format_analysis_row(row) + "\n";
        write_text(out_path, text);
    } else if (*cmp) {
        std::vector<RunSummary> runs;
        for (const auto& d : run_dirs) runs.push_back(load_run(d));
        write_text(out_path, format_comparison(compare(runs, target, reference)));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericalDivergence& e) {
        std::cerr << "numerical divergence: " << e.what() << '\n';
        return 3;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return 4;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
