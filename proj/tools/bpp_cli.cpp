#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "bpp/bench.hpp"
#include "bpp/checkpoint.hpp"
#include "bpp/evaluate.hpp"
#include "bpp/image_io.hpp"
#include "bpp/ops.hpp"
#include "bpp/recipe.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace bpp;

namespace {

json read_json(const fs::path& path) {
    std::ifstream f(path);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    try {
        return json::parse(f);
    } catch (const json::parse_error& e) {
        throw ConfigError("'" + path.string() + "': " + e.what());
    }
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream f(path);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << text;
}

struct BenchConfig {
    Shape dims{1, 3, 720, 1280};
    BenchOptions opts{};
};

Shape parse_dims(const std::string& s) {
    std::vector<std::size_t> v;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, 'x')) {
        try {
            v.push_back(std::stoul(tok));
        } catch (const std::exception&) {
            throw ConfigError("bad dims '" + s + "'");
        }
    }
    if (v.size() == 2) return {1, 3, v[0], v[1]};
    if (v.size() == 4) return {v[0], v[1], v[2], v[3]};
    throw ConfigError("dims must be HxW or NxCxHxW, got '" + s + "'");
}

BenchConfig bench_from_json(const json& j) {
    BenchConfig b;
    if (!j.is_object()) throw ConfigError("bench config must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (key != "dims" && key != "warmup" && key != "iters") throw ConfigError("unknown bench config key '" + key + "'");
    try {
        if (j.contains("dims")) b.dims = parse_dims(j.at("dims").get<std::string>());
        if (j.contains("warmup")) b.opts.warmup = j.at("warmup").get<std::size_t>();
        if (j.contains("iters")) b.opts.iters = j.at("iters").get<std::size_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bench config: ") + e.what());
    }
    return b;
}

// Run config: recipe keys plus an optional "bench" section.
struct RunConfig {
    json recipe = json::object();
    BenchConfig bench;
};

RunConfig load_run_config(const std::string& path) {
    RunConfig rc;
    if (path.empty()) return rc;
    rc.recipe = read_json(path);
    if (!rc.recipe.is_object()) throw ConfigError("'" + path + "' must hold a JSON object");
    if (rc.recipe.contains("bench")) {
        rc.bench = bench_from_json(rc.recipe.at("bench"));
        rc.recipe.erase("bench");
    }
    return rc;
}

void print_record(const StageRecord& r) {
    std::cout << std::fixed << std::setprecision(3) << "[" << r.name << "] " << r.op << " -> " << r.stage
              << "  pre " << r.pre_psnr_y << " dB";
    if (r.trained_psnr_y) std::cout << "  trained " << *r.trained_psnr_y << " dB";
    std::cout << "  selected " << r.best_val_psnr_y << " dB  params " << r.params << "  " << std::setprecision(1)
              << r.wall_seconds << " s\n";
}

void run_steps(json recipe, const json& steps, const std::string& out, std::optional<std::uint64_t> seed,
               const std::map<std::string, Checkpoint>& inputs = {}) {
    recipe["steps"] = steps;
    if (seed) recipe["seed"] = *seed;
    std::vector<std::string> names;
    for (const auto& [name, _] : inputs) names.push_back(name);
    const Recipe r = recipe_from_json(recipe, names);
    const Dataset data = load_dataset(r.data);
    std::cout << "data: " << data.train.size() << " train, " << data.val.size() << " val\n";
    const double bic = evaluate_bicubic(data.val, r.train.eval).psnr_y;
    std::cout << "bicubic val PSNR(Y) " << std::fixed << std::setprecision(3) << bic << " dB\n";
    run_recipe(r, data, out, print_record, inputs);
    std::cout << "run written to " << out << "\n";
}

Dataset eval_data(const std::string& config, const std::string& val_dir) {
    RunConfig rc = load_run_config(config);
    DataConfig dc = rc.recipe.contains("data") ? data_config_from_json(rc.recipe.at("data")) : DataConfig{};
    if (!val_dir.empty()) dc.val_dir = val_dir;
    Dataset d;
    PrepareOptions opts = dc.prepare;
    opts.lr_dir.reset();
    d.val = dc.val_dir ? prepare_pairs(*dc.val_dir, opts) : synth_pairs(dc.val_synth, opts);
    return d;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* env = std::getenv("BPP_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) set_num_threads(n);
    }

    CLI::App app{"bpp: efficient x3 super-resolution toolkit"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Show help for all subcommands");

    std::string config, out, ckpt, in, val_dir, dims, ch_list;
    std::optional<std::uint64_t> seed;
    std::size_t target_ch = 0, warmup = 3, iters = 20;
    int threads = 0;
    bool no_finetune = false;
    double p = 0, pb = 0, t = 0;

    auto add_threads = [&](CLI::App* c) {
        c->add_option("--threads", threads, "Worker threads (overrides BPP_THREADS)")->check(CLI::PositiveNumber);
    };

    auto* prep = app.add_subcommand("prepare-data", "Write HR/LR PNG pairs and a manifest");
    std::string hr_dir;
    std::size_t synth_count = 8, synth_size = 288;
    std::uint64_t synth_seed = 1;
    int jpeg_q = 90;
    bool no_degrade = false;
    prep->add_option("--hr", hr_dir, "Directory of HR PNGs (default: synthetic scenes)")->check(CLI::ExistingDirectory);
    prep->add_option("--out", out, "Output directory")->required();
    prep->add_option("--count", synth_count, "Synthetic image count");
    prep->add_option("--size", synth_size, "Synthetic HR side length");
    prep->add_option("--seed", synth_seed, "Synthetic scene seed");
    prep->add_option("--jpeg-q", jpeg_q, "JPEG quality of the LR degradation")->check(CLI::Range(1, 100));
    prep->add_flag("--no-degrade", no_degrade, "Plain bicubic LR without JPEG");

    auto* train = app.add_subcommand("train", "Stage 1: train a model from scratch");
    train->add_option("--config", config, "Run config JSON")->check(CLI::ExistingFile);
    train->add_option("--out", out, "Run directory")->required();
    train->add_option("--seed", seed, "Master seed");
    train->add_option("--name", in, "Checkpoint name")->default_val("stage1");

    auto* prune = app.add_subcommand("prune", "Stage 2: global structured pruning, then fine-tune");
    prune->add_option("--ckpt", ckpt, "Input checkpoint")->required()->check(CLI::ExistingFile);
    prune->add_option("--target-ch", target_ch, "Channels after pruning")->required()->check(CLI::PositiveNumber);
    prune->add_option("--config", config, "Run config JSON")->check(CLI::ExistingFile);
    prune->add_option("--out", out, "Run directory")->required();
    prune->add_option("--seed", seed, "Master seed");
    prune->add_flag("--no-finetune", no_finetune, "Stop after compaction");

    auto* debias = app.add_subcommand("debias", "Stage 3: remove biases, then fine-tune");
    debias->add_option("--ckpt", ckpt, "Input checkpoint")->required()->check(CLI::ExistingFile);
    debias->add_option("--config", config, "Run config JSON")->check(CLI::ExistingFile);
    debias->add_option("--out", out, "Run directory")->required();
    debias->add_option("--seed", seed, "Master seed");

    auto* recipe = app.add_subcommand("recipe", "Run a multi-stage recipe");
    std::string recipe_path;
    recipe->add_option("recipe", recipe_path, "Recipe JSON (steps, optional overrides)")->required()->check(CLI::ExistingFile);
    recipe->add_option("--config", config, "Base run config JSON; recipe keys override it")->check(CLI::ExistingFile);
    recipe->add_option("--out", out, "Run directory")->required();
    recipe->add_option("--seed", seed, "Master seed");

    auto* eval = app.add_subcommand("eval", "Score a checkpoint against the bicubic baseline");
    std::string csv_out;
    eval->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    eval->add_option("--config", config, "Run config JSON (data and bench sections)")->check(CLI::ExistingFile);
    eval->add_option("--val-dir", val_dir, "Directory of validation HR PNGs")->check(CLI::ExistingDirectory);
    eval->add_option("--dims", dims, "Runtime input dims, HxW or NxCxHxW (default 720x1280)");
    eval->add_option("--warmup", warmup, "Warmup iterations");
    eval->add_option("--iters", iters, "Timed iterations")->check(CLI::Range(5, 100000));
    eval->add_option("--out", out, "Report JSON path");
    eval->add_option("--csv", csv_out, "Report CSV path");
    add_threads(eval);

    auto* score_cmd = app.add_subcommand("score", "Challenge score from PSNR, bicubic PSNR and runtime");
    score_cmd->add_option("-P,--psnr", p, "Model PSNR (dB)")->required();
    score_cmd->add_option("-B,--psnr-bic", pb, "Bicubic PSNR (dB)")->required();
    score_cmd->add_option("-t,--runtime", t, "Runtime (ms)")->required();

    auto* bench = app.add_subcommand("bench", "Time the forward pass");
    bench->add_option("--ckpt", ckpt, "Checkpoint (default: random model from --config)")->check(CLI::ExistingFile);
    bench->add_option("--config", config, "Run config JSON")->check(CLI::ExistingFile);
    bench->add_option("--dims", dims, "Input dims, HxW or NxCxHxW (default 720x1280)");
    bench->add_option("--warmup", warmup, "Warmup iterations");
    bench->add_option("--iters", iters, "Timed iterations")->check(CLI::Range(5, 100000));
    bench->add_option("--out", out, "Stats JSON path");
    add_threads(bench);

    auto* sweep = app.add_subcommand("sweep", "Runtime versus channel count");
    sweep->add_option("--config", config, "Run config JSON (model and bench sections)")->check(CLI::ExistingFile);
    sweep->add_option("--ch", ch_list, "Ascending channel list, comma separated")->default_val("6,16,32,65");
    sweep->add_option("--dims", dims, "Input dims, HxW or NxCxHxW (default 720x1280)");
    sweep->add_option("--warmup", warmup, "Warmup iterations");
    sweep->add_option("--iters", iters, "Timed iterations")->check(CLI::Range(5, 100000));
    sweep->add_option("--out", out, "CSV path (default: stdout)");
    add_threads(sweep);

    auto* upscale = app.add_subcommand("upscale", "x3 upscale one PNG");
    upscale->add_option("--in", in, "Input PNG")->required()->check(CLI::ExistingFile);
    upscale->add_option("--ckpt", ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
    upscale->add_option("--out", out, "Output PNG")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (threads > 0) set_num_threads(threads);

    auto bench_config = [&](const RunConfig& rc) {
        BenchConfig b = rc.bench;
        if (!dims.empty()) b.dims = parse_dims(dims);
        if (app.got_subcommand("eval") ? eval->count("--warmup") : (bench->count("--warmup") + sweep->count("--warmup")))
            b.opts.warmup = warmup;
        if (app.got_subcommand("eval") ? eval->count("--iters") : (bench->count("--iters") + sweep->count("--iters")))
            b.opts.iters = iters;
        return b;
    };

    try {
        if (*prep) {
            PrepareOptions opts;
            opts.jpeg_q = jpeg_q;
            opts.degrade = !no_degrade;
            const fs::path dir(out);
            std::vector<ImagePair> pairs;
            if (hr_dir.empty()) {
                const SynthSpec spec{synth_count, synth_size, synth_size, synth_seed};
                write_synth_pngs(spec, dir / "hr");
                pairs = prepare_pairs(dir / "hr", opts);
            } else {
                pairs = prepare_pairs(hr_dir, opts);
            }
            fs::create_directories(dir / "lr");
            for (const auto& pr : pairs) save_png(pr.lr, dir / "lr" / (pr.id + ".png"));
            write_text(dir / "manifest.json", manifest(pairs).dump(2) + "\n");
            std::cout << "wrote " << pairs.size() << " pairs to " << dir << "\n";
        } else if (*train) {
            const RunConfig rc = load_run_config(config);
            run_steps(rc.recipe, json::array({{{"op", "train"}, {"name", in}}}), out, seed);
        } else if (*prune || *debias) {
            const RunConfig rc = load_run_config(config);
            Checkpoint c = load(ckpt);
            const std::string src = c.meta.id.empty() ? "input" : c.meta.id;
            json step = *prune ? json{{"op", "prune"}, {"name", "pruned"}, {"target_ch", target_ch}, {"finetune", !no_finetune}}
                               : json{{"op", "debias"}, {"name", "debiased"}};
            step["from"] = src;
            json base = rc.recipe;
            if (!base.contains("model")) base["model"] = config_to_json(c.config);
            run_steps(base, json::array({step}), out, seed, {{src, std::move(c)}});
        } else if (*recipe) {
            RunConfig rc = load_run_config(config);
            json r = read_json(recipe_path);
            if (!r.is_object()) throw ConfigError("recipe must be a JSON object");
            if (r.contains("bench")) r.erase("bench");
            json merged = rc.recipe;
            merged.merge_patch(r);
            if (!merged.contains("steps")) throw ConfigError("recipe has no 'steps'");
            const json steps = merged.at("steps");
            run_steps(merged, steps, out, seed);
        } else if (*eval) {
            const RunConfig rc = load_run_config(config);
            const Model model = from_checkpoint(load(ckpt));
            const Dataset d = eval_data(config, val_dir);
            const BenchConfig b = bench_config(rc);
            const EvalOptions eo{};
            const ScoreReport rep = make_report(evaluate_model(model, d.val, eo), evaluate_bicubic(d.val, eo),
                                                measure_runtime(model, b.dims, b.opts));
            const std::string j = report_to_json(rep).dump(2) + "\n";
            const std::string c = report_csv_header() + "\n" + report_csv_row(rep) + "\n";
            std::cout << j;
            if (!out.empty()) write_text(out, j);
            if (!csv_out.empty()) write_text(csv_out, c);
        } else if (*score_cmd) {
            const ScoreResult s = score({p, pb, t});
            std::cout << std::fixed << std::setprecision(2) << s.score << "\n";
            if (!s.runtime_compliant) std::cerr << "note: runtime " << t << " ms is not under the 30 ms limit\n";
        } else if (*bench) {
            const RunConfig rc = load_run_config(config);
            Model model;
            if (!ckpt.empty()) {
                model = from_checkpoint(load(ckpt));
            } else {
                const ModelConfig mc = rc.recipe.contains("model") ? config_from_json(rc.recipe.at("model")) : ModelConfig{};
                model = build(mc, seed.value_or(0));
            }
            const BenchConfig b = bench_config(rc);
            const RuntimeStats s = measure_runtime(model, b.dims, b.opts);
            const json j{{"input", {s.input.n, s.input.c, s.input.h, s.input.w}},
                         {"warmup", s.warmup},
                         {"iters", s.iters},
                         {"per_iter_ms", s.per_iter_ms},
                         {"median_ms", s.median_ms},
                         {"p10_ms", s.p10_ms},
                         {"p90_ms", s.p90_ms},
                         {"dtype", dtype_name(s.dtype)},
                         {"threads", s.threads},
                         {"params", model.parameter_count()}};
            std::cout << j.dump(2) << "\n";
            if (!out.empty()) write_text(out, j.dump(2) + "\n");
        } else if (*sweep) {
            const RunConfig rc = load_run_config(config);
            const ModelConfig mc = rc.recipe.contains("model") ? config_from_json(rc.recipe.at("model")) : ModelConfig{};
            std::vector<std::size_t> chs;
            std::stringstream ss(ch_list);
            for (std::string tok; std::getline(ss, tok, ',');) {
                try {
                    chs.push_back(std::stoul(tok));
                } catch (const std::exception&) {
                    throw ConfigError("bad channel list '" + ch_list + "'");
                }
            }
            const BenchConfig b = bench_config(rc);
            const auto rows = channel_sweep(mc, chs, b.dims, b.opts);
            std::ostringstream os;
            write_sweep_csv(os, rows, num_threads());
            if (out.empty())
                std::cout << os.str();
            else
                write_text(out, os.str());
        } else if (*upscale) {
            const Model model = from_checkpoint(load(ckpt));
            const TensorF lr = load_png(in);
            save_png(forward(model, lr, Mode::eval), out);
            std::cout << lr.shape().w << "x" << lr.shape().h << " -> " << lr.shape().w * 3 << "x" << lr.shape().h * 3
                      << " written to " << out << "\n";
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
