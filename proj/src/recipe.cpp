#include "bpp/recipe.hpp"

#include <fstream>
#include <set>

namespace bpp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, _] : j.items())
        if (!known.contains(key)) throw ConfigError("unknown " + where + " key '" + key + "'");
}

SynthSpec synth_from_json(const json& j, SynthSpec s) {
    reject_unknown(j, {"count", "hr_h", "hr_w", "seed"}, "synthetic data");
    if (j.contains("count")) s.count = j.at("count").get<std::size_t>();
    if (j.contains("hr_h")) s.hr_h = j.at("hr_h").get<std::size_t>();
    if (j.contains("hr_w")) s.hr_w = j.at("hr_w").get<std::size_t>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    return s;
}

json synth_to_json(const SynthSpec& s) {
    return {{"count", s.count}, {"hr_h", s.hr_h}, {"hr_w", s.hr_w}, {"seed", s.seed}};
}

void write_json(const fs::path& path, const json& j) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << j.dump(2) << "\n";
}

}  // namespace

DataConfig data_config_from_json(const json& j, DataConfig c) {
    reject_unknown(j, {"train_dir", "val_dir", "train_synth", "val_synth", "jpeg_q", "degrade", "lr_dir"}, "data config");
    try {
        if (j.contains("train_dir")) c.train_dir = j.at("train_dir").get<std::string>();
        if (j.contains("val_dir")) c.val_dir = j.at("val_dir").get<std::string>();
        if (j.contains("train_synth")) c.train_synth = synth_from_json(j.at("train_synth"), c.train_synth);
        if (j.contains("val_synth")) c.val_synth = synth_from_json(j.at("val_synth"), c.val_synth);
        if (j.contains("jpeg_q")) c.prepare.jpeg_q = j.at("jpeg_q").get<int>();
        if (j.contains("degrade")) c.prepare.degrade = j.at("degrade").get<bool>();
        if (j.contains("lr_dir")) c.prepare.lr_dir = j.at("lr_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("data config: ") + e.what());
    }
    if (c.prepare.jpeg_q < 1 || c.prepare.jpeg_q > 100) throw ConfigError("data config: jpeg_q must lie in [1, 100]");
    return c;
}

json data_config_to_json(const DataConfig& c) {
    json j{{"train_synth", synth_to_json(c.train_synth)},
           {"val_synth", synth_to_json(c.val_synth)},
           {"jpeg_q", c.prepare.jpeg_q},
           {"degrade", c.prepare.degrade}};
    if (c.train_dir) j["train_dir"] = c.train_dir->string();
    if (c.val_dir) j["val_dir"] = c.val_dir->string();
    if (c.prepare.lr_dir) j["lr_dir"] = c.prepare.lr_dir->string();
    return j;
}

Dataset load_dataset(const DataConfig& c) {
    Dataset d;
    d.train = preload(c.train_dir ? prepare_pairs(*c.train_dir, c.prepare) : synth_pairs(c.train_synth, c.prepare));
    PrepareOptions val_opts = c.prepare;
    val_opts.lr_dir.reset();  // pre-degraded LR applies to the training set only
    d.val = c.val_dir ? prepare_pairs(*c.val_dir, val_opts) : synth_pairs(c.val_synth, val_opts);
    return d;
}

std::string to_string(StepOp op) {
    switch (op) {
        case StepOp::train: return "train";
        case StepOp::prune: return "prune";
        case StepOp::finetune: return "finetune";
        case StepOp::debias: return "debias";
        case StepOp::partial_load: return "partial_load";
    }
    return "?";
}

StepOp parse_step_op(const std::string& s) {
    for (StepOp op : {StepOp::train, StepOp::prune, StepOp::finetune, StepOp::debias, StepOp::partial_load})
        if (to_string(op) == s) return op;
    throw ConfigError("unknown step op '" + s + "'");
}

Recipe recipe_from_json(const json& j, const std::vector<std::string>& inputs) {
    reject_unknown(j, {"seed", "model", "train", "data", "steps"}, "recipe");
    Recipe r;
    try {
        if (j.contains("seed")) r.seed = j.at("seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("recipe seed: ") + e.what());
    }
    if (j.contains("model")) r.model = config_from_json(j.at("model"));
    if (j.contains("train")) r.train = train_config_from_json(j.at("train"), r.train);
    if (j.contains("data")) r.data = data_config_from_json(j.at("data"), r.data);
    if (!j.contains("steps") || !j.at("steps").is_array() || j.at("steps").empty())
        throw ConfigError("recipe needs a non-empty 'steps' array");

    std::set<std::string> seen(inputs.begin(), inputs.end());
    std::size_t index = 0;
    for (const auto& sj : j.at("steps")) {
        const std::string label = "step " + std::to_string(index) +
                                  (sj.is_object() && sj.contains("name") && sj.at("name").is_string()
                                       ? " ('" + sj.at("name").get<std::string>() + "')"
                                       : "");
        try {
            reject_unknown(sj, {"op", "name", "from", "model", "target_ch", "finetune", "rule", "train"}, "step");
            RecipeStep s;
            if (!sj.contains("op")) throw ConfigError("missing 'op'");
            s.op = parse_step_op(sj.at("op").get<std::string>());
            s.name = sj.value("name", to_string(s.op) + std::to_string(index));
            if (s.name.empty()) throw ConfigError("empty name");
            if (seen.contains(s.name)) throw ConfigError("duplicate name '" + s.name + "'");
            if (sj.contains("from")) {
                s.from = sj.at("from").get<std::string>();
                if (!seen.contains(*s.from)) throw ConfigError("'from' refers to unknown or later step '" + *s.from + "'");
            }
            if (s.op == StepOp::train && s.from) throw ConfigError("train starts from scratch and takes no 'from'");
            if (s.op != StepOp::train && !s.from && index == 0) {
                if (inputs.size() != 1) throw ConfigError("first step must be 'train' or name 'from'");
                s.from = inputs.front();
            }
            if (sj.contains("model")) {
                if (s.op != StepOp::train && s.op != StepOp::partial_load)
                    throw ConfigError("'model' overrides apply to train and partial_load only");
                s.model = sj.at("model");
                if (!s.model.is_object()) throw ConfigError("'model' must be an object");
            }
            if (sj.contains("target_ch")) {
                if (s.op != StepOp::prune) throw ConfigError("'target_ch' applies to prune only");
                s.target_ch = sj.at("target_ch").get<std::size_t>();
            }
            if (s.op == StepOp::prune && !s.target_ch) throw ConfigError("prune needs 'target_ch'");
            if (sj.contains("finetune")) s.finetune = sj.at("finetune").get<bool>();
            if (sj.contains("rule")) {
                const auto rule = sj.at("rule").get<std::string>();
                if (rule == "top_k_union")
                    s.rule = SelectionRule::top_k_union;
                else if (rule == "joint")
                    s.rule = SelectionRule::joint;
                else
                    throw ConfigError("unknown rule '" + rule + "'");
            }
            if (sj.contains("train")) {
                s.train = sj.at("train");
                train_config_from_json(s.train, r.train);  // validate early
            }
            seen.insert(s.name);
            r.steps.push_back(std::move(s));
        } catch (const ConfigError& e) {
            throw ConfigError("recipe " + label + ": " + e.what());
        } catch (const json::exception& e) {
            throw ConfigError("recipe " + label + ": " + e.what());
        }
        ++index;
    }
    return r;
}

json recipe_to_json(const Recipe& r) {
    json steps = json::array();
    for (const auto& s : r.steps) {
        json sj{{"op", to_string(s.op)}, {"name", s.name}};
        if (s.from) sj["from"] = *s.from;
        if (!s.model.empty()) sj["model"] = s.model;
        if (s.target_ch) sj["target_ch"] = *s.target_ch;
        if (s.op == StepOp::prune || s.op == StepOp::partial_load) sj["finetune"] = s.finetune;
        if (s.op == StepOp::prune) sj["rule"] = s.rule == SelectionRule::joint ? "joint" : "top_k_union";
        if (!s.train.empty()) sj["train"] = s.train;
        steps.push_back(sj);
    }
    return {{"seed", r.seed},
            {"model", config_to_json(r.model)},
            {"train", train_config_to_json(r.train)},
            {"data", data_config_to_json(r.data)},
            {"steps", steps}};
}

std::string checkpoint_stem(const std::string& name) {
    std::string out;
    for (char c : name) {
        if (c == '*')
            out += "_star";
        else if (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '_' || c == '+' || c == '-')
            out += c;
        else
            out += '_';
    }
    return out;
}

RecipeRun run_recipe(const Recipe& recipe, const Dataset& data, const fs::path& run_dir, const StepCallback& on_step,
                     const std::map<std::string, Checkpoint>& inputs) {
    if (data.train.empty()) throw ConfigError("recipe: training set is empty");
    if (data.val.empty()) throw ConfigError("recipe: validation set is empty");
    const bool persist = !run_dir.empty();
    if (persist) {
        for (const char* sub : {"checkpoints", "logs", "reports"}) fs::create_directories(run_dir / sub);
        write_json(run_dir / "effective_config.json", recipe_to_json(recipe));
    }

    RecipeRun run;
    run.checkpoints = inputs;
    json lineage = json::array();
    std::string previous;
    for (std::size_t i = 0; i < recipe.steps.size(); ++i) {
        const RecipeStep& s = recipe.steps[i];
        TrainConfig tc = train_config_from_json(s.train, recipe.train);
        tc.seed = derive_seed(recipe.seed, i);

        const std::string from = s.from.value_or(previous);
        const Checkpoint* parent = nullptr;
        if (s.op != StepOp::train) {
            const auto it = run.checkpoints.find(from);
            if (it == run.checkpoints.end()) throw ConfigError("recipe step '" + s.name + "': no checkpoint '" + from + "'");
            parent = &it->second;
        }

        StageOutput out;
        try {
            switch (s.op) {
                case StepOp::train: {
                    json mj = config_to_json(recipe.model);
                    mj.merge_patch(s.model);
                    out = stage1_train(config_from_json(mj), tc, data.train, data.val, s.name);
                    break;
                }
                case StepOp::prune: {
                    PruneOptions popts;
                    popts.rule = s.rule;
                    popts.eval = tc.eval;
                    out = stage2(*parent, data.val, *s.target_ch, tc, data.train, s.finetune, popts, s.name);
                    break;
                }
                case StepOp::finetune:
                    out = finetune(*parent, tc, data.train, data.val, s.name);
                    break;
                case StepOp::debias:
                    out = stage3_debias(*parent, tc, data.train, data.val, s.name);
                    break;
                case StepOp::partial_load: {
                    json mj = config_to_json(parent->config);
                    mj.erase("inner");
                    mj.merge_patch(s.model);
                    out = partial_load_finetune(*parent, config_from_json(mj), tc, data.train, data.val, s.finetune,
                                                s.name);
                    break;
                }
            }
        } catch (const ConfigError& e) {
            throw ConfigError("recipe step '" + s.name + "': " + e.what());
        }

        const std::string stem = checkpoint_stem(s.name);
        if (persist) {
            save(out.checkpoint, run_dir / "checkpoints" / (stem + ".bpp"));
            if (!out.log.empty()) write_log_csv(run_dir / "logs" / (stem + ".csv"), out.log);
            if (out.prune) write_json(run_dir / "reports" / ("prune_" + stem + ".json"), prune_report_json(*out.prune));
        }
        json rec = stage_record_json(out.record);
        rec["checkpoint"] = "checkpoints/" + stem + ".bpp";
        rec["config"] = config_to_json(out.checkpoint.config);
        lineage.push_back(rec);
        if (persist) write_json(run_dir / "reports" / "lineage.json", lineage);
        if (on_step) on_step(out.record);

        run.records.push_back(out.record);
        run.checkpoints.insert_or_assign(s.name, std::move(out.checkpoint));
        previous = s.name;
    }
    return run;
}

}  // namespace bpp
