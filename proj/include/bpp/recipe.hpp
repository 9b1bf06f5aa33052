#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpp/pipeline.hpp"
#include "bpp/synth.hpp"

namespace bpp {

// Either directories of HR PNGs or procedurally generated scenes.
struct DataConfig {
    std::optional<std::filesystem::path> train_dir;
    std::optional<std::filesystem::path> val_dir;
    SynthSpec train_synth{8, 288, 288, 1};
    SynthSpec val_synth{4, 192, 192, 2};
    PrepareOptions prepare{};
};

DataConfig data_config_from_json(const nlohmann::json& j, DataConfig base = {});
nlohmann::json data_config_to_json(const DataConfig& c);

struct Dataset {
    MemoryCache train;
    std::vector<ImagePair> val;
};

Dataset load_dataset(const DataConfig& c);

enum class StepOp { train, prune, finetune, debias, partial_load };

std::string to_string(StepOp op);
StepOp parse_step_op(const std::string& s);

struct RecipeStep {
    StepOp op = StepOp::train;
    std::string name;
    std::optional<std::string> from;  // defaults to the previous step's output
    nlohmann::json model = nlohmann::json::object();  // config overrides (train, partial_load)
    std::optional<std::size_t> target_ch;            // prune
    bool finetune = true;                            // prune, partial_load
    SelectionRule rule = SelectionRule::top_k_union;  // prune
    nlohmann::json train = nlohmann::json::object();  // TrainConfig overrides
};

struct Recipe {
    std::uint64_t seed = 0;
    ModelConfig model{};
    TrainConfig train{};
    DataConfig data{};
    std::vector<RecipeStep> steps;
};

// Keys: seed, model, train, data, steps. Malformed input raises ConfigError
// naming the offending step. `inputs` lists checkpoint names supplied to
// run_recipe from outside that steps may reference with "from".
Recipe recipe_from_json(const nlohmann::json& j, const std::vector<std::string>& inputs = {});
nlohmann::json recipe_to_json(const Recipe& r);

// "B*" -> "B_star"; anything outside [A-Za-z0-9._+-] becomes '_'.
std::string checkpoint_stem(const std::string& name);

struct RecipeRun {
    std::vector<StageRecord> records;
    std::map<std::string, Checkpoint> checkpoints;  // by step name
};

using StepCallback = std::function<void(const StageRecord&)>;

// Runs the chain, writing checkpoints/, logs/ and reports/ under run_dir
// (skipped when run_dir is empty).
RecipeRun run_recipe(const Recipe& recipe, const Dataset& data, const std::filesystem::path& run_dir,
                     const StepCallback& on_step = {}, const std::map<std::string, Checkpoint>& inputs = {});

}  // namespace bpp
