#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bpp/checkpoint.hpp"
#include "bpp/datapipe.hpp"
#include "bpp/evaluate.hpp"
#include "bpp/optim.hpp"
#include "bpp/prune.hpp"

namespace bpp {

enum class Loss { l1, l2 };

std::string to_string(Loss l);
Loss parse_loss(const std::string& s);

struct TrainConfig {
    std::size_t epochs = 1000;
    std::size_t patches_per_epoch = 800;
    std::size_t batch = 16;
    std::size_t patch_lr = 108;
    LrSchedule lr{};  // total_epochs tracks `epochs`
    AdamHyper adam{};
    Loss loss = Loss::l1;
    std::uint64_t seed = 0;
    std::size_t val_every = 1;
    EvalOptions eval{};

    void validate() const;
};

// Unknown keys rejected. A bare "epochs" rescales the schedule so that the
// constant phase covers the first half.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});
nlohmann::json train_config_to_json(const TrainConfig& c);

// Mean loss and its gradient with respect to `pred`.
struct LossValue {
    double value = 0;
    TensorF grad;
};
LossValue compute_loss(const TensorF& pred, const TensorF& target, Loss kind);

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0;
    double train_loss = 0;
    std::optional<double> val_psnr_y;
};

struct TrainResult {
    Model best;              // best validation checkpoint (may be the starting point)
    double best_psnr = 0;    // PSNR(Y) of `best`
    double initial_psnr = 0; // starting point, before any update
    double best_epoch_psnr = 0;  // best over trained epochs only
    std::optional<std::size_t> best_epoch;  // empty when the starting point won
    std::vector<EpochLog> log;
};

// Optional per-epoch observer (progress output).
using EpochCallback = std::function<void(const EpochLog&)>;

// Adam with a fresh optimizer state; selects by validation PSNR(Y). With
// `keep_initial`, the unmodified model competes in selection.
TrainResult train(const Model& init, const TrainConfig& cfg, const MemoryCache& trainset,
                  std::span<const ImagePair> valset, bool keep_initial, const EpochCallback& on_epoch = {});

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log);

struct StageRecord {
    std::string name;
    std::string op;
    std::string stage;
    std::string input;   // parent checkpoint id, empty for scratch training
    std::string output;  // checkpoint id
    double pre_psnr_y = 0;   // starting point (post-prune / post-debias / post-load)
    std::optional<double> trained_psnr_y;  // best over trained epochs; empty if no training ran
    double best_val_psnr_y = 0;
    std::size_t epochs = 0;
    std::size_t params = 0;
    double wall_seconds = 0;
};

nlohmann::json stage_record_json(const StageRecord& r);

struct StageOutput {
    Checkpoint checkpoint;
    StageRecord record;
    std::vector<EpochLog> log;
    std::optional<PruneResult> prune;
};

StageOutput stage1_train(const ModelConfig& model_config, const TrainConfig& cfg, const MemoryCache& trainset,
                         std::span<const ImagePair> valset, const std::string& id = "stage1");

// Prune to target_ch, then fine-tune (skipped when finetune is false).
StageOutput stage2(const Checkpoint& ckpt, std::span<const ImagePair> valset, std::size_t target_ch,
                   const TrainConfig& cfg, const MemoryCache& trainset, bool finetune = true,
                   const PruneOptions& popts = {}, const std::string& id = "stage2");

StageOutput stage3_debias(const Checkpoint& ckpt, const TrainConfig& cfg, const MemoryCache& trainset,
                          std::span<const ImagePair> valset, const std::string& id = "stage3");

StageOutput finetune(const Checkpoint& ckpt, const TrainConfig& cfg, const MemoryCache& trainset,
                     std::span<const ImagePair> valset, const std::string& id = "finetuned");

StageOutput partial_load_finetune(const Checkpoint& ckpt, const ModelConfig& config, const TrainConfig& cfg,
                                  const MemoryCache& trainset, std::span<const ImagePair> valset, bool run_finetune,
                                  const std::string& id = "partial");

// splitmix64 derivation of per-stage seeds from one master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace bpp
