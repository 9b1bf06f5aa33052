#include "bpp/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <set>

namespace bpp {

std::string to_string(Loss l) { return l == Loss::l1 ? "l1" : "l2"; }

Loss parse_loss(const std::string& s) {
    if (s == "l1") return Loss::l1;
    if (s == "l2") return Loss::l2;
    throw ConfigError("unknown loss '" + s + "'");
}

void TrainConfig::validate() const {
    if (epochs == 0) throw ConfigError("train: epochs must be positive");
    if (batch == 0 || patches_per_epoch == 0) throw ConfigError("train: batch and patches_per_epoch must be positive");
    if (patches_per_epoch % batch != 0)
        throw ConfigError("train: patches_per_epoch (" + std::to_string(patches_per_epoch) +
                          ") must be divisible by batch (" + std::to_string(batch) + ")");
    if (patch_lr == 0 || patch_lr % 2 != 0) throw ConfigError("train: patch_lr must be positive and even");
    if (lr.total_epochs != epochs) throw ConfigError("train: lr schedule length must equal epochs");
    if (val_every == 0) throw ConfigError("train: val_every must be positive");
    lr.validate();
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    if (!j.is_object()) throw ConfigError("train config must be a JSON object");
    static const std::set<std::string> known{"epochs", "patches_per_epoch", "batch", "patch_lr", "lr0", "lr_final",
                                             "constant_epochs", "beta1", "beta2", "eps", "loss", "seed",
                                             "val_every", "shave"};
    for (const auto& [key, _] : j.items())
        if (!known.contains(key)) throw ConfigError("unknown train config key '" + key + "'");
    try {
        if (j.contains("epochs")) {
            c.epochs = j.at("epochs").get<std::size_t>();
            c.lr.total_epochs = c.epochs;
            c.lr.constant_epochs = c.epochs / 2;
        }
        if (j.contains("constant_epochs")) c.lr.constant_epochs = j.at("constant_epochs").get<std::size_t>();
        if (j.contains("patches_per_epoch")) c.patches_per_epoch = j.at("patches_per_epoch").get<std::size_t>();
        if (j.contains("batch")) c.batch = j.at("batch").get<std::size_t>();
        if (j.contains("patch_lr")) c.patch_lr = j.at("patch_lr").get<std::size_t>();
        if (j.contains("lr0")) c.lr.lr0 = j.at("lr0").get<double>();
        if (j.contains("lr_final")) c.lr.lr_final = j.at("lr_final").get<double>();
        if (j.contains("beta1")) c.adam.beta1 = j.at("beta1").get<double>();
        if (j.contains("beta2")) c.adam.beta2 = j.at("beta2").get<double>();
        if (j.contains("eps")) c.adam.eps = j.at("eps").get<double>();
        if (j.contains("loss")) c.loss = parse_loss(j.at("loss").get<std::string>());
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("val_every")) c.val_every = j.at("val_every").get<std::size_t>();
        if (j.contains("shave")) c.eval.shave = j.at("shave").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("train config: ") + e.what());
    }
    c.validate();
    return c;
}

nlohmann::json train_config_to_json(const TrainConfig& c) {
    return {{"epochs", c.epochs},
            {"patches_per_epoch", c.patches_per_epoch},
            {"batch", c.batch},
            {"patch_lr", c.patch_lr},
            {"lr0", c.lr.lr0},
            {"lr_final", c.lr.lr_final},
            {"constant_epochs", c.lr.constant_epochs},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"eps", c.adam.eps},
            {"loss", to_string(c.loss)},
            {"seed", c.seed},
            {"val_every", c.val_every},
            {"shave", c.eval.shave}};
}

LossValue compute_loss(const TensorF& pred, const TensorF& target, Loss kind) {
    if (pred.shape() != target.shape())
        throw ShapeError("loss: prediction " + pred.shape().str() + " vs target " + target.shape().str());
    LossValue out{0.0, TensorF(pred.shape())};
    const auto p = pred.data(), t = target.data();
    auto g = out.grad.data();
    const double inv_n = 1.0 / static_cast<double>(p.size());
    double acc = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = static_cast<double>(p[i]) - static_cast<double>(t[i]);
        if (kind == Loss::l1) {
            acc += std::abs(d);
            g[i] = static_cast<float>((d > 0 ? 1.0 : (d < 0 ? -1.0 : 0.0)) * inv_n);
        } else {
            acc += d * d;
            g[i] = static_cast<float>(2.0 * d * inv_n);
        }
    }
    out.value = acc * inv_n;
    return out;
}

namespace {

struct LayerState {
    AdamState<float> w;
    std::optional<AdamState<float>> b;
};

}  // namespace

TrainResult train(const Model& init, const TrainConfig& cfg, const MemoryCache& trainset,
                  std::span<const ImagePair> valset, bool keep_initial, const EpochCallback& on_epoch) {
    cfg.validate();
    if (trainset.empty()) throw ConfigError("training set is empty");
    if (valset.empty()) throw ConfigError("validation set is empty");

    Model model = init;
    std::vector<LayerState> states;
    for (const auto& l : model.layers) {
        LayerState s{AdamState<float>::zeros(l.conv.weight.shape()), std::nullopt};
        if (l.conv.bias) s.b = AdamState<float>::zeros(Shape{1, l.conv.bias->size(), 1, 1});
        states.push_back(std::move(s));
    }

    TrainResult r;
    r.initial_psnr = mean_psnr_y(model, valset, cfg.eval);
    r.best = model;
    r.best_psnr = keep_initial ? r.initial_psnr : -std::numeric_limits<double>::infinity();
    r.best_epoch_psnr = -std::numeric_limits<double>::infinity();

    Rng rng(cfg.seed);
    const std::size_t steps = cfg.patches_per_epoch / cfg.batch;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_at(epoch, cfg.lr);
        double loss_sum = 0;
        for (std::size_t step = 0; step < steps; ++step) {
            const PatchBatch b = sample_batch(trainset, cfg.batch, cfg.patch_lr, rng);
            const ForwardTrace tr = forward_train(model, b.lr);
            const LossValue loss = compute_loss(tr.output, b.hr, cfg.loss);
            if (!std::isfinite(loss.value)) throw NumericError("training loss became non-finite at epoch " + std::to_string(epoch));
            loss_sum += loss.value;
            const auto grads = backward(model, tr, loss.grad);
            for (std::size_t li = 0; li < model.layers.size(); ++li) {
                auto& conv = model.layers[li].conv;
                auto wr = adam_step(conv.weight, grads[li].weight, states[li].w, lr, cfg.adam);
                conv.weight = std::move(wr.param);
                states[li].w = std::move(wr.state);
                if (conv.bias) {
                    const Shape bs{1, conv.bias->size(), 1, 1};
                    auto br = adam_step(TensorF(bs, *conv.bias), TensorF(bs, *grads[li].bias), *states[li].b, lr, cfg.adam);
                    conv.bias = std::vector<float>(br.param.data().begin(), br.param.data().end());
                    states[li].b = std::move(br.state);
                }
            }
        }
        EpochLog entry{epoch, lr, loss_sum / static_cast<double>(steps), std::nullopt};
        if ((epoch + 1) % cfg.val_every == 0 || epoch + 1 == cfg.epochs) {
            const double v = mean_psnr_y(model, valset, cfg.eval);
            entry.val_psnr_y = v;
            r.best_epoch_psnr = std::max(r.best_epoch_psnr, v);
            if (v > r.best_psnr) {
                r.best_psnr = v;
                r.best = model;
                r.best_epoch = epoch;
            }
        }
        r.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
    }
    return r;
}

void write_log_csv(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
    std::ofstream f(path);
    if (!f) throw IoError("cannot write '" + path.string() + "'");
    f << "epoch,lr,train_loss,val_psnr_y\n";
    f.precision(10);
    for (const auto& e : log) {
        f << e.epoch << "," << e.lr << "," << e.train_loss << ",";
        if (e.val_psnr_y) f << *e.val_psnr_y;
        f << "\n";
    }
}

nlohmann::json stage_record_json(const StageRecord& r) {
    nlohmann::json j{{"name", r.name},
                     {"op", r.op},
                     {"stage", r.stage},
                     {"input", r.input},
                     {"output", r.output},
                     {"pre_psnr_y", r.pre_psnr_y},
                     {"best_val_psnr_y", r.best_val_psnr_y},
                     {"epochs", r.epochs},
                     {"params", r.params},
                     {"wall_seconds", r.wall_seconds}};
    j["trained_psnr_y"] = r.trained_psnr_y ? nlohmann::json(*r.trained_psnr_y) : nlohmann::json(nullptr);
    return j;
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ull * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string finetuned_tag(const std::string& parent_stage) {
    const std::string arrow = "→";
    const auto pos = parent_stage.rfind(arrow);
    const std::string last = pos == std::string::npos ? parent_stage : parent_stage.substr(pos + arrow.size());
    return last == "finetuned" ? "finetuned" : last + arrow + "finetuned";
}

StageOutput run_training(const Model& start, const Checkpoint* parent, const TrainConfig& cfg, const MemoryCache& trainset,
                         std::span<const ImagePair> valset, bool keep_initial, const std::string& op,
                         const std::string& stage, const std::string& id, Clock::time_point t0) {
    TrainResult tr = train(start, cfg, trainset, valset, keep_initial);
    CheckpointMeta meta;
    meta.id = id;
    meta.parent = parent ? parent->meta.id : "";
    meta.stage = stage;
    meta.epochs_trained = (parent ? parent->meta.epochs_trained : 0) + cfg.epochs;
    meta.seed = cfg.seed;
    meta.loss = to_string(cfg.loss);
    meta.best_val_psnr_y = tr.best_psnr;

    StageOutput out;
    out.record = {id, op, stage, meta.parent, id, tr.initial_psnr, tr.best_epoch_psnr, tr.best_psnr, cfg.epochs,
                  tr.best.parameter_count(), 0.0};
    out.checkpoint = to_checkpoint(tr.best, meta);
    out.log = std::move(tr.log);
    out.record.wall_seconds = seconds_since(t0);
    return out;
}

}  // namespace

StageOutput stage1_train(const ModelConfig& model_config, const TrainConfig& cfg, const MemoryCache& trainset,
                         std::span<const ImagePair> valset, const std::string& id) {
    const auto t0 = Clock::now();
    const Model init = build(model_config, derive_seed(cfg.seed, 1000));
    return run_training(init, nullptr, cfg, trainset, valset, false, "train", "stage1", id, t0);
}

StageOutput stage2(const Checkpoint& ckpt, std::span<const ImagePair> valset, std::size_t target_ch,
                   const TrainConfig& cfg, const MemoryCache& trainset, bool run_finetune, const PruneOptions& popts,
                   const std::string& id) {
    const auto t0 = Clock::now();
    const Model model = from_checkpoint(ckpt);
    if (target_ch > model.config.ch)
        throw ConfigError("stage2: target ch " + std::to_string(target_ch) + " exceeds model ch " +
                          std::to_string(model.config.ch));
    PruneResult pr = prune_pipeline(model, valset, target_ch, popts);

    StageOutput out;
    if (run_finetune) {
        out = run_training(pr.model, &ckpt, cfg, trainset, valset, true, "prune", "pruned→finetuned", id, t0);
    } else {
        CheckpointMeta meta;
        meta.id = id;
        meta.parent = ckpt.meta.id;
        meta.stage = "pruned";
        meta.epochs_trained = ckpt.meta.epochs_trained;
        meta.seed = ckpt.meta.seed;
        meta.loss = ckpt.meta.loss;
        meta.best_val_psnr_y = pr.psnr_after;
        out.checkpoint = to_checkpoint(pr.model, meta);
        out.record = {id, "prune", "pruned", ckpt.meta.id, id, pr.psnr_after, std::nullopt, pr.psnr_after, 0,
                      pr.model.parameter_count(), seconds_since(t0)};
    }
    out.record.pre_psnr_y = pr.psnr_after;
    out.prune = std::move(pr);
    return out;
}

StageOutput stage3_debias(const Checkpoint& ckpt, const TrainConfig& cfg, const MemoryCache& trainset,
                          std::span<const ImagePair> valset, const std::string& id) {
    const auto t0 = Clock::now();
    if (!ckpt.config.bias) throw ConfigError("stage3: checkpoint '" + ckpt.meta.id + "' has no bias to remove");
    const Model debiased = strip_bias(from_checkpoint(ckpt));
    return run_training(debiased, &ckpt, cfg, trainset, valset, true, "debias", "debias→finetuned", id, t0);
}

StageOutput finetune(const Checkpoint& ckpt, const TrainConfig& cfg, const MemoryCache& trainset,
                     std::span<const ImagePair> valset, const std::string& id) {
    const auto t0 = Clock::now();
    return run_training(from_checkpoint(ckpt), &ckpt, cfg, trainset, valset, true, "finetune",
                        finetuned_tag(ckpt.meta.stage), id, t0);
}

StageOutput partial_load_finetune(const Checkpoint& ckpt, const ModelConfig& config, const TrainConfig& cfg,
                                  const MemoryCache& trainset, std::span<const ImagePair> valset, bool run_finetune,
                                  const std::string& id) {
    const auto t0 = Clock::now();
    const PartialLoad pl = load_partial(ckpt, config, derive_seed(cfg.seed, 2000));
    if (run_finetune)
        return run_training(pl.model, &ckpt, cfg, trainset, valset, true, "partial_load", "stage1→finetuned", id, t0);
    StageOutput out;
    CheckpointMeta meta{id, ckpt.meta.id, "stage1", ckpt.meta.epochs_trained, cfg.seed, ckpt.meta.loss, std::nullopt};
    const double v = mean_psnr_y(pl.model, valset, cfg.eval);
    meta.best_val_psnr_y = v;
    out.checkpoint = to_checkpoint(pl.model, meta);
    out.record = {id, "partial_load", "stage1", ckpt.meta.id, id, v, std::nullopt, v, 0, pl.model.parameter_count(),
                  seconds_since(t0)};
    return out;
}

}  // namespace bpp
