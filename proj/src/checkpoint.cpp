#include "bpp/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>

namespace bpp {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
}

template <typename T>
T get(const std::vector<std::uint8_t>& in, std::size_t pos) {
    T v;
    std::memcpy(&v, in.data() + pos, sizeof(T));
    return v;
}

std::vector<std::string> split_stage(const std::string& tag) {
    static const std::string arrow = "→";
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (true) {
        const auto pos = tag.find(arrow, start);
        parts.push_back(tag.substr(start, pos - start));
        if (pos == std::string::npos) break;
        start = pos + arrow.size();
    }
    return parts;
}

nlohmann::json meta_to_json(const CheckpointMeta& m) {
    nlohmann::json j{{"id", m.id},         {"parent", m.parent}, {"stage", m.stage},
                     {"epochs_trained", m.epochs_trained},       {"seed", m.seed},
                     {"loss", m.loss}};
    j["best_val_psnr_y"] = m.best_val_psnr_y ? nlohmann::json(*m.best_val_psnr_y) : nlohmann::json(nullptr);
    return j;
}

CheckpointMeta meta_from_json(const nlohmann::json& j) {
    CheckpointMeta m;
    m.id = j.at("id").get<std::string>();
    m.parent = j.at("parent").get<std::string>();
    m.stage = j.at("stage").get<std::string>();
    m.epochs_trained = j.at("epochs_trained").get<std::uint64_t>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.loss = j.at("loss").get<std::string>();
    if (!j.at("best_val_psnr_y").is_null()) m.best_val_psnr_y = j.at("best_val_psnr_y").get<double>();
    validate_stage_tag(m.stage);
    return m;
}

TensorF bias_tensor(const std::vector<float>& b) { return TensorF(Shape{1, b.size(), 1, 1}, b); }

}  // namespace

void validate_stage_tag(const std::string& tag) {
    static const std::set<std::string> allowed{"stage1", "pruned", "debias", "finetuned"};
    for (const auto& part : split_stage(tag))
        if (!allowed.contains(part)) throw ConfigError("invalid stage tag '" + tag + "'");
}

Checkpoint to_checkpoint(const Model& model, CheckpointMeta meta) {
    validate_stage_tag(meta.stage);
    Checkpoint ck;
    ck.config = model.config;
    ck.meta = std::move(meta);
    for (const auto& l : model.layers) {
        ck.tensors.push_back({l.name + ".weight", l.conv.weight});
        if (l.conv.bias) ck.tensors.push_back({l.name + ".bias", bias_tensor(*l.conv.bias)});
    }
    return ck;
}

Model from_checkpoint(const Checkpoint& ckpt) {
    Model model = zeros_like(ckpt.config);
    std::map<std::string, const TensorF*> by_name;
    for (const auto& nt : ckpt.tensors) {
        if (!by_name.emplace(nt.name, &nt.tensor).second) throw ConfigError("duplicate tensor '" + nt.name + "'");
    }
    std::size_t used = 0;
    for (auto& l : model.layers) {
        auto w = by_name.find(l.name + ".weight");
        if (w == by_name.end()) throw ConfigError("checkpoint lacks tensor '" + l.name + ".weight'");
        if (w->second->shape() != l.conv.weight.shape())
            throw ConfigError("tensor '" + l.name + ".weight' has shape " + w->second->shape().str() + ", expected " +
                              l.conv.weight.shape().str());
        l.conv.weight = *w->second;
        ++used;
        if (l.conv.bias) {
            auto b = by_name.find(l.name + ".bias");
            if (b == by_name.end()) throw ConfigError("checkpoint lacks tensor '" + l.name + ".bias'");
            if (b->second->shape() != Shape{1, l.conv.bias->size(), 1, 1})
                throw ConfigError("tensor '" + l.name + ".bias' has wrong shape " + b->second->shape().str());
            l.conv.bias = std::vector<float>(b->second->data().begin(), b->second->data().end());
            ++used;
        }
    }
    if (used != ckpt.tensors.size()) throw ConfigError("checkpoint holds tensors outside the config inventory");
    return model;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    nlohmann::json dir = nlohmann::json::array();
    std::uint64_t offset = 0;
    for (const auto& nt : ckpt.tensors) {
        const Shape& s = nt.tensor.shape();
        const std::uint64_t nbytes = nt.tensor.numel() * sizeof(float);
        dir.push_back({{"name", nt.name},
                       {"dtype", static_cast<int>(DType::f32)},
                       {"dims", {s.n, s.c, s.h, s.w}},
                       {"offset", offset},
                       {"nbytes", nbytes}});
        offset += nbytes;
    }
    const nlohmann::json header{{"config", config_to_json(ckpt.config)}, {"meta", meta_to_json(ckpt.meta)}, {"tensors", dir}};
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(kCheckpointMagic, kCheckpointMagic + 4);
    put<std::uint32_t>(out, kCheckpointVersion);
    put<std::uint64_t>(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& nt : ckpt.tensors) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(nt.tensor.ptr());
        out.insert(out.end(), p, p + nt.tensor.numel() * sizeof(float));
    }
    return out;
}

Checkpoint parse_checkpoint(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw FormatError("bad magic", 0);
    if (bytes.size() < 8) throw FormatError("truncated version field", bytes.size());
    const auto version = get<std::uint32_t>(bytes, 4);
    if (version != kCheckpointVersion) throw FormatError("unsupported version " + std::to_string(version), 4);
    if (bytes.size() < 16) throw FormatError("truncated header length", bytes.size());
    const auto header_len = get<std::uint64_t>(bytes, 8);
    const std::uint64_t payload_start = 16 + header_len;
    if (header_len > bytes.size() - 16) throw FormatError("truncated header", bytes.size());

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("malformed header: ") + e.what(), 16 + (e.byte > 0 ? e.byte - 1 : 0));
    }

    Checkpoint ck;
    try {
        ck.config = config_from_json(header.at("config"));
        ck.meta = meta_from_json(header.at("meta"));
        std::uint64_t expected = 0;
        for (const auto& entry : header.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            const auto dtype = static_cast<DType>(entry.at("dtype").get<int>());
            const auto dims = entry.at("dims").get<std::vector<std::size_t>>();
            const auto off = entry.at("offset").get<std::uint64_t>();
            if (dims.size() != 4) throw FormatError("tensor '" + name + "' needs 4 dims", 16);
            if (dtype != DType::f32 && dtype != DType::f64) throw FormatError("tensor '" + name + "' has unknown dtype", 16);
            if (off != expected) throw FormatError("tensor '" + name + "' offset out of directory order", 16);
            const Shape s{dims[0], dims[1], dims[2], dims[3]};
            const std::uint64_t nbytes = s.numel() * dtype_size(dtype);
            if (entry.contains("nbytes") && entry.at("nbytes").get<std::uint64_t>() != nbytes)
                throw FormatError("tensor '" + name + "' byte count disagrees with dims", 16);
            const std::uint64_t begin = payload_start + off;
            if (begin + nbytes > bytes.size())
                throw FormatError("truncated payload for tensor '" + name + "'", bytes.size());
            std::vector<float> data(s.numel());
            if (dtype == DType::f32) {
                std::memcpy(data.data(), bytes.data() + begin, nbytes);
            } else {
                for (std::size_t i = 0; i < data.size(); ++i)
                    data[i] = static_cast<float>(get<double>(bytes, begin + i * 8));
            }
            ck.tensors.push_back({name, TensorF(s, std::move(data))});
            expected += nbytes;
        }
        if (payload_start + expected != bytes.size())
            throw FormatError("trailing bytes after payload", payload_start + expected);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed header: ") + e.what(), 16);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("invalid header: ") + e.what(), 16);
    }
    return ck;
}

void save(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for '" + path.string() + "'");
}

Checkpoint load(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return parse_checkpoint(bytes);
}

PartialLoad load_partial(const Checkpoint& ckpt, const ModelConfig& config, std::uint64_t seed) {
    PartialLoad r;
    r.model = build(config, seed);
    std::map<std::string, const TensorF*> src;
    for (const auto& nt : ckpt.tensors) src.emplace(nt.name, &nt.tensor);
    std::set<std::string> seen;

    for (auto& l : r.model.layers) {
        const std::string wname = l.name + ".weight";
        seen.insert(wname);
        auto w = src.find(wname);
        if (w != src.end() && w->second->shape() == l.conv.weight.shape()) {
            l.conv.weight = *w->second;
            r.copied.push_back(wname);
        } else {
            r.initialized.push_back(wname);
        }
        if (l.conv.bias) {
            const std::string bname = l.name + ".bias";
            seen.insert(bname);
            auto b = src.find(bname);
            if (b != src.end() && b->second->shape() == Shape{1, l.conv.bias->size(), 1, 1}) {
                l.conv.bias = std::vector<float>(b->second->data().begin(), b->second->data().end());
                r.copied.push_back(bname);
            } else {
                r.initialized.push_back(bname);
            }
        }
    }
    for (const auto& nt : ckpt.tensors)
        if (!seen.contains(nt.name)) r.dropped.push_back(nt.name);
    return r;
}

}  // namespace bpp
