#include "bpp/datapipe.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "bpp/image_io.hpp"
#include "bpp/metrics.hpp"

namespace bpp {

namespace fs = std::filesystem;

std::string fnv1a_hex(std::span<const std::uint8_t> bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

TensorF crop(const TensorF& img, std::size_t y, std::size_t x, std::size_t h, std::size_t w) {
    const Shape& s = img.shape();
    if (s.n != 1 || y + h > s.h || x + w > s.w)
        throw ShapeError("crop (" + std::to_string(y) + ", " + std::to_string(x) + ") size " + std::to_string(h) + "x" +
                         std::to_string(w) + " outside " + s.str());
    TensorF out(Shape{1, s.c, h, w});
    for (std::size_t c = 0; c < s.c; ++c)
        for (std::size_t r = 0; r < h; ++r)
            std::copy_n(img.ptr() + img.offset(0, c, y + r, x), w, out.ptr() + out.offset(0, c, r, 0));
    return out;
}

ImagePair make_pair(const TensorF& hr_in, std::string id, const PrepareOptions& opts) {
    const Shape& s = hr_in.shape();
    const std::size_t unit = opts.scale * 2;
    const std::size_t h = s.h / unit * unit, w = s.w / unit * unit;
    if (h == 0 || w == 0) throw ShapeError("image '" + id + "' smaller than " + std::to_string(unit) + " pixels");
    ImagePair p;
    p.id = std::move(id);
    p.hr = crop(hr_in, (s.h - h) / 2, (s.w - w) / 2, h, w);
    TensorF lr = bicubic_resize(p.hr, h / opts.scale, w / opts.scale, /*antialias=*/true);
    if (opts.degrade) {
        if (!jpeg_codec_available()) throw ConfigError("JPEG degradation requested but no codec is available");
        lr = decode_jpeg(encode_jpeg(lr, opts.jpeg_q));
    }
    p.lr = std::move(lr);
    return p;
}

namespace {

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "'");
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

ImagePair pair_from_lr(const TensorF& hr_in, const TensorF& lr_in, std::string id, std::size_t scale) {
    const Shape& ls = lr_in.shape();
    const std::size_t lh = ls.h / 2 * 2, lw = ls.w / 2 * 2;
    if (lh == 0 || lw == 0) throw ShapeError("LR image '" + id + "' too small");
    if (hr_in.shape().h < ls.h * scale || hr_in.shape().w < ls.w * scale)
        throw ShapeError("HR image '" + id + "' is smaller than " + std::to_string(scale) + "x its LR counterpart");
    ImagePair p;
    p.id = std::move(id);
    p.lr = crop(lr_in, 0, 0, lh, lw);
    p.hr = crop(hr_in, 0, 0, lh * scale, lw * scale);
    return p;
}

}  // namespace

std::vector<ImagePair> prepare_pairs(const fs::path& hr_dir, const PrepareOptions& opts) {
    if (!fs::is_directory(hr_dir)) throw IoError("'" + hr_dir.string() + "' is not a directory");
    if (!opts.lr_dir && opts.degrade && !jpeg_codec_available())
        throw ConfigError("no JPEG codec available and no pre-degraded LR directory given");
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(hr_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());

    std::vector<ImagePair> pairs;
    for (const auto& f : files) {
        try {
            const auto bytes = read_bytes(f);
            TensorF hr = load_png(f);
            ImagePair p;
            if (opts.lr_dir)
                p = pair_from_lr(hr, load_png(*opts.lr_dir / f.filename()), f.stem().string(), opts.scale);
            else
                p = make_pair(hr, f.stem().string(), opts);
            p.source_hash = fnv1a_hex(bytes);
            pairs.push_back(std::move(p));
        } catch (const IoError& e) {
            if (!opts.skip_unreadable) throw;
            std::cerr << "warning: skipping " << f << ": " << e.what() << "\n";
        } catch (const FormatError& e) {
            if (!opts.skip_unreadable) throw;
            std::cerr << "warning: skipping " << f << ": " << e.what() << "\n";
        }
    }
    return pairs;
}

nlohmann::json manifest(std::span<const ImagePair> pairs) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& p : pairs) {
        rows.push_back({{"id", p.id},
                        {"hr_dims", {p.hr.shape().h, p.hr.shape().w}},
                        {"lr_dims", {p.lr.shape().h, p.lr.shape().w}},
                        {"source_hash", p.source_hash}});
    }
    return rows;
}

MemoryCache::MemoryCache(std::vector<ImagePair> pairs) : pairs_(std::move(pairs)) {
    for (const auto& p : pairs_) bytes_ += p.byte_size();
}

MemoryCache preload(std::vector<ImagePair> pairs) { return MemoryCache(std::move(pairs)); }

TensorF dihedral(const TensorF& patch, int t) {
    const Shape& s = patch.shape();
    if (s.h != s.w) throw ShapeError("dihedral transform needs a square patch, got " + s.str());
    const std::size_t n = s.h;
    const bool flip = t >= 4;
    const int k = t % 4;
    TensorF out(s);
    for (std::size_t b = 0; b < s.n; ++b)
        for (std::size_t c = 0; c < s.c; ++c) {
            auto src = patch.plane(b, c);
            auto dst = out.plane(b, c);
            for (std::size_t y = 0; y < n; ++y)
                for (std::size_t x = 0; x < n; ++x) {
                    // source coordinate of output (y, x) under counter-clockwise rotation
                    std::size_t sy = y, sx = x;
                    switch (k) {
                        case 1: sy = x, sx = n - 1 - y; break;
                        case 2: sy = n - 1 - y, sx = n - 1 - x; break;
                        case 3: sy = n - 1 - x, sx = y; break;
                        default: break;
                    }
                    if (flip) sx = n - 1 - sx;
                    dst[y * n + x] = src[sy * n + sx];
                }
        }
    return out;
}

PatchBatch sample_batch(std::span<const ImagePair> pairs, std::size_t batch, std::size_t patch_lr, Rng& rng) {
    if (pairs.empty()) throw ConfigError("cannot sample patches from an empty dataset");
    if (patch_lr == 0 || patch_lr % 2 != 0) throw ShapeError("patch size must be positive and even");
    for (const auto& p : pairs)
        if (p.lr.shape().h < patch_lr || p.lr.shape().w < patch_lr)
            throw ShapeError("patch " + std::to_string(patch_lr) + " larger than LR image '" + p.id + "' " +
                             p.lr.shape().str());
    const std::size_t s = patch_lr, hs = patch_lr * 3;
    std::vector<TensorF> lrs, hrs;
    lrs.reserve(batch);
    hrs.reserve(batch);
    for (std::size_t b = 0; b < batch; ++b) {
        const auto& p = pairs[std::uniform_int_distribution<std::size_t>(0, pairs.size() - 1)(rng)];
        const std::size_t y = std::uniform_int_distribution<std::size_t>(0, p.lr.shape().h - s)(rng);
        const std::size_t x = std::uniform_int_distribution<std::size_t>(0, p.lr.shape().w - s)(rng);
        const int t = std::uniform_int_distribution<int>(0, 7)(rng);
        lrs.push_back(dihedral(crop(p.lr, y, x, s, s), t));
        hrs.push_back(dihedral(crop(p.hr, 3 * y, 3 * x, hs, hs), t));
    }
    return {concat_batch<float>(lrs), concat_batch<float>(hrs)};
}

PatchBatch sample_batch(const MemoryCache& cache, std::size_t batch, std::size_t patch_lr, Rng& rng) {
    return sample_batch(cache.pairs(), batch, patch_lr, rng);
}

}  // namespace bpp
