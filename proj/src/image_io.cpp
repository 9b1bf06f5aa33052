#include "bpp/image_io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <string>

#include <png.h>
#ifdef BPP_WITH_JPEG
#include <jpeglib.h>
#endif

namespace bpp {

namespace {
std::atomic<std::uint64_t> g_opens{0};
}

std::uint64_t io_open_count() { return g_opens.load(); }

std::vector<std::uint8_t> to_rgb8(const TensorF& img) {
    const Shape& s = img.shape();
    if (s.n != 1 || s.c != 3) throw ShapeError("expected a (1, 3, H, W) image, got " + s.str());
    std::vector<std::uint8_t> rgb(s.h * s.w * 3);
    for (std::size_t c = 0; c < 3; ++c) {
        auto p = img.plane(0, c);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double v = std::clamp(static_cast<double>(p[i]), 0.0, 1.0) * 255.0;
            rgb[i * 3 + c] = static_cast<std::uint8_t>(std::round(v));
        }
    }
    return rgb;
}

TensorF from_rgb8(const std::uint8_t* rgb, std::size_t h, std::size_t w) {
    TensorF img(Shape{1, 3, h, w});
    for (std::size_t c = 0; c < 3; ++c) {
        auto p = img.plane(0, c);
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<float>(rgb[i * 3 + c]) / 255.0f;
    }
    return img;
}

TensorF load_png(const std::filesystem::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    ++g_opens;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        const std::string msg = image.message;
        if (!std::filesystem::exists(path)) throw IoError("cannot open '" + path.string() + "'");
        throw FormatError("'" + path.string() + "': " + msg, 0);
    }
    const auto fmt = image.format;
    std::string reason;
    if (!(fmt & PNG_FORMAT_FLAG_COLOR)) reason = "grayscale";
    else if (fmt & PNG_FORMAT_FLAG_ALPHA) reason = "has an alpha channel";
    else if (fmt & PNG_FORMAT_FLAG_LINEAR) reason = "is 16-bit";
    if (!reason.empty()) {
        png_image_free(&image);
        throw FormatError("'" + path.string() + "' is not 8-bit RGB: " + reason, 0);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw FormatError("'" + path.string() + "': " + msg, 0);
    }
    return from_rgb8(buf.data(), image.height, image.width);
}

void save_png(const TensorF& img, const std::filesystem::path& path) {
    const auto rgb = to_rgb8(img);
    png_image image;
    std::memset(&image, 0, sizeof(image));
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.shape().w);
    image.height = static_cast<png_uint_32>(img.shape().h);
    image.format = PNG_FORMAT_RGB;
    ++g_opens;
    if (!png_image_write_to_file(&image, path.c_str(), 0, rgb.data(), 0, nullptr))
        throw IoError("cannot write '" + path.string() + "': " + image.message);
}

#ifdef BPP_WITH_JPEG

namespace {

struct JpegError {
    jpeg_error_mgr mgr;
    std::jmp_buf jump;
    char message[JMSG_LENGTH_MAX];
};

void on_jpeg_error(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegError*>(cinfo->err);
    (*cinfo->err->format_message)(cinfo, err->message);
    std::longjmp(err->jump, 1);
}

// Plain C-style helpers: no objects with destructors live across setjmp.
bool encode_raw(const std::uint8_t* rgb, unsigned w, unsigned h, int quality, unsigned char** out, unsigned long* size,
                char* message) {
    jpeg_compress_struct cinfo;
    JpegError err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = on_jpeg_error;
    if (setjmp(err.jump)) {
        std::strncpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_compress(&cinfo);
        return false;
    }
    jpeg_create_compress(&cinfo);
    jpeg_mem_dest(&cinfo, out, size);
    cinfo.image_width = w;
    cinfo.image_height = h;
    cinfo.input_components = 3;
    cinfo.in_color_space = JCS_RGB;
    jpeg_set_defaults(&cinfo);
    jpeg_set_quality(&cinfo, quality, TRUE);
    // 4:2:0
    cinfo.comp_info[0].h_samp_factor = 2;
    cinfo.comp_info[0].v_samp_factor = 2;
    cinfo.comp_info[1].h_samp_factor = cinfo.comp_info[1].v_samp_factor = 1;
    cinfo.comp_info[2].h_samp_factor = cinfo.comp_info[2].v_samp_factor = 1;
    jpeg_start_compress(&cinfo, TRUE);
    while (cinfo.next_scanline < cinfo.image_height) {
        JSAMPROW row = const_cast<JSAMPROW>(rgb + static_cast<std::size_t>(cinfo.next_scanline) * w * 3);
        jpeg_write_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_compress(&cinfo);
    jpeg_destroy_compress(&cinfo);
    return true;
}

bool decode_raw(const std::uint8_t* data, unsigned long size, std::uint8_t* rgb, std::size_t capacity, unsigned* w,
                unsigned* h, char* message) {
    jpeg_decompress_struct cinfo;
    JpegError err;
    cinfo.err = jpeg_std_error(&err.mgr);
    err.mgr.error_exit = on_jpeg_error;
    if (setjmp(err.jump)) {
        std::strncpy(message, err.message, JMSG_LENGTH_MAX);
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    jpeg_create_decompress(&cinfo);
    jpeg_mem_src(&cinfo, const_cast<unsigned char*>(data), size);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    *w = cinfo.output_width;
    *h = cinfo.output_height;
    if (static_cast<std::size_t>(*w) * *h * 3 > capacity || cinfo.output_components != 3) {
        std::strncpy(message, "unexpected decoded size", JMSG_LENGTH_MAX);
        jpeg_destroy_decompress(&cinfo);
        return false;
    }
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = rgb + static_cast<std::size_t>(cinfo.output_scanline) * *w * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return true;
}

// Image size from the SOF marker, used to size the decode buffer.
bool peek_jpeg_size(const std::vector<std::uint8_t>& b, unsigned* w, unsigned* h) {
    std::size_t i = 2;
    while (i + 9 < b.size()) {
        if (b[i] != 0xFF) return false;
        const std::uint8_t marker = b[i + 1];
        const std::size_t len = (static_cast<std::size_t>(b[i + 2]) << 8) | b[i + 3];
        if (marker >= 0xC0 && marker <= 0xCF && marker != 0xC4 && marker != 0xC8 && marker != 0xCC) {
            *h = (static_cast<unsigned>(b[i + 5]) << 8) | b[i + 6];
            *w = (static_cast<unsigned>(b[i + 7]) << 8) | b[i + 8];
            return true;
        }
        i += 2 + len;
    }
    return false;
}

}  // namespace

bool jpeg_codec_available() { return true; }

std::vector<std::uint8_t> encode_jpeg(const TensorF& img, int quality) {
    if (quality < 1 || quality > 100) throw ConfigError("jpeg quality must be in [1, 100]");
    const auto rgb = to_rgb8(img);
    unsigned char* out = nullptr;
    unsigned long size = 0;
    char message[JMSG_LENGTH_MAX] = {};
    const bool ok = encode_raw(rgb.data(), static_cast<unsigned>(img.shape().w), static_cast<unsigned>(img.shape().h),
                               quality, &out, &size, message);
    std::vector<std::uint8_t> bytes;
    if (ok) bytes.assign(out, out + size);
    std::free(out);
    if (!ok) throw IoError(std::string("jpeg encode failed: ") + message);
    return bytes;
}

TensorF decode_jpeg(const std::vector<std::uint8_t>& bytes) {
    unsigned w = 0, h = 0;
    if (bytes.size() < 4 || bytes[0] != 0xFF || bytes[1] != 0xD8 || !peek_jpeg_size(bytes, &w, &h))
        throw FormatError("not a baseline JPEG stream", 0);
    std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
    char message[JMSG_LENGTH_MAX] = {};
    unsigned ow = 0, oh = 0;
    if (!decode_raw(bytes.data(), bytes.size(), rgb.data(), rgb.size(), &ow, &oh, message))
        throw FormatError(std::string("jpeg decode failed: ") + message, 0);
    return from_rgb8(rgb.data(), oh, ow);
}

#else

bool jpeg_codec_available() { return false; }

std::vector<std::uint8_t> encode_jpeg(const TensorF&, int) {
    throw ConfigError("built without a JPEG codec");
}

TensorF decode_jpeg(const std::vector<std::uint8_t>&) { throw ConfigError("built without a JPEG codec"); }

#endif

}  // namespace bpp
