#include "reflect/frame_store.hpp"

#include <glob.h>
#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <memory>
#include <optional>

namespace reflect {

namespace fs = std::filesystem;

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

struct DecodedPng {
    int width = 0;
    int height = 0;
    int channels = 0;  // after dropping alpha
    int bit_depth = 8;
    bool paletted = false;
    std::vector<std::uint16_t> samples;  // width*height*channels
};

// libpng reports errors through longjmp; translate to exceptions at the call site.
DecodedPng decode(const fs::path& path, bool keep_indices) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) fail("undecodable-file", "cannot open " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        fail("undecodable-file", "not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("undecodable-file", "libpng initialization failed for " + path.string());
    }
    DecodedPng out;
    std::vector<png_bytep> rows;
    std::vector<png_byte> buffer;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail("undecodable-file", "corrupt PNG data in " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);
    out.paletted = color == PNG_COLOR_TYPE_PALETTE;
    if (out.paletted && !keep_indices) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (out.paletted && keep_indices && depth < 8) png_set_packing(png);
    if (!keep_indices && png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (depth == 16) png_set_swap(png);
    png_read_update_info(png, info);

    out.width = int(png_get_image_width(png, info));
    out.height = int(png_get_image_height(png, info));
    depth = png_get_bit_depth(png, info);
    out.bit_depth = depth;
    const int stored_channels = png_get_channels(png, info);
    const std::size_t rowbytes = png_get_rowbytes(png, info);
    buffer.resize(rowbytes * out.height);
    rows.resize(out.height);
    for (int y = 0; y < out.height; ++y) rows[y] = buffer.data() + rowbytes * y;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    // Drop alpha: gray+alpha -> gray, rgba -> rgb.
    out.channels = (stored_channels == 2 || stored_channels == 4) ? stored_channels - 1 : stored_channels;
    out.samples.resize(std::size_t(out.width) * out.height * out.channels);
    const int bytes = depth == 16 ? 2 : 1;
    for (int y = 0; y < out.height; ++y) {
        const png_byte* row = rows[y];
        for (int x = 0; x < out.width; ++x) {
            for (int c = 0; c < out.channels; ++c) {
                const png_byte* s = row + (std::size_t(x) * stored_channels + c) * bytes;
                std::uint16_t v = bytes == 2 ? std::uint16_t(s[0] | (s[1] << 8)) : s[0];
                out.samples[(std::size_t(y) * out.width + x) * out.channels + c] = v;
            }
        }
    }
    return out;
}

struct PngWriter {
    std::vector<std::uint8_t>* buffer = nullptr;
    static void write(png_structp png, png_bytep data, png_size_t len) {
        auto* self = static_cast<PngWriter*>(png_get_io_ptr(png));
        self->buffer->insert(self->buffer->end(), data, data + len);
    }
    static void flush(png_structp) {}
};

// Encodes 8-bit rows to `out`. `palette` non-empty selects a paletted image.
void encode_rows(int width, int height, int channels, const std::vector<std::uint8_t>& pixels,
                 const std::vector<png_color>& palette, std::vector<std::uint8_t>& out) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail("io-failure", "libpng initialization failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail("io-failure", "PNG encoding failed");
    }
    PngWriter writer{&out};
    png_set_write_fn(png, &writer, &PngWriter::write, &PngWriter::flush);
    int color = PNG_COLOR_TYPE_GRAY;
    if (!palette.empty())
        color = PNG_COLOR_TYPE_PALETTE;
    else if (channels == 3)
        color = PNG_COLOR_TYPE_RGB;
    png_set_IHDR(png, info, png_uint_32(width), png_uint_32(height), 8, color, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    if (!palette.empty()) png_set_PLTE(png, info, palette.data(), int(palette.size()));
    png_write_info(png, info);
    const std::size_t stride = std::size_t(width) * channels;
    for (int y = 0; y < height; ++y)
        png_write_row(png, const_cast<png_bytep>(pixels.data() + stride * y));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

void write_bytes(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) fail("io-failure", "cannot write " + path.string());
    if (std::fwrite(bytes.data(), 1, bytes.size(), fp.get()) != bytes.size())
        fail("io-failure", "short write to " + path.string());
}

std::vector<std::uint8_t> quantize(const Frame& frame) {
    std::vector<std::uint8_t> px(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i)
        px[i] = std::uint8_t(std::lround(clamp01(frame.data[i]) * 255.0));
    return px;
}

std::optional<long long> numeric_suffix(const fs::path& p) {
    const std::string stem = p.stem().string();
    auto end = std::find_if(stem.rbegin(), stem.rend(), [](unsigned char c) { return std::isdigit(c); });
    if (end == stem.rend()) return std::nullopt;
    auto begin = std::find_if(end, stem.rend(), [](unsigned char c) { return !std::isdigit(c); });
    std::string digits(begin.base(), end.base());
    return std::stoll(digits);
}

std::vector<fs::path> expand_pattern(const std::string& pattern) {
    std::string effective = pattern;
    std::error_code ec;
    if (fs::is_directory(pattern, ec)) effective = (fs::path(pattern) / "*.png").string();
    glob_t g{};
    std::vector<fs::path> out;
    if (::glob(effective.c_str(), 0, nullptr, &g) == 0) {
        for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    }
    globfree(&g);
    return out;
}

}  // namespace

Frame read_png(const fs::path& path) {
    DecodedPng d = decode(path, false);
    Frame f(d.width, d.height, d.channels);
    const double scale = d.bit_depth == 16 ? 65535.0 : 255.0;
    for (std::size_t i = 0; i < f.size(); ++i) f.data[i] = d.samples[i] / scale;
    return f;
}

Grid<std::uint8_t> read_png_indices(const fs::path& path) {
    DecodedPng d = decode(path, true);
    require(d.channels == 1 && d.bit_depth == 8, "undecodable-file",
            "label mask must be 8-bit gray or paletted: " + path.string());
    Grid<std::uint8_t> g(d.width, d.height);
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] = std::uint8_t(d.samples[i]);
    return g;
}

std::vector<std::uint8_t> encode_png(const Frame& frame) {
    require(frame.channels == 1 || frame.channels == 3, "io-failure", "PNG frames must have 1 or 3 channels");
    std::vector<std::uint8_t> out;
    encode_rows(frame.width, frame.height, frame.channels, quantize(frame), {}, out);
    return out;
}

void write_png(const Frame& frame, const fs::path& path) { write_bytes(encode_png(frame), path); }

void write_label_png(const Grid<std::uint8_t>& labels, const fs::path& path) {
    std::vector<png_color> palette = {{0, 0, 0}, {0, 0, 255}, {255, 0, 0}};
    std::vector<std::uint8_t> out;
    encode_rows(labels.width, labels.height, 1, labels.data, palette, out);
    write_bytes(out, path);
}

void write_mask_png(const Mask& mask, const fs::path& path) {
    std::vector<std::uint8_t> px(mask.size());
    for (std::size_t i = 0; i < mask.size(); ++i) px[i] = mask.data[i] ? 255 : 0;
    std::vector<std::uint8_t> out;
    encode_rows(mask.width, mask.height, 1, px, {}, out);
    write_bytes(out, path);
}

Mask read_mask_png(const fs::path& path) {
    Grid<std::uint8_t> raw = read_png_indices(path);
    Mask m(raw.width, raw.height);
    for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = raw.data[i] ? 1 : 0;
    return m;
}

FrameSequence load_sequence(const std::string& path_pattern) {
    std::vector<fs::path> files = expand_pattern(path_pattern);
    if (files.empty()) fail("no-files-matched", "no image files match " + path_pattern);
    std::stable_sort(files.begin(), files.end(), [](const fs::path& a, const fs::path& b) {
        auto na = numeric_suffix(a), nb = numeric_suffix(b);
        if (na && nb && *na != *nb) return *na < *nb;
        if (na.has_value() != nb.has_value()) return na.has_value();
        return a.filename() < b.filename();
    });
    std::vector<Frame> frames;
    frames.reserve(files.size());
    for (const fs::path& p : files) {
        Frame f = read_png(p);
        if (!frames.empty() && !f.same_shape(frames.front()))
            fail("dimension-mismatch", "frame dimensions differ from the first frame: " + p.string());
        frames.push_back(std::move(f));
    }
    return FrameSequence(std::move(frames));
}

std::vector<fs::path> save_sequence(const FrameSequence& seq, const fs::path& dir, const std::string& prefix) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) fail("io-failure", "cannot create directory " + dir.string());
    std::vector<fs::path> paths;
    for (int t = 0; t < seq.size(); ++t) {
        char name[64];
        std::snprintf(name, sizeof name, "_%04d.png", t);
        fs::path p = dir / (prefix + name);
        write_png(seq[t], p);
        paths.push_back(p);
    }
    return paths;
}

Frame to_luma(const Frame& frame) {
    if (frame.channels == 1) return frame;
    Frame out(frame.width, frame.height, 1);
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        const double* p = &frame.data[i * frame.channels];
        out.data[i] = clamp01(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]);
    }
    return out;
}

FrameSequence to_luma(const FrameSequence& seq) {
    if (seq.channels() == 1) return seq;
    std::vector<Frame> frames;
    frames.reserve(seq.size());
    for (const Frame& f : seq.frames()) frames.push_back(to_luma(f));
    return FrameSequence(std::move(frames));
}

}  // namespace reflect
