#include "mts/pngio.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>

#include "mts/errors.hpp"

namespace mts {

namespace {

void push_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(uint8_t(v >> 24));
    out.push_back(uint8_t(v >> 16));
    out.push_back(uint8_t(v >> 8));
    out.push_back(uint8_t(v));
}

void push_chunk(std::vector<uint8_t>& out, const char type[4], const std::vector<uint8_t>& payload) {
    push_u32(out, uint32_t(payload.size()));
    const size_t crc_start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const uint32_t crc = uint32_t(crc32(0, out.data() + crc_start, uInt(out.size() - crc_start)));
    push_u32(out, crc);
}

}  // namespace

void write_png_rgb(const std::string& path, int width, int height, const std::vector<uint8_t>& rgb) {
    if (width <= 0 || height <= 0 || rgb.size() != size_t(width) * size_t(height) * 3)
        throw IoError("write_png_rgb: bad dimensions");

    // filter byte 0 per scanline
    std::vector<uint8_t> raw;
    raw.reserve(size_t(height) * (size_t(width) * 3 + 1));
    for (int y = 0; y < height; ++y) {
        raw.push_back(0);
        raw.insert(raw.end(), rgb.begin() + size_t(y) * size_t(width) * 3,
                   rgb.begin() + size_t(y + 1) * size_t(width) * 3);
    }
    uLongf bound = compressBound(uLong(raw.size()));
    std::vector<uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), uLong(raw.size()), 6) != Z_OK)
        throw IoError("write_png_rgb: deflate failed");
    compressed.resize(bound);

    std::vector<uint8_t> png = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    std::vector<uint8_t> ihdr;
    push_u32(ihdr, uint32_t(width));
    push_u32(ihdr, uint32_t(height));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(2);  // color type RGB
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    push_chunk(png, "IHDR", ihdr);
    push_chunk(png, "IDAT", compressed);
    push_chunk(png, "IEND", {});

    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot write " + path);
    const bool ok = std::fwrite(png.data(), 1, png.size(), f) == png.size();
    std::fclose(f);
    if (!ok) throw IoError("write failed for " + path);
}

namespace {

// black -> red -> yellow -> white
void hot_color(double v, uint8_t& r, uint8_t& g, uint8_t& b) {
    v = std::clamp(v, 0.0, 1.0);
    r = uint8_t(std::clamp(v * 3.0, 0.0, 1.0) * 255.0);
    g = uint8_t(std::clamp(v * 3.0 - 1.0, 0.0, 1.0) * 255.0);
    b = uint8_t(std::clamp(v * 3.0 - 2.0, 0.0, 1.0) * 255.0);
}

}  // namespace

void write_heatmap_montage(const Tensor& base, const Tensor& heat, const std::string& path, double alpha) {
    if (base.rank() != 3) throw ShapeError("montage: base must be (D, H, W)");
    check_same_shape(base, heat, "montage");
    const int64_t d = base.dim(0), h = base.dim(1), w = base.dim(2);

    const double lo = base.min(), hi = base.max();
    const double span = hi > lo ? hi - lo : 1.0;
    double heat_max = 0.0;
    for (double v : heat.data) heat_max = std::max(heat_max, std::abs(v));
    if (heat_max <= 0.0) heat_max = 1.0;

    const int tiles = 3;
    const int width = int(w) * tiles, height = int(h) * tiles;
    std::vector<uint8_t> rgb(size_t(width) * size_t(height) * 3, 0);
    for (int tile = 0; tile < tiles * tiles; ++tile) {
        const int64_t z = (int64_t(tile) + 1) * d / (tiles * tiles + 1);
        const int ty = (tile / tiles) * int(h), tx = (tile % tiles) * int(w);
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const double gray = (base[(z * h + y) * w + x] - lo) / span;
                const double hv = std::clamp(std::abs(heat[(z * h + y) * w + x]) / heat_max, 0.0, 1.0);
                uint8_t hr, hg, hb;
                hot_color(hv, hr, hg, hb);
                const double blend = alpha * hv;
                const size_t px = (size_t(ty + y) * size_t(width) + size_t(tx + x)) * 3;
                rgb[px + 0] = uint8_t((1.0 - blend) * gray * 255.0 + blend * hr);
                rgb[px + 1] = uint8_t((1.0 - blend) * gray * 255.0 + blend * hg);
                rgb[px + 2] = uint8_t((1.0 - blend) * gray * 255.0 + blend * hb);
            }
    }
    write_png_rgb(path, width, height, rgb);
}

}  // namespace mts
