#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace vitscope {

struct Rgb {
    uint8_t r = 0, g = 0, b = 0;
    friend bool operator==(const Rgb&, const Rgb&) = default;
};

// Row-major RGB, 8 bits per channel.
struct RasterImage {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> pixels;  // width*height*3

    RasterImage() = default;
    RasterImage(int w, int h, Rgb fill = {255, 255, 255});

    Rgb get(int x, int y) const;
    void set(int x, int y, Rgb c);

    friend bool operator==(const RasterImage&, const RasterImage&) = default;
};

// Even-odd scanline fill sampled at pixel centers (x+0.5, y+0.5) with a
// half-open edge rule: an edge spans scanline ys iff min(y) <= ys < max(y),
// and a span [xl, xr) covers pixel x iff xl <= x+0.5 < xr. No anti-aliasing;
// the fill is bit-exact and rotation/order independent for simple polygons.
void fill_polygon(RasterImage& img, std::span<const double> xs,
                  std::span<const double> ys, Rgb color);

// Circle fill under the same rule: per scanline the span is
// [cx - dx, cx + dx) with dx = sqrt(r^2 - dy^2) at the pixel-center ordinate.
void fill_circle(RasterImage& img, double cx, double cy, double radius, Rgb color);

// Binary PPM (P6), maxval 255.
std::vector<uint8_t> encode_ppm(const RasterImage& img);
void write_ppm(const RasterImage& img, const std::filesystem::path& path);
RasterImage read_ppm(const std::filesystem::path& path);

}  // namespace vitscope
