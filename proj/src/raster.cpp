#include "vitscope/raster.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "vitscope/error.hpp"

namespace vitscope {

RasterImage::RasterImage(int w, int h, Rgb fill) : width(w), height(h) {
    if (w <= 0 || h <= 0)
        raise(ErrorCategory::Config, "canvas dimensions must be positive");
    pixels.resize(static_cast<size_t>(w) * h * 3);
    for (size_t i = 0; i < pixels.size(); i += 3) {
        pixels[i] = fill.r;
        pixels[i + 1] = fill.g;
        pixels[i + 2] = fill.b;
    }
}

Rgb RasterImage::get(int x, int y) const {
    const size_t i = (static_cast<size_t>(y) * width + x) * 3;
    return {pixels[i], pixels[i + 1], pixels[i + 2]};
}

void RasterImage::set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= width || y >= height) return;
    const size_t i = (static_cast<size_t>(y) * width + x) * 3;
    pixels[i] = c.r;
    pixels[i + 1] = c.g;
    pixels[i + 2] = c.b;
}

namespace {

// Fills pixel centers in [xl, xr) on row y.
void fill_span(RasterImage& img, double xl, double xr, int y, Rgb color) {
    // smallest x with x+0.5 >= xl  ->  x >= xl - 0.5
    int x0 = static_cast<int>(std::ceil(xl - 0.5));
    // largest x with x+0.5 < xr
    int x1 = static_cast<int>(std::ceil(xr - 0.5)) - 1;
    x0 = std::max(x0, 0);
    x1 = std::min(x1, img.width - 1);
    for (int x = x0; x <= x1; ++x) img.set(x, y, color);
}

}  // namespace

void fill_polygon(RasterImage& img, std::span<const double> xs,
                  std::span<const double> ys, Rgb color) {
    const size_t n = xs.size();
    if (n < 3 || ys.size() != n)
        raise(ErrorCategory::Render, "polygon needs at least 3 vertices");

    double ymin = ys[0], ymax = ys[0];
    for (double y : ys) {
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
    }
    const int row0 = std::max(0, static_cast<int>(std::floor(ymin - 0.5)));
    const int row1 = std::min(img.height - 1, static_cast<int>(std::ceil(ymax)));

    std::vector<double> hits;
    for (int row = row0; row <= row1; ++row) {
        const double sy = row + 0.5;
        hits.clear();
        for (size_t i = 0; i < n; ++i) {
            const size_t j = (i + 1) % n;
            const double y0 = ys[i], y1 = ys[j];
            if (y0 == y1) continue;  // horizontal edges never cross a scanline
            const double lo = std::min(y0, y1), hi = std::max(y0, y1);
            if (sy < lo || sy >= hi) continue;  // half-open in y
            const double t = (sy - y0) / (y1 - y0);
            hits.push_back(xs[i] + t * (xs[j] - xs[i]));
        }
        std::sort(hits.begin(), hits.end());
        for (size_t i = 0; i + 1 < hits.size(); i += 2)
            fill_span(img, hits[i], hits[i + 1], row, color);
    }
}

void fill_circle(RasterImage& img, double cx, double cy, double radius, Rgb color) {
    if (radius <= 0.0)
        raise(ErrorCategory::Render, "circle radius must be positive");
    const int row0 = std::max(0, static_cast<int>(std::floor(cy - radius - 0.5)));
    const int row1 = std::min(img.height - 1, static_cast<int>(std::ceil(cy + radius)));
    for (int row = row0; row <= row1; ++row) {
        const double dy = row + 0.5 - cy;
        const double d2 = radius * radius - dy * dy;
        if (d2 <= 0.0) continue;
        const double dx = std::sqrt(d2);
        fill_span(img, cx - dx, cx + dx, row, color);
    }
}

std::vector<uint8_t> encode_ppm(const RasterImage& img) {
    char header[64];
    const int len = std::snprintf(header, sizeof(header), "P6\n%d %d\n255\n",
                                  img.width, img.height);
    std::vector<uint8_t> out;
    out.reserve(len + img.pixels.size());
    out.insert(out.end(), header, header + len);
    out.insert(out.end(), img.pixels.begin(), img.pixels.end());
    return out;
}

void write_ppm(const RasterImage& img, const std::filesystem::path& path) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) raise(ErrorCategory::Io, "cannot open for writing: " + path.string());
    const auto bytes = encode_ppm(img);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) raise(ErrorCategory::Io, "write failed: " + path.string());
}

RasterImage read_ppm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) raise(ErrorCategory::Io, "cannot open: " + path.string());
    std::string magic;
    f >> magic;
    if (magic != "P6")
        raise(ErrorCategory::Format,
              "not a P6 ppm: " + path.string() + " (magic '" + magic + "')");
    int w = 0, h = 0, maxval = 0;
    f >> w >> h >> maxval;
    if (!f || w <= 0 || h <= 0 || maxval != 255)
        raise(ErrorCategory::Format, "bad ppm header: " + path.string());
    f.get();  // single whitespace byte after maxval
    RasterImage img(w, h);
    f.read(reinterpret_cast<char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.pixels.size()))
        raise(ErrorCategory::Format, "truncated ppm: " + path.string());
    return img;
}

}  // namespace vitscope
