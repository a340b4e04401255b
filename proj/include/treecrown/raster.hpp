#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "treecrown/errors.hpp"

namespace treecrown {

// Map-to-pixel convention: origin is the top-left cell corner, y decreases
// downward. Cell (r,c) has its center at
//   x = origin_x + (c + 0.5) * cell_size
//   y = origin_y - (r + 0.5) * cell_size
struct Geotransform {
    double origin_x = 0.0;
    double origin_y = 0.0;
    double cell_size = 1.0; // meters per pixel, > 0

    double center_x(int c) const { return origin_x + (c + 0.5) * cell_size; }
    double center_y(int r) const { return origin_y - (r + 0.5) * cell_size; }
};

struct PixelRC {
    int r = 0;
    int c = 0;
    bool operator==(const PixelRC&) const = default;
};

// Row-major, band-sequential gridded values. Immutable by convention once a
// pipeline stage has produced it; all raster ops below return new rasters.
class Raster {
public:
    Raster() = default;
    Raster(int width, int height, int bands, Geotransform gt, float nodata,
           float fill = 0.0f);

    int width() const { return width_; }
    int height() const { return height_; }
    int bands() const { return bands_; }
    const Geotransform& geotransform() const { return gt_; }
    float nodata() const { return nodata_; }

    bool in_bounds(int r, int c) const {
        return r >= 0 && r < height_ && c >= 0 && c < width_;
    }
    bool is_nodata(float v) const { return v == nodata_; }

    float at(int r, int c, int b = 0) const {
        return values_[static_cast<size_t>(b) * width_ * height_ +
                       static_cast<size_t>(r) * width_ + c];
    }
    float& at(int r, int c, int b = 0) {
        return values_[static_cast<size_t>(b) * width_ * height_ +
                       static_cast<size_t>(r) * width_ + c];
    }

    const std::vector<float>& values() const { return values_; }
    std::vector<float>& values() { return values_; }

    // Pixel containing map point (x, y), no bounds check.
    PixelRC pixel_at(double x, double y) const;

private:
    int width_ = 0;
    int height_ = 0;
    int bands_ = 1;
    Geotransform gt_;
    float nodata_ = -9999.0f;
    std::vector<float> values_;
};

// Integer pixel in dst containing the center of src cell (r, c).
PixelRC map_pixel(const Geotransform& src, int r, int c, const Geotransform& dst);

// Separable Gaussian, kernel radius ceil(3*sigma), reflect-padded borders.
// nodata cells are excluded from the weighted sum with weight renormalization
// and stay nodata in the output. sigma == 0 returns the input unchanged.
Raster gaussian_smooth(const Raster& r, double sigma);

// rasterbin: <path>.json sidecar + <path>.bin little-endian f32 payload.
Raster read_raster(const std::string& path);
void write_raster(const Raster& r, const std::string& path,
                  const std::string& config_echo_json = "");

// Single-band pixel window copy, tile fully inside the source.
Raster crop(const Raster& r, int x, int y, int w, int h);

} // namespace treecrown
