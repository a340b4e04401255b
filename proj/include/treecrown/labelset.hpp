#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "treecrown/raster.hpp"

namespace treecrown {

// Binary crown mask, RLE-encoded row-major within its bbox. Runs alternate
// background/foreground starting with a background run (possibly 0).
struct InstanceMask {
    int id = 0;
    int x = 0, y = 0, w = 0, h = 0; // bbox in host-grid pixels
    std::vector<int64_t> rle;
    std::optional<double> score;
    double cx = 0, cy = 0; // centroid, pixel-center coordinates
    bool fallback = false;

    int64_t area() const;
};

std::vector<int64_t> rle_encode(const std::vector<uint8_t>& bits);
std::vector<uint8_t> rle_decode(const std::vector<int64_t>& rle, int w, int h);

// Builds an instance from bbox-local bits; recomputes centroid.
InstanceMask make_instance(int id, int x, int y, int w, int h,
                           const std::vector<uint8_t>& bits,
                           std::optional<double> score = std::nullopt);

struct TileSpec {
    int64_t x = 0, y = 0; // origin, host-grid pixels
    int size = 1024;      // stride is size/2; center window is the middle size/2 square
};

struct Tile {
    TileSpec spec;
    std::vector<InstanceMask> instances;
};

struct AnnotationSet {
    double cell_size_m = 1.0;
    // map coordinates of the host grid's top-left corner; lets later stages
    // relate this grid to rasters with a different resolution
    double origin_x = 0.0, origin_y = 0.0;
    std::vector<Tile> tiles;
    int64_t dropped_count = 0; // centroids outside every central window

    Geotransform geotransform() const {
        return Geotransform{origin_x, origin_y, cell_size_m};
    }
};

// Clamped sliding-window tiling; last row/column origins shifted inward.
std::vector<TileSpec> make_tiles(int64_t extent_w, int64_t extent_h,
                                 int size = 1024, int stride = 512);

// Centroid-in-center assignment; coordinates rebased tile-local, masks
// clipped to tile bounds after assignment.
AnnotationSet assign_to_tiles(const std::vector<InstanceMask>& instances,
                              const std::vector<TileSpec>& tiles,
                              double cell_size_m);

// Nearest-neighbor expansion from a coarse grid into the pixels it covers.
std::vector<InstanceMask> upscale_instances(const std::vector<InstanceMask>& instances,
                                            const Geotransform& src_gt,
                                            const Geotransform& dst_gt,
                                            int dst_width, int dst_height);

AnnotationSet read_annotations(const std::string& path);
void write_annotations(const AnnotationSet& set, const std::string& path,
                       const std::string& config_echo_json = "");

/// Untiled stage output: the whole grid as one pseudo-tile at the origin.
AnnotationSet single_tile_set(std::vector<InstanceMask> instances,
                              int grid_w, int grid_h, double cell_size_m);

} // namespace treecrown
