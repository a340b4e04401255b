#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "treecrown/raster.hpp"

namespace treecrown {

enum class Classification { Ground, Vegetation, Building, Noise, Unclassified };

Classification parse_classification(const std::string& token);
const char* classification_name(Classification c);

struct LidarPoint {
    double x = 0, y = 0, z = 0;
    int return_number = 1;
    Classification classification = Classification::Unclassified;
    int channel = 1;
};

struct PointCloud {
    std::vector<LidarPoint> points;
    double min_x = 0, min_y = 0, max_x = 0, max_y = 0;

    void recompute_bounds();
};

// CSV with header `x,y,z,return_number,classification,channel`.
PointCloud parse_point_cloud(std::istream& in);
PointCloud read_point_cloud(const std::string& path);

// Grid-minimum fallback classifier: per grid cell, unclassified points with
// z <= cell_min_z + tol become ground. Pre-classified points are untouched.
PointCloud classify_ground_fallback(const PointCloud& pc, double grid, double tol);

// Per-cell mean z of ground points; empty cells filled by iterated 3x3
// neighbor-mean passes until no nodata remains.
Raster build_dtm(const PointCloud& pc, double cell_size);

// z -> max(0, z - dtm(cell containing the point)).
PointCloud normalize_heights(const PointCloud& pc, const Raster& dtm);

} // namespace treecrown
