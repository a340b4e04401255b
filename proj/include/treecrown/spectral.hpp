#pragma once

#include <map>
#include <string>
#include <vector>

#include "treecrown/labelset.hpp"
#include "treecrown/raster.hpp"

namespace treecrown {

// Band indices into the orthophoto raster.
struct BandSet {
    int blue = 0, green = 1, red = 2, red_edge = 3, nir = 4;

    void validate(int band_count) const;
};

BandSet read_band_set(const std::string& path);

// Per pixel (RE - Red) / (RE + Red); zero denominator or nodata input maps
// to nodata.
Raster compute_ndvi(const Raster& ortho, const BandSet& bands);

// Sentinel for segments with zero valid index pixels.
constexpr double kNoIndexMean = -1e300;

// Mean index over all ortho pixels whose containing coarse-grid cell belongs
// to the segment, skipping nodata. Instances live in the grid described by
// seg_gt.
std::map<int, double> segment_mean_index(const std::vector<InstanceMask>& instances,
                                         const Geotransform& seg_gt,
                                         const Raster& index);

// Keep instances whose mean >= threshold; ordering preserved.
std::vector<InstanceMask> filter_by_ndvi(const std::vector<InstanceMask>& instances,
                                         const std::map<int, double>& means,
                                         double threshold = 0.2);

// `label,mean_ndvi` per segment, for threshold auditing.
void write_mean_histogram(const std::map<int, double>& means, const std::string& path);

} // namespace treecrown
