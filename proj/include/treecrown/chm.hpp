#pragma once

#include <set>

#include "treecrown/pointcloud.hpp"
#include "treecrown/raster.hpp"

namespace treecrown {

// Per cell, max normalized z over first returns whose channel is in the set.
// Cells with no qualifying return are nodata.
Raster rasterize_chm(const PointCloud& pc, double cell_size,
                     const std::set<int>& channels);

// nodata cells with >= 5 valid 8-neighbors get the neighbor median; the rest
// become 0 (no canopy). Single pass over the input state.
Raster fill_chm_gaps(const Raster& chm);

} // namespace treecrown
