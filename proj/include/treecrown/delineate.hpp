#pragma once

#include <map>
#include <vector>

#include "treecrown/labelset.hpp"
#include "treecrown/raster.hpp"

namespace treecrown {

struct Treetop {
    int r = 0, c = 0;
    float height = 0;
    bool operator==(const Treetop&) const = default;
};

// Integer-labeled crown map, 0 = background.
struct SegmentMap {
    int width = 0, height = 0;
    Geotransform geotransform;
    std::vector<int32_t> labels;
    std::map<int32_t, Treetop> top_of;

    int32_t label(int r, int c) const {
        return labels[static_cast<size_t>(r) * width + c];
    }
};

// Variable-window local-maximum treetop detection. A cell is a treetop iff
// its value >= min_tree_height and >= all values within the square window of
// radius ceil((win_a + win_b * h) / cell_size) cells. On equal-valued
// plateaus only the lexicographically smallest (r,c) of the 4-connected
// plateau component is kept.
std::vector<Treetop> local_maxima(const Raster& chm_s, double min_tree_height = 2.0,
                                  double win_a = 1.0, double win_b = 0.05);

// Priority-flood region growing from markers: pop the highest frontier cell
// (FIFO at equal height), 4-connected, cells below min_tree_height stay
// background. Labels are assigned in lexicographic marker order so the
// result does not depend on marker list order.
SegmentMap marker_watershed(const Raster& chm_s, const std::vector<Treetop>& markers,
                            double min_tree_height);

// One instance per nonzero label, masks in the CHM grid; id = label.
std::vector<InstanceMask> segments_to_instances(const SegmentMap& sm);

} // namespace treecrown
