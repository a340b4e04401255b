#pragma once

// Naive serial implementations kept as independent references. Tests compare
// the production kernels against these; the benchmark tool times both.

#include <vector>

#include "treecrown/delineate.hpp"
#include "treecrown/labelset.hpp"
#include "treecrown/raster.hpp"

namespace treecrown::ref {

// Dense O(n^2 k^2) 2-D Gaussian convolution, reflect padding, nodata
// renormalization.
Raster gaussian_smooth_dense(const Raster& r, double sigma);

// Fixed square window of the given cell radius; a cell is a maximum iff its
// value >= threshold and >= every value in the window.
std::vector<Treetop> fixed_window_maxima(const Raster& r, double min_height,
                                         int radius_cells);

// Variable-window maximum scan, independent of the production code path.
std::vector<Treetop> variable_window_maxima(const Raster& r, double min_height,
                                            double win_a, double win_b);

// Priority flood over an ordered-set frontier (no binary heap).
SegmentMap priority_flood(const Raster& r, const std::vector<Treetop>& markers,
                          double min_height);

// O(n^2) greedy NMS over precomputed pairwise mask IoUs.
std::vector<InstanceMask> nms(const std::vector<InstanceMask>& instances,
                              double iou_thr);

} // namespace treecrown::ref
