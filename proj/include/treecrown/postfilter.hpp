#pragma once

#include <vector>

#include "treecrown/labelset.hpp"
#include "treecrown/raster.hpp"

namespace treecrown {

// |A ∩ B| / |A ∪ B| over host-grid pixels; 0 when the union is empty.
double mask_iou(const InstanceMask& a, const InstanceMask& b);

// |A ∩ B| in pixels.
int64_t mask_intersection(const InstanceMask& a, const InstanceMask& b);

double box_iou(const InstanceMask& a, const InstanceMask& b);

// Keep instances with score >= score_thr; scoreless instances are kept.
std::vector<InstanceMask> threshold_filter(const std::vector<InstanceMask>& instances,
                                           double score_thr = 0.3);

// Greedy NMS by descending score (ties: smaller id). Kept instances are
// returned in the original input order. Scoreless instances rank as 1.0.
std::vector<InstanceMask> nms(const std::vector<InstanceMask>& instances,
                              double iou_thr = 0.3, bool use_box_iou = false);

// Removes the smaller of any pair whose intersection-over-smaller-area
// reaches ios_thr, processed from largest area downward.
std::vector<InstanceMask> containment_filter(const std::vector<InstanceMask>& instances,
                                             double ios_thr = 0.8);

// Pixel in mask iff probability >= mask_thr; an empty result is an error.
InstanceMask binarize(const Raster& soft_mask, int id, double mask_thr = 0.5);

} // namespace treecrown
