#include "treecrown/postfilter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace treecrown {

int64_t mask_intersection(const InstanceMask& a, const InstanceMask& b) {
    const int x0 = std::max(a.x, b.x), y0 = std::max(a.y, b.y);
    const int x1 = std::min(a.x + a.w, b.x + b.w);
    const int y1 = std::min(a.y + a.h, b.y + b.h);
    if (x0 >= x1 || y0 >= y1) return 0;

    const auto abits = rle_decode(a.rle, a.w, a.h);
    const auto bbits = rle_decode(b.rle, b.w, b.h);
    int64_t inter = 0;
    for (int r = y0; r < y1; ++r)
        for (int c = x0; c < x1; ++c)
            inter += abits[static_cast<size_t>(r - a.y) * a.w + (c - a.x)] &
                     bbits[static_cast<size_t>(r - b.y) * b.w + (c - b.x)];
    return inter;
}

double mask_iou(const InstanceMask& a, const InstanceMask& b) {
    const int64_t inter = mask_intersection(a, b);
    const int64_t uni = a.area() + b.area() - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

double box_iou(const InstanceMask& a, const InstanceMask& b) {
    const int x0 = std::max(a.x, b.x), y0 = std::max(a.y, b.y);
    const int x1 = std::min(a.x + a.w, b.x + b.w);
    const int y1 = std::min(a.y + a.h, b.y + b.h);
    const int64_t inter = (x0 < x1 && y0 < y1)
                              ? static_cast<int64_t>(x1 - x0) * (y1 - y0)
                              : 0;
    const int64_t uni = static_cast<int64_t>(a.w) * a.h +
                        static_cast<int64_t>(b.w) * b.h - inter;
    return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

std::vector<InstanceMask> threshold_filter(const std::vector<InstanceMask>& instances,
                                           double score_thr) {
    std::vector<InstanceMask> kept;
    for (const auto& m : instances)
        if (!m.score || *m.score >= score_thr) kept.push_back(m);
    return kept;
}

std::vector<InstanceMask> nms(const std::vector<InstanceMask>& instances,
                              double iou_thr, bool use_box_iou) {
    const size_t n = instances.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    auto score_of = [&](size_t i) {
        return instances[i].score.value_or(1.0);
    };
    std::sort(order.begin(), order.end(), [&](size_t i, size_t j) {
        const double si = score_of(i), sj = score_of(j);
        if (si != sj) return si > sj;
        return instances[i].id < instances[j].id;
    });

    std::vector<size_t> accepted;
    for (size_t i : order) {
        bool ok = true;
        for (size_t j : accepted) {
            const double iou = use_box_iou ? box_iou(instances[i], instances[j])
                                          : mask_iou(instances[i], instances[j]);
            if (iou >= iou_thr) {
                ok = false;
                break;
            }
        }
        if (ok) accepted.push_back(i);
    }
    std::sort(accepted.begin(), accepted.end()); // restore input order
    std::vector<InstanceMask> kept;
    kept.reserve(accepted.size());
    for (size_t i : accepted) kept.push_back(instances[i]);
    return kept;
}

std::vector<InstanceMask> containment_filter(const std::vector<InstanceMask>& instances,
                                             double ios_thr) {
    const size_t n = instances.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // largest area first; ties keep the higher score, then smaller id
    std::sort(order.begin(), order.end(), [&](size_t i, size_t j) {
        const int64_t ai = instances[i].area(), aj = instances[j].area();
        if (ai != aj) return ai > aj;
        const double si = instances[i].score.value_or(1.0);
        const double sj = instances[j].score.value_or(1.0);
        if (si != sj) return si > sj;
        return instances[i].id < instances[j].id;
    });

    std::vector<size_t> accepted;
    for (size_t i : order) {
        bool ok = true;
        for (size_t j : accepted) {
            const int64_t inter = mask_intersection(instances[i], instances[j]);
            const int64_t smaller = std::min(instances[i].area(), instances[j].area());
            if (smaller > 0 &&
                static_cast<double>(inter) / static_cast<double>(smaller) >= ios_thr) {
                ok = false;
                break;
            }
        }
        if (ok) accepted.push_back(i);
    }
    std::sort(accepted.begin(), accepted.end());
    std::vector<InstanceMask> kept;
    kept.reserve(accepted.size());
    for (size_t i : accepted) kept.push_back(instances[i]);
    return kept;
}

InstanceMask binarize(const Raster& soft_mask, int id, double mask_thr) {
    if (soft_mask.bands() != 1) throw ValidationError("binarize expects single band");
    const int w = soft_mask.width(), h = soft_mask.height();
    std::vector<uint8_t> bits(static_cast<size_t>(w) * h, 0);
    bool any = false;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const float v = soft_mask.at(r, c);
            if (!soft_mask.is_nodata(v) && v >= mask_thr) {
                bits[static_cast<size_t>(r) * w + c] = 1;
                any = true;
            }
        }
    if (!any) throw ValidationError("empty mask after binarization");
    return make_instance(id, 0, 0, w, h, bits);
}

} // namespace treecrown
