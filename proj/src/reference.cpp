#include "treecrown/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "treecrown/postfilter.hpp"

namespace treecrown::ref {

namespace {

inline int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

} // namespace

Raster gaussian_smooth_dense(const Raster& r, double sigma) {
    if (sigma == 0.0) return r;
    const int w = r.width(), h = r.height();
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));

    std::vector<double> kernel(static_cast<size_t>(2 * radius + 1) * (2 * radius + 1));
    double ksum = 0.0;
    for (int di = -radius; di <= radius; ++di)
        for (int dj = -radius; dj <= radius; ++dj) {
            const double v = std::exp(-0.5 * (di * di + dj * dj) / (sigma * sigma));
            kernel[static_cast<size_t>(di + radius) * (2 * radius + 1) + (dj + radius)] = v;
            ksum += v;
        }
    for (double& v : kernel) v /= ksum;

    Raster out(w, h, 1, r.geotransform(), r.nodata());
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            if (r.is_nodata(r.at(i, j))) {
                out.at(i, j) = r.nodata();
                continue;
            }
            double sv = 0.0, sw = 0.0;
            for (int di = -radius; di <= radius; ++di)
                for (int dj = -radius; dj <= radius; ++dj) {
                    const int ii = reflect(i + di, h);
                    const int jj = reflect(j + dj, w);
                    const float v = r.at(ii, jj);
                    if (r.is_nodata(v)) continue;
                    const double kw =
                        kernel[static_cast<size_t>(di + radius) * (2 * radius + 1) +
                               (dj + radius)];
                    sv += kw * v;
                    sw += kw;
                }
            out.at(i, j) = sw > 0.0 ? static_cast<float>(sv / sw) : r.nodata();
        }
    return out;
}

namespace {

std::vector<Treetop> window_maxima_impl(const Raster& r, double min_height,
                                        auto radius_of) {
    const int w = r.width(), h = r.height();
    std::vector<uint8_t> cand(static_cast<size_t>(w) * h, 0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const float v = r.at(i, j);
            if (v < min_height) continue;
            const int rad = radius_of(v);
            bool ok = true;
            for (int di = -rad; di <= rad && ok; ++di)
                for (int dj = -rad; dj <= rad; ++dj) {
                    const int ii = i + di, jj = j + dj;
                    if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
                    if (r.at(ii, jj) > v) {
                        ok = false;
                        break;
                    }
                }
            if (ok) cand[static_cast<size_t>(i) * w + j] = 1;
        }

    // plateau representative: smallest (r,c) of each equal-valued 4-connected
    // component holding a candidate
    std::vector<uint8_t> seen(cand.size(), 0);
    std::vector<Treetop> tops;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const size_t idx = static_cast<size_t>(i) * w + j;
            if (!cand[idx] || seen[idx]) continue;
            const float v = r.at(i, j);
            std::vector<PixelRC> stack{{i, j}};
            seen[idx] = 1;
            PixelRC best{i, j};
            while (!stack.empty()) {
                PixelRC p = stack.back();
                stack.pop_back();
                if (p.r < best.r || (p.r == best.r && p.c < best.c)) best = p;
                const int DR[4] = {-1, 1, 0, 0}, DC[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const int ii = p.r + DR[k], jj = p.c + DC[k];
                    if (ii < 0 || ii >= h || jj < 0 || jj >= w) continue;
                    const size_t ii2 = static_cast<size_t>(ii) * w + jj;
                    if (seen[ii2] || r.at(ii, jj) != v) continue;
                    seen[ii2] = 1;
                    stack.push_back(PixelRC{ii, jj});
                }
            }
            tops.push_back(Treetop{best.r, best.c, v});
        }
    std::sort(tops.begin(), tops.end(), [](const Treetop& a, const Treetop& b) {
        return a.r != b.r ? a.r < b.r : a.c < b.c;
    });
    return tops;
}

} // namespace

std::vector<Treetop> fixed_window_maxima(const Raster& r, double min_height,
                                         int radius_cells) {
    return window_maxima_impl(r, min_height, [&](float) { return radius_cells; });
}

std::vector<Treetop> variable_window_maxima(const Raster& r, double min_height,
                                            double win_a, double win_b) {
    const double cell = r.geotransform().cell_size;
    return window_maxima_impl(r, min_height, [&](float v) {
        return std::max(1, static_cast<int>(std::ceil((win_a + win_b * v) / cell)));
    });
}

SegmentMap priority_flood(const Raster& r, const std::vector<Treetop>& markers,
                          double min_height) {
    const int w = r.width(), h = r.height();

    std::vector<Treetop> seeds = markers;
    std::sort(seeds.begin(), seeds.end(), [](const Treetop& a, const Treetop& b) {
        return a.r != b.r ? a.r < b.r : a.c < b.c;
    });

    SegmentMap sm;
    sm.width = w;
    sm.height = h;
    sm.geotransform = r.geotransform();
    sm.labels.assign(static_cast<size_t>(w) * h, 0);

    struct Entry {
        float height;
        uint64_t seq;
        int r, c;
        int32_t label;
    };
    // ordered frontier: highest first, FIFO on equal heights
    auto order = [](const Entry& a, const Entry& b) {
        if (a.height != b.height) return a.height > b.height;
        return a.seq < b.seq;
    };
    std::set<Entry, decltype(order)> frontier(order);
    uint64_t seq = 0;
    for (size_t i = 0; i < seeds.size(); ++i) {
        sm.top_of[static_cast<int32_t>(i + 1)] = seeds[i];
        frontier.insert(Entry{r.at(seeds[i].r, seeds[i].c), seq++, seeds[i].r,
                              seeds[i].c, static_cast<int32_t>(i + 1)});
    }

    while (!frontier.empty()) {
        const Entry e = *frontier.begin();
        frontier.erase(frontier.begin());
        auto& cell = sm.labels[static_cast<size_t>(e.r) * w + e.c];
        if (cell != 0) continue;
        cell = e.label;
        const int DR[4] = {-1, 1, 0, 0}, DC[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            const int rr = e.r + DR[k], cc = e.c + DC[k];
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            if (sm.labels[static_cast<size_t>(rr) * w + cc] != 0) continue;
            const float hv = r.at(rr, cc);
            if (hv < min_height) continue;
            frontier.insert(Entry{hv, seq++, rr, cc, e.label});
        }
    }
    return sm;
}

std::vector<InstanceMask> nms(const std::vector<InstanceMask>& instances,
                              double iou_thr) {
    const size_t n = instances.size();
    std::vector<std::vector<double>> iou(n, std::vector<double>(n, 0.0));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = i + 1; j < n; ++j)
            iou[i][j] = iou[j][i] = mask_iou(instances[i], instances[j]);

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        const double sa = instances[a].score.value_or(1.0);
        const double sb = instances[b].score.value_or(1.0);
        if (sa != sb) return sa > sb;
        return instances[a].id < instances[b].id;
    });
    std::vector<uint8_t> kept(n, 0);
    std::vector<size_t> acc;
    for (size_t i : order) {
        bool ok = true;
        for (size_t j : acc)
            if (iou[i][j] >= iou_thr) {
                ok = false;
                break;
            }
        if (ok) {
            acc.push_back(i);
            kept[i] = 1;
        }
    }
    std::vector<InstanceMask> out;
    for (size_t i = 0; i < n; ++i)
        if (kept[i]) out.push_back(instances[i]);
    return out;
}

} // namespace treecrown::ref
