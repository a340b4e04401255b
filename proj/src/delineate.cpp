#include "treecrown/delineate.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <set>

namespace treecrown {

namespace {

inline int window_radius_cells(double h, double win_a, double win_b, double cell) {
    const double w = win_a + win_b * h;
    return std::max(1, static_cast<int>(std::ceil(w / cell)));
}

} // namespace

std::vector<Treetop> local_maxima(const Raster& chm_s, double min_tree_height,
                                  double win_a, double win_b) {
    if (chm_s.bands() != 1) throw ValidationError("local_maxima expects single band");
    const int w = chm_s.width(), h = chm_s.height();
    const double cell = chm_s.geotransform().cell_size;

    std::vector<uint8_t> candidate(static_cast<size_t>(w) * h, 0);

#pragma omp parallel for schedule(dynamic, 8)
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const float v = chm_s.at(r, c);
            if (v < min_tree_height) continue;
            const int rad = window_radius_cells(v, win_a, win_b, cell);
            bool is_max = true;
            for (int dr = -rad; dr <= rad && is_max; ++dr)
                for (int dc = -rad; dc <= rad; ++dc) {
                    const int rr = r + dr, cc = c + dc;
                    if (!chm_s.in_bounds(rr, cc)) continue;
                    if (chm_s.at(rr, cc) > v) {
                        is_max = false;
                        break;
                    }
                }
            if (is_max) candidate[static_cast<size_t>(r) * w + c] = 1;
        }
    }

    // plateau dedup: keep the lexicographically smallest cell of each
    // equal-valued 4-connected component that contains a candidate
    std::vector<uint8_t> seen(static_cast<size_t>(w) * h, 0);
    std::vector<Treetop> tops;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            const size_t i = static_cast<size_t>(r) * w + c;
            if (!candidate[i] || seen[i]) continue;
            const float v = chm_s.at(r, c);
            // flood the equal-value plateau from here
            std::vector<PixelRC> stack{{r, c}};
            seen[i] = 1;
            PixelRC best{r, c};
            while (!stack.empty()) {
                const PixelRC p = stack.back();
                stack.pop_back();
                if (p.r < best.r || (p.r == best.r && p.c < best.c)) best = p;
                constexpr int DR[4] = {-1, 1, 0, 0};
                constexpr int DC[4] = {0, 0, -1, 1};
                for (int k = 0; k < 4; ++k) {
                    const int rr = p.r + DR[k], cc = p.c + DC[k];
                    if (!chm_s.in_bounds(rr, cc)) continue;
                    const size_t ii = static_cast<size_t>(rr) * w + cc;
                    if (seen[ii] || chm_s.at(rr, cc) != v) continue;
                    seen[ii] = 1;
                    stack.push_back(PixelRC{rr, cc});
                }
            }
            tops.push_back(Treetop{best.r, best.c, v});
        }

    std::sort(tops.begin(), tops.end(), [](const Treetop& a, const Treetop& b) {
        return a.r != b.r ? a.r < b.r : a.c < b.c;
    });
    return tops;
}

namespace {

struct FloodEntry {
    float height;
    uint64_t seq;
    int r, c;
    int32_t label;
};

struct FloodOrder {
    // priority_queue keeps the "largest"; we want greatest height, then FIFO
    bool operator()(const FloodEntry& a, const FloodEntry& b) const {
        if (a.height != b.height) return a.height < b.height;
        return a.seq > b.seq;
    }
};

} // namespace

SegmentMap marker_watershed(const Raster& chm_s, const std::vector<Treetop>& markers,
                            double min_tree_height) {
    const int w = chm_s.width(), h = chm_s.height();

    std::vector<Treetop> seeds = markers;
    std::sort(seeds.begin(), seeds.end(), [](const Treetop& a, const Treetop& b) {
        return a.r != b.r ? a.r < b.r : a.c < b.c;
    });
    for (size_t i = 1; i < seeds.size(); ++i)
        if (seeds[i].r == seeds[i - 1].r && seeds[i].c == seeds[i - 1].c)
            throw ValidationError("duplicate marker cell");

    SegmentMap sm;
    sm.width = w;
    sm.height = h;
    sm.geotransform = chm_s.geotransform();
    sm.labels.assign(static_cast<size_t>(w) * h, 0);

    std::priority_queue<FloodEntry, std::vector<FloodEntry>, FloodOrder> pq;
    uint64_t seq = 0;
    for (size_t i = 0; i < seeds.size(); ++i) {
        const auto& s = seeds[i];
        if (!chm_s.in_bounds(s.r, s.c))
            throw ValidationError("marker outside raster");
        const int32_t label = static_cast<int32_t>(i + 1);
        sm.top_of[label] = s;
        pq.push(FloodEntry{chm_s.at(s.r, s.c), seq++, s.r, s.c, label});
    }

    while (!pq.empty()) {
        const FloodEntry e = pq.top();
        pq.pop();
        auto& cell = sm.labels[static_cast<size_t>(e.r) * w + e.c];
        if (cell != 0) continue;
        cell = e.label;
        constexpr int DR[4] = {-1, 1, 0, 0};
        constexpr int DC[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
            const int rr = e.r + DR[k], cc = e.c + DC[k];
            if (rr < 0 || rr >= h || cc < 0 || cc >= w) continue;
            if (sm.labels[static_cast<size_t>(rr) * w + cc] != 0) continue;
            const float hv = chm_s.at(rr, cc);
            if (hv < min_tree_height) continue;
            pq.push(FloodEntry{hv, seq++, rr, cc, e.label});
        }
    }
    return sm;
}

std::vector<InstanceMask> segments_to_instances(const SegmentMap& sm) {
    struct Acc {
        int r0, r1, c0, c1;
        std::vector<PixelRC> cells;
    };
    std::map<int32_t, Acc> accs;
    for (int r = 0; r < sm.height; ++r)
        for (int c = 0; c < sm.width; ++c) {
            const int32_t l = sm.label(r, c);
            if (l == 0) continue;
            auto [it, fresh] = accs.try_emplace(l, Acc{r, r, c, c, {}});
            auto& a = it->second;
            if (!fresh) {
                a.r0 = std::min(a.r0, r);
                a.r1 = std::max(a.r1, r);
                a.c0 = std::min(a.c0, c);
                a.c1 = std::max(a.c1, c);
            }
            a.cells.push_back(PixelRC{r, c});
        }

    std::vector<InstanceMask> out;
    out.reserve(accs.size());
    for (const auto& [label, a] : accs) {
        const int bw = a.c1 - a.c0 + 1, bh = a.r1 - a.r0 + 1;
        std::vector<uint8_t> bits(static_cast<size_t>(bw) * bh, 0);
        for (const auto& p : a.cells)
            bits[static_cast<size_t>(p.r - a.r0) * bw + (p.c - a.c0)] = 1;
        out.push_back(make_instance(label, a.c0, a.r0, bw, bh, bits));
    }
    return out;
}

} // namespace treecrown
