#include "treecrown/chm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace treecrown {

Raster rasterize_chm(const PointCloud& pc, double cell_size,
                     const std::set<int>& channels) {
    if (channels.empty()) throw ValidationError("empty channel set");
    if (cell_size <= 0) throw ValidationError("chm cell size must be > 0");

    const int w = std::max(1, static_cast<int>(std::ceil((pc.max_x - pc.min_x) / cell_size)));
    const int h = std::max(1, static_cast<int>(std::ceil((pc.max_y - pc.min_y) / cell_size)));
    const float nodata = -9999.0f;
    Raster chm(w, h, 1, Geotransform{pc.min_x, pc.max_y, cell_size}, nodata, nodata);

    for (const auto& p : pc.points) {
        if (p.return_number != 1 || !channels.count(p.channel)) continue;
        const int c = std::clamp(
            static_cast<int>(std::floor((p.x - pc.min_x) / cell_size)), 0, w - 1);
        const int r = std::clamp(
            static_cast<int>(std::floor((pc.max_y - p.y) / cell_size)), 0, h - 1);
        float& cell = chm.at(r, c);
        if (chm.is_nodata(cell) || p.z > cell) cell = static_cast<float>(p.z);
    }
    return chm;
}

Raster fill_chm_gaps(const Raster& chm) {
    Raster out = chm;
    const int w = chm.width(), h = chm.height();
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            if (!chm.is_nodata(chm.at(r, c))) continue;
            float nb[8];
            int n = 0;
            for (int dr = -1; dr <= 1; ++dr)
                for (int dc = -1; dc <= 1; ++dc) {
                    if (dr == 0 && dc == 0) continue;
                    const int rr = r + dr, cc = c + dc;
                    if (!chm.in_bounds(rr, cc)) continue;
                    const float v = chm.at(rr, cc);
                    if (!chm.is_nodata(v)) nb[n++] = v;
                }
            if (n >= 5) {
                std::sort(nb, nb + n);
                out.at(r, c) = (n % 2 == 1) ? nb[n / 2]
                                            : 0.5f * (nb[n / 2 - 1] + nb[n / 2]);
            } else {
                out.at(r, c) = 0.0f;
            }
        }
    }
    return out;
}

} // namespace treecrown
