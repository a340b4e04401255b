#include "treecrown/spectral.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include <json.hpp>

namespace treecrown {

void BandSet::validate(int band_count) const {
    const std::set<int> s{blue, green, red, red_edge, nir};
    if (s.size() != 5) throw ValidationError("band indices must be distinct");
    for (int b : s)
        if (b < 0 || b >= band_count)
            throw ValidationError("band index " + std::to_string(b) +
                                  " out of range for " + std::to_string(band_count) +
                                  "-band raster");
}

BandSet read_band_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open band config: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed band config " + path + ": " + e.what());
    }
    BandSet b;
    b.blue = j.at("blue").get<int>();
    b.green = j.at("green").get<int>();
    b.red = j.at("red").get<int>();
    b.red_edge = j.at("red_edge").get<int>();
    b.nir = j.at("nir").get<int>();
    return b;
}

Raster compute_ndvi(const Raster& ortho, const BandSet& bands) {
    bands.validate(ortho.bands());
    const int w = ortho.width(), h = ortho.height();
    const float nodata = -9999.0f;
    Raster out(w, h, 1, ortho.geotransform(), nodata);
#pragma omp parallel for schedule(static)
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const float re = ortho.at(r, c, bands.red_edge);
            const float red = ortho.at(r, c, bands.red);
            if (ortho.is_nodata(re) || ortho.is_nodata(red) || re + red == 0.0f)
                out.at(r, c) = nodata;
            else
                out.at(r, c) = (re - red) / (re + red);
        }
    }
    return out;
}

std::map<int, double> segment_mean_index(const std::vector<InstanceMask>& instances,
                                         const Geotransform& seg_gt,
                                         const Raster& index) {
    std::map<int, double> means;
    std::vector<const InstanceMask*> ptrs;
    for (const auto& m : instances) ptrs.push_back(&m);

    std::vector<double> results(ptrs.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(ptrs.size()); ++i) {
        const InstanceMask& m = *ptrs[i];
        const auto bits = rle_decode(m.rle, m.w, m.h);
        const Geotransform& ogt = index.geotransform();

        // ortho pixel range covered by the segment bbox in map space
        const double x0 = seg_gt.origin_x + m.x * seg_gt.cell_size;
        const double x1 = x0 + m.w * seg_gt.cell_size;
        const double y1 = seg_gt.origin_y - m.y * seg_gt.cell_size;
        const double y0 = y1 - m.h * seg_gt.cell_size;
        int pc0 = std::max(0, static_cast<int>(std::floor((x0 - ogt.origin_x) / ogt.cell_size)) - 1);
        int pc1 = std::min(index.width() - 1,
                           static_cast<int>(std::ceil((x1 - ogt.origin_x) / ogt.cell_size)) + 1);
        int pr0 = std::max(0, static_cast<int>(std::floor((ogt.origin_y - y1) / ogt.cell_size)) - 1);
        int pr1 = std::min(index.height() - 1,
                           static_cast<int>(std::ceil((ogt.origin_y - y0) / ogt.cell_size)) + 1);

        double sum = 0.0;
        int64_t n = 0;
        for (int pr = pr0; pr <= pr1; ++pr)
            for (int pc = pc0; pc <= pc1; ++pc) {
                const PixelRC cell = map_pixel(ogt, pr, pc, seg_gt);
                const int lr = cell.r - m.y, lc = cell.c - m.x;
                if (lr < 0 || lr >= m.h || lc < 0 || lc >= m.w) continue;
                if (!bits[static_cast<size_t>(lr) * m.w + lc]) continue;
                const float v = index.at(pr, pc);
                if (index.is_nodata(v)) continue;
                sum += v;
                ++n;
            }
        results[i] = n > 0 ? sum / n : kNoIndexMean;
    }
    for (size_t i = 0; i < ptrs.size(); ++i) means[ptrs[i]->id] = results[i];
    return means;
}

std::vector<InstanceMask> filter_by_ndvi(const std::vector<InstanceMask>& instances,
                                         const std::map<int, double>& means,
                                         double threshold) {
    std::vector<InstanceMask> kept;
    for (const auto& m : instances) {
        const auto it = means.find(m.id);
        if (it == means.end())
            throw ValidationError("no mean index for instance " + std::to_string(m.id));
        if (it->second >= threshold) kept.push_back(m);
    }
    return kept;
}

void write_mean_histogram(const std::map<int, double>& means, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write histogram CSV: " + path);
    out << "label,mean_ndvi\n";
    for (const auto& [label, mean] : means) out << label << "," << mean << "\n";
}

} // namespace treecrown
