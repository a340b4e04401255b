#include "treecrown/synth.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "treecrown/spectral.hpp"

namespace treecrown::synth {

namespace {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

Rng::Rng(uint64_t seed) : state(splitmix64(seed)) {
    if (state == 0) state = 1;
}

uint64_t Rng::next() {
    state ^= state >> 12;
    state ^= state << 25;
    state ^= state >> 27;
    return state * 0x2545f4914f6cdd1dULL;
}

double Rng::uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int lo, int hi) {
    return lo + static_cast<int>(
                    (static_cast<unsigned __int128>(next()) *
                     static_cast<uint64_t>(hi - lo + 1)) >>
                    64);
}

Raster make_bump_chm(int w, int h, double cell_size, const std::vector<Bump>& bumps) {
    Raster chm(w, h, 1, Geotransform{0.0, h * cell_size, cell_size}, -9999.0f, 0.0f);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            double v = 0.0;
            for (const auto& b : bumps) {
                const double d2 = (r - b.r) * (r - b.r) + (c - b.c) * (c - b.c);
                v += b.peak * std::exp(-0.5 * d2 / (b.sigma * b.sigma));
            }
            chm.at(r, c) = static_cast<float>(v);
        }
    return chm;
}

std::vector<Bump> random_bumps(Rng& rng, int w, int h, int count, double min_sep,
                               double peak_lo, double peak_hi, double sigma_lo,
                               double sigma_hi) {
    std::vector<Bump> bumps;
    int attempts = 0;
    while (static_cast<int>(bumps.size()) < count && attempts < 10000) {
        ++attempts;
        Bump b;
        b.sigma = rng.uniform(sigma_lo, sigma_hi);
        const double margin = 3.0 * b.sigma + 2.0;
        b.r = rng.uniform(margin, h - margin);
        b.c = rng.uniform(margin, w - margin);
        b.peak = rng.uniform(peak_lo, peak_hi);
        bool ok = true;
        for (const auto& o : bumps) {
            const double d = std::hypot(b.r - o.r, b.c - o.c);
            if (d < min_sep) {
                ok = false;
                break;
            }
        }
        if (ok) bumps.push_back(b);
    }
    return bumps;
}

std::vector<Disc> random_discs(Rng& rng, int w, int h, int count, double r_lo,
                               double r_hi, double margin, double min_gap) {
    std::vector<Disc> discs;
    int attempts = 0;
    while (static_cast<int>(discs.size()) < count && attempts < 20000) {
        ++attempts;
        Disc d;
        d.radius = rng.uniform(r_lo, r_hi);
        d.cx = rng.uniform(margin + d.radius, w - margin - d.radius);
        d.cy = rng.uniform(margin + d.radius, h - margin - d.radius);
        bool ok = true;
        for (const auto& o : discs)
            if (std::hypot(d.cx - o.cx, d.cy - o.cy) < d.radius + o.radius + min_gap) {
                ok = false;
                break;
            }
        if (ok) discs.push_back(d);
    }
    return discs;
}

namespace {

// pixel-range of centers within [lo, hi]
inline int px_lo(double lo) { return static_cast<int>(std::ceil(lo - 0.5)); }
inline int px_hi(double hi) { return static_cast<int>(std::floor(hi - 0.5)); }

} // namespace

std::vector<InstanceMask> disc_instances(const std::vector<Disc>& discs, int first_id) {
    std::vector<InstanceMask> out;
    int id = first_id;
    for (const auto& d : discs) {
        const int c0 = px_lo(d.cx - d.radius), c1 = px_hi(d.cx + d.radius);
        const int r0 = px_lo(d.cy - d.radius), r1 = px_hi(d.cy + d.radius);
        const int w = c1 - c0 + 1, h = r1 - r0 + 1;
        std::vector<uint8_t> bits(static_cast<size_t>(w) * h, 0);
        for (int r = r0; r <= r1; ++r)
            for (int c = c0; c <= c1; ++c) {
                const double dx = c + 0.5 - d.cx, dy = r + 0.5 - d.cy;
                if (dx * dx + dy * dy <= d.radius * d.radius)
                    bits[static_cast<size_t>(r - r0) * w + (c - c0)] = 1;
            }
        out.push_back(make_instance(id++, c0, r0, w, h, bits));
    }
    return out;
}

std::vector<InstanceMask> square_instances(const std::vector<Disc>& discs, int first_id) {
    std::vector<InstanceMask> out;
    int id = first_id;
    for (const auto& d : discs) {
        const int c0 = px_lo(d.cx - d.radius), c1 = px_hi(d.cx + d.radius);
        const int r0 = px_lo(d.cy - d.radius), r1 = px_hi(d.cy + d.radius);
        const int w = c1 - c0 + 1, h = r1 - r0 + 1;
        std::vector<uint8_t> bits(static_cast<size_t>(w) * h, 1);
        out.push_back(make_instance(id++, c0, r0, w, h, bits));
    }
    return out;
}

Raster make_disc_ortho(int w, int h, double cell_size, double origin_x, double origin_y,
                       const std::vector<Disc>& discs) {
    // vegetation: RE 0.6, Red 0.2 -> NDVI 0.5; pavement: RE 0.21, Red 0.19 -> 0.05
    const float veg[5] = {0.10f, 0.30f, 0.20f, 0.60f, 0.70f};
    const float pav[5] = {0.30f, 0.30f, 0.19f, 0.21f, 0.25f};
    Raster ortho(w, h, 5, Geotransform{origin_x, origin_y, cell_size}, -9999.0f);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) {
            bool inside = false;
            for (const auto& d : discs) {
                const double dx = c + 0.5 - d.cx, dy = r + 0.5 - d.cy;
                if (dx * dx + dy * dy <= d.radius * d.radius) {
                    inside = true;
                    break;
                }
            }
            for (int b = 0; b < 5; ++b)
                ortho.at(r, c, b) = inside ? veg[b] : pav[b];
        }
    return ortho;
}

void write_scene(const std::string& out_dir, uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    Rng rng(seed);

    const int ortho_px = 1024;
    const double ortho_cell = 0.05;
    const double extent = ortho_px * ortho_cell; // 51.2 m
    const double chm_cell = 0.5;

    // crowns sit inside the central window so tiling keeps all of them
    const auto discs = random_discs(rng, ortho_px, ortho_px, 10, 30.0, 55.0,
                                    /*margin=*/280.0, /*min_gap=*/30.0);

    const Raster ortho = make_disc_ortho(ortho_px, ortho_px, ortho_cell, 0.0, extent, discs);
    write_raster(ortho, out_dir + "/ortho.rasterbin");

    BandSet bands;
    {
        std::ofstream bf(out_dir + "/bands.json");
        bf << nlohmann::json{{"blue", 0}, {"green", 1}, {"red", 2},
                             {"red_edge", 3}, {"nir", 4}}.dump(2)
           << "\n";
    }
    write_raster(compute_ndvi(ortho, bands), out_dir + "/ndvi.rasterbin");

    // ground truth: tiled disc masks
    {
        const auto tiles = make_tiles(ortho_px, ortho_px, 1024, 512);
        auto gt = assign_to_tiles(disc_instances(discs), tiles, ortho_cell);
        gt.origin_x = 0.0;
        gt.origin_y = extent;
        write_annotations(gt, out_dir + "/gt.json");
    }

    // lidar returns: ground grid plus paraboloid crown profiles
    {
        std::ofstream pts(out_dir + "/points.csv");
        pts << "x,y,z,return_number,classification,channel\n";
        pts.precision(4);
        pts << std::fixed;
        // corners pin the cloud bounds to the ortho extent
        pts << 0.0 << "," << 0.0 << ",0.0,1,ground,1\n";
        pts << extent << "," << extent << ",0.0,1,ground,1\n";
        pts << 0.0 << "," << extent << ",0.0,1,ground,2\n";
        pts << extent << "," << 0.0 << ",0.0,1,ground,2\n";
        for (double y = 0.25; y < extent; y += 0.5)
            for (double x = 0.25; x < extent; x += 0.5)
                pts << x << "," << y << ",0.0,1,ground,1\n";
        for (const auto& d : discs) {
            const double cx = d.cx * ortho_cell;
            const double cy = extent - d.cy * ortho_cell; // pixel row -> map y
            const double radius = d.radius * ortho_cell;
            const double peak = rng.uniform(6.0, 12.0);
            for (double dy = -radius; dy <= radius; dy += 0.2)
                for (double dx = -radius; dx <= radius; dx += 0.2) {
                    const double rr2 = (dx * dx + dy * dy) / (radius * radius);
                    if (rr2 > 1.0) continue;
                    const double z = peak * (1.0 - 0.8 * rr2);
                    pts << cx + dx << "," << cy + dy << "," << z
                        << ",1,vegetation," << (1 + (rng.next() & 1)) << "\n";
                }
        }
    }

    {
        nlohmann::json cfg{{"points", out_dir + "/points.csv"},
                           {"ortho", out_dir + "/ortho.rasterbin"},
                           {"bands", out_dir + "/bands.json"},
                           {"gt", out_dir + "/gt.json"},
                           {"mock_guide", out_dir + "/ndvi.rasterbin"},
                           {"cell", chm_cell},
                           {"channels", {1, 2}},
                           {"sigma", 1.0},
                           {"min_height", 2.0},
                           {"win_a", 1.0},
                           {"win_b", 0.05},
                           {"ndvi_threshold", 0.2},
                           {"tile_size", 1024},
                           {"stride", 512},
                           {"mock_threshold", 0.2},
                           {"score", 0.3},
                           {"nms_iou", 0.3},
                           {"ios", 0.8},
                           {"overlap", 0.5},
                           {"window", "center"},
                           {"bootstrap", 1000},
                           {"level", 0.95},
                           {"seed", seed}};
        std::ofstream cf(out_dir + "/pipeline.json");
        cf << cfg.dump(2) << "\n";
    }
}

} // namespace treecrown::synth
