#pragma once

// Synthetic scene generation for tests, the acceptance suite, and the hidden
// `synth` subcommand.

#include <cstdint>
#include <string>
#include <vector>

#include "treecrown/labelset.hpp"
#include "treecrown/raster.hpp"

namespace treecrown::synth {

// Small deterministic PRNG (splitmix64-seeded xorshift64*).
struct Rng {
    uint64_t state;
    explicit Rng(uint64_t seed);
    uint64_t next();
    double uniform();                       // [0, 1)
    double uniform(double lo, double hi);
    int uniform_int(int lo, int hi);        // inclusive
};

struct Bump {
    double r, c;     // cells
    double peak;     // meters
    double sigma;    // cells
};

// CHM built from superposed Gaussian bumps over flat ground.
Raster make_bump_chm(int w, int h, double cell_size, const std::vector<Bump>& bumps);

// Bumps with pairwise center separation >= min_sep cells.
std::vector<Bump> random_bumps(Rng& rng, int w, int h, int count, double min_sep,
                               double peak_lo = 4.0, double peak_hi = 12.0,
                               double sigma_lo = 2.0, double sigma_hi = 4.0);

struct Disc {
    double cx, cy;   // pixel-center coordinates
    double radius;   // pixels
};

std::vector<Disc> random_discs(Rng& rng, int w, int h, int count, double r_lo,
                               double r_hi, double margin, double min_gap = 4.0);

// Pixel (r,c) is in the disc iff its center lies within the radius.
std::vector<InstanceMask> disc_instances(const std::vector<Disc>& discs, int first_id = 1);

// Filled bounding squares of the discs (blocky stand-in for coarse masks).
std::vector<InstanceMask> square_instances(const std::vector<Disc>& discs, int first_id = 1);

// 5-band orthophoto: disc interiors read as vegetation (high red-edge), the
// background as pavement. Band order blue/green/red/red_edge/nir.
Raster make_disc_ortho(int w, int h, double cell_size, double origin_x, double origin_y,
                       const std::vector<Disc>& discs);

// Full bundled scene on disk: points.csv, ortho + ndvi guide rasters,
// bands.json, tiled gt.json, pipeline.json for run-all.
void write_scene(const std::string& out_dir, uint64_t seed);

} // namespace treecrown::synth
