#include "treecrown/labelset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

namespace treecrown {

int64_t InstanceMask::area() const {
    int64_t a = 0;
    for (size_t i = 1; i < rle.size(); i += 2) a += rle[i];
    return a;
}

std::vector<int64_t> rle_encode(const std::vector<uint8_t>& bits) {
    std::vector<int64_t> rle;
    uint8_t cur = 0; // runs start with background
    int64_t run = 0;
    for (uint8_t b : bits) {
        const uint8_t v = b ? 1 : 0;
        if (v == cur) {
            ++run;
        } else {
            rle.push_back(run);
            cur = v;
            run = 1;
        }
    }
    rle.push_back(run);
    return rle;
}

std::vector<uint8_t> rle_decode(const std::vector<int64_t>& rle, int w, int h) {
    const int64_t total = std::accumulate(rle.begin(), rle.end(), int64_t{0});
    if (total != static_cast<int64_t>(w) * h)
        throw ValidationError("RLE counts sum to " + std::to_string(total) +
                              ", expected " + std::to_string(static_cast<int64_t>(w) * h));
    for (int64_t c : rle)
        if (c < 0) throw ValidationError("negative RLE count");
    std::vector<uint8_t> bits;
    bits.reserve(static_cast<size_t>(total));
    uint8_t cur = 0;
    for (int64_t c : rle) {
        bits.insert(bits.end(), static_cast<size_t>(c), cur);
        cur = cur ? 0 : 1;
    }
    return bits;
}

InstanceMask make_instance(int id, int x, int y, int w, int h,
                           const std::vector<uint8_t>& bits,
                           std::optional<double> score) {
    // tighten bbox to the set pixels
    int r0 = h, r1 = -1, c0 = w, c1 = -1;
    double sr = 0, sc = 0;
    int64_t n = 0;
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            if (bits[static_cast<size_t>(r) * w + c]) {
                r0 = std::min(r0, r); r1 = std::max(r1, r);
                c0 = std::min(c0, c); c1 = std::max(c1, c);
                sr += r; sc += c;
                ++n;
            }
    if (n == 0) throw ValidationError("empty mask for instance " + std::to_string(id));

    const int tw = c1 - c0 + 1, th = r1 - r0 + 1;
    std::vector<uint8_t> tight(static_cast<size_t>(tw) * th);
    for (int r = 0; r < th; ++r)
        for (int c = 0; c < tw; ++c)
            tight[static_cast<size_t>(r) * tw + c] =
                bits[static_cast<size_t>(r + r0) * w + (c + c0)];

    InstanceMask m;
    m.id = id;
    m.x = x + c0;
    m.y = y + r0;
    m.w = tw;
    m.h = th;
    m.rle = rle_encode(tight);
    m.score = score;
    m.cx = x + sc / n + 0.5;
    m.cy = y + sr / n + 0.5;
    return m;
}

std::vector<TileSpec> make_tiles(int64_t extent_w, int64_t extent_h,
                                 int size, int stride) {
    if (extent_w < size || extent_h < size)
        throw ValidationError("extent smaller than one tile");
    if (size != 2 * stride)
        throw ValidationError("tile size must be 2x stride");

    auto origins = [&](int64_t extent) {
        std::vector<int64_t> out;
        for (int64_t o = 0;; o += stride) {
            if (o + size >= extent) {
                out.push_back(std::min(o, extent - size));
                break;
            }
            out.push_back(o);
        }
        return out;
    };
    std::vector<TileSpec> tiles;
    for (int64_t oy : origins(extent_h))
        for (int64_t ox : origins(extent_w))
            tiles.push_back(TileSpec{ox, oy, size});
    return tiles;
}

namespace {

bool in_center_window(const TileSpec& t, double cx, double cy) {
    const double q = t.size / 4.0; // center window spans [size/4, 3*size/4)
    return cx >= t.x + q && cx < t.x + 3 * q && cy >= t.y + q && cy < t.y + 3 * q;
}

// clip an instance (global pixels) to a tile and rebase tile-local
std::optional<InstanceMask> clip_to_tile(const InstanceMask& m, const TileSpec& t) {
    const int64_t x0 = std::max<int64_t>(m.x, t.x);
    const int64_t y0 = std::max<int64_t>(m.y, t.y);
    const int64_t x1 = std::min<int64_t>(m.x + m.w, t.x + t.size);
    const int64_t y1 = std::min<int64_t>(m.y + m.h, t.y + t.size);
    if (x0 >= x1 || y0 >= y1) return std::nullopt;

    const auto bits = rle_decode(m.rle, m.w, m.h);
    const int cw = static_cast<int>(x1 - x0), ch = static_cast<int>(y1 - y0);
    std::vector<uint8_t> cbits(static_cast<size_t>(cw) * ch, 0);
    bool any = false;
    for (int r = 0; r < ch; ++r)
        for (int c = 0; c < cw; ++c) {
            const int sr = static_cast<int>(y0 - m.y) + r;
            const int sc = static_cast<int>(x0 - m.x) + c;
            const uint8_t b = bits[static_cast<size_t>(sr) * m.w + sc];
            cbits[static_cast<size_t>(r) * cw + c] = b;
            any |= b != 0;
        }
    if (!any) return std::nullopt;
    InstanceMask out = make_instance(m.id, static_cast<int>(x0 - t.x),
                                     static_cast<int>(y0 - t.y), cw, ch, cbits,
                                     m.score);
    out.fallback = m.fallback;
    return out;
}

} // namespace

AnnotationSet assign_to_tiles(const std::vector<InstanceMask>& instances,
                              const std::vector<TileSpec>& tiles,
                              double cell_size_m) {
    AnnotationSet set;
    set.cell_size_m = cell_size_m;
    for (const auto& t : tiles) set.tiles.push_back(Tile{t, {}});

    for (const auto& m : instances) {
        bool placed = false;
        for (auto& tile : set.tiles) {
            if (!in_center_window(tile.spec, m.cx, m.cy)) continue;
            if (auto clipped = clip_to_tile(m, tile.spec))
                tile.instances.push_back(std::move(*clipped));
            placed = true;
            break; // center windows are disjoint
        }
        if (!placed) ++set.dropped_count;
    }
    return set;
}

std::vector<InstanceMask> upscale_instances(const std::vector<InstanceMask>& instances,
                                            const Geotransform& src_gt,
                                            const Geotransform& dst_gt,
                                            int dst_width, int dst_height) {
    std::vector<InstanceMask> out;
    out.reserve(instances.size());
    for (const auto& m : instances) {
        const auto bits = rle_decode(m.rle, m.w, m.h);

        // dst pixel range covered by the src bbox (center containment)
        auto dst_cols = [&](int src_c) {
            const double x0 = src_gt.origin_x + src_c * src_gt.cell_size;
            const double x1 = x0 + src_gt.cell_size;
            // dst pixel centers in [x0, x1)
            int lo = static_cast<int>(std::ceil((x0 - dst_gt.origin_x) / dst_gt.cell_size - 0.5));
            int hi = static_cast<int>(std::ceil((x1 - dst_gt.origin_x) / dst_gt.cell_size - 0.5)) - 1;
            return std::pair<int, int>{std::max(lo, 0), std::min(hi, dst_width - 1)};
        };
        auto dst_rows = [&](int src_r) {
            const double y1 = src_gt.origin_y - src_r * src_gt.cell_size;
            const double y0 = y1 - src_gt.cell_size;
            int lo = static_cast<int>(std::ceil((dst_gt.origin_y - y1) / dst_gt.cell_size - 0.5));
            int hi = static_cast<int>(std::ceil((dst_gt.origin_y - y0) / dst_gt.cell_size - 0.5)) - 1;
            return std::pair<int, int>{std::max(lo, 0), std::min(hi, dst_height - 1)};
        };

        const auto [c_lo, c_hi] = dst_cols(m.x);
        const auto [c_lo2, c_hi2] = dst_cols(m.x + m.w - 1);
        const auto [r_lo, r_hi] = dst_rows(m.y);
        const auto [r_lo2, r_hi2] = dst_rows(m.y + m.h - 1);
        const int bx = c_lo, by = r_lo;
        const int bw = c_hi2 - c_lo + 1, bh = r_hi2 - r_lo + 1;
        (void)c_hi; (void)r_hi; (void)c_lo2; (void)r_lo2;
        if (bw <= 0 || bh <= 0) continue;

        std::vector<uint8_t> dbits(static_cast<size_t>(bw) * bh, 0);
        for (int r = 0; r < m.h; ++r)
            for (int c = 0; c < m.w; ++c) {
                if (!bits[static_cast<size_t>(r) * m.w + c]) continue;
                const auto [cl, ch_] = dst_cols(m.x + c);
                const auto [rl, rh] = dst_rows(m.y + r);
                for (int rr = rl; rr <= rh; ++rr)
                    for (int cc = cl; cc <= ch_; ++cc)
                        dbits[static_cast<size_t>(rr - by) * bw + (cc - bx)] = 1;
            }
        InstanceMask up = make_instance(m.id, bx, by, bw, bh, dbits, m.score);
        up.fallback = m.fallback;
        out.push_back(std::move(up));
    }
    return out;
}

namespace {

nlohmann::json instance_to_json(const InstanceMask& m) {
    nlohmann::json j{{"id", m.id},
                     {"bbox", {m.x, m.y, m.w, m.h}},
                     {"rle", m.rle},
                     {"centroid", {m.cx, m.cy}}};
    if (m.score) j["score"] = *m.score;
    else j["score"] = nullptr;
    if (m.fallback) j["fallback"] = true;
    return j;
}

InstanceMask instance_from_json(const nlohmann::json& j) {
    InstanceMask m;
    m.id = j.at("id").get<int>();
    const auto& b = j.at("bbox");
    if (b.size() != 4) throw ValidationError("bbox must have 4 elements");
    m.x = b[0].get<int>();
    m.y = b[1].get<int>();
    m.w = b[2].get<int>();
    m.h = b[3].get<int>();
    m.rle = j.at("rle").get<std::vector<int64_t>>();
    const int64_t total = std::accumulate(m.rle.begin(), m.rle.end(), int64_t{0});
    if (total != static_cast<int64_t>(m.w) * m.h)
        throw ValidationError("instance " + std::to_string(m.id) +
                              ": RLE does not cover bbox");
    if (!j.at("score").is_null()) m.score = j.at("score").get<double>();
    const auto& ctr = j.at("centroid");
    m.cx = ctr[0].get<double>();
    m.cy = ctr[1].get<double>();
    if (m.cx < m.x || m.cx > m.x + m.w || m.cy < m.y || m.cy > m.y + m.h)
        throw ValidationError("instance " + std::to_string(m.id) +
                              ": centroid outside bbox");
    if (j.contains("fallback")) m.fallback = j["fallback"].get<bool>();
    return m;
}

} // namespace

AnnotationSet read_annotations(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open annotations: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed annotation JSON " + path + ": " + e.what());
    }
    AnnotationSet set;
    try {
        set.cell_size_m = j.at("cell_size_m").get<double>();
        for (const auto& tj : j.at("tiles")) {
            Tile t;
            t.spec.x = tj.at("origin")[0].get<int64_t>();
            t.spec.y = tj.at("origin")[1].get<int64_t>();
            t.spec.size = tj.at("size").get<int>();
            for (const auto& ij : tj.at("instances"))
                t.instances.push_back(instance_from_json(ij));
            set.tiles.push_back(std::move(t));
        }
        if (j.contains("dropped_count"))
            set.dropped_count = j["dropped_count"].get<int64_t>();
        if (j.contains("grid_origin")) {
            set.origin_x = j["grid_origin"][0].get<double>();
            set.origin_y = j["grid_origin"][1].get<double>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("annotation schema violation in " + path + ": " + e.what());
    }
    // ids unique across the set
    std::vector<int> ids;
    for (const auto& t : set.tiles)
        for (const auto& m : t.instances) ids.push_back(m.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw ValidationError("duplicate instance ids in " + path);
    return set;
}

void write_annotations(const AnnotationSet& set, const std::string& path,
                       const std::string& config_echo_json) {
    nlohmann::json j;
    j["cell_size_m"] = set.cell_size_m;
    j["grid_origin"] = {set.origin_x, set.origin_y};
    j["tiles"] = nlohmann::json::array();
    for (const auto& t : set.tiles) {
        nlohmann::json tj{{"origin", {t.spec.x, t.spec.y}},
                          {"size", t.spec.size},
                          {"instances", nlohmann::json::array()}};
        for (const auto& m : t.instances)
            tj["instances"].push_back(instance_to_json(m));
        j["tiles"].push_back(std::move(tj));
    }
    if (set.dropped_count > 0) j["dropped_count"] = set.dropped_count;
    if (!config_echo_json.empty())
        j["config"] = nlohmann::json::parse(config_echo_json);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write annotations: " + path);
    out << j.dump(2) << "\n";
}

AnnotationSet single_tile_set(std::vector<InstanceMask> instances,
                              int grid_w, int grid_h, double cell_size_m) {
    AnnotationSet set;
    set.cell_size_m = cell_size_m;
    Tile t;
    t.spec = TileSpec{0, 0, std::max(grid_w, grid_h)};
    t.instances = std::move(instances);
    set.tiles.push_back(std::move(t));
    return set;
}

} // namespace treecrown
