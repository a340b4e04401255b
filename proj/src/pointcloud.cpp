#include "treecrown/pointcloud.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

namespace treecrown {

Classification parse_classification(const std::string& token) {
    std::string t;
    t.reserve(token.size());
    for (char ch : token) t.push_back(static_cast<char>(std::tolower(ch)));
    if (t == "ground") return Classification::Ground;
    if (t == "vegetation") return Classification::Vegetation;
    if (t == "building") return Classification::Building;
    if (t == "noise") return Classification::Noise;
    if (t == "unclassified") return Classification::Unclassified;
    throw ValidationError("unknown classification token: " + token);
}

const char* classification_name(Classification c) {
    switch (c) {
        case Classification::Ground: return "ground";
        case Classification::Vegetation: return "vegetation";
        case Classification::Building: return "building";
        case Classification::Noise: return "noise";
        default: return "unclassified";
    }
}

void PointCloud::recompute_bounds() {
    min_x = min_y = std::numeric_limits<double>::infinity();
    max_x = max_y = -std::numeric_limits<double>::infinity();
    for (const auto& p : points) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) {
        // trim
        size_t a = cur.find_first_not_of(" \t\r");
        size_t b = cur.find_last_not_of(" \t\r");
        out.push_back(a == std::string::npos ? "" : cur.substr(a, b - a + 1));
    }
    return out;
}

double parse_double(const std::string& s, const std::string& col, size_t lineno) {
    try {
        size_t pos = 0;
        double v = std::stod(s, &pos);
        if (pos != s.size() || !std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError("non-numeric value '" + s + "' in column " + col +
                              " at line " + std::to_string(lineno));
    }
}

} // namespace

PointCloud parse_point_cloud(std::istream& in) {
    std::string header;
    if (!std::getline(in, header)) throw ValidationError("empty point cloud");

    const auto cols = split_csv_line(header);
    std::map<std::string, size_t> idx;
    for (size_t i = 0; i < cols.size(); ++i) idx[cols[i]] = i;
    for (const char* need : {"x", "y", "z", "return_number", "classification", "channel"})
        if (!idx.count(need))
            throw ValidationError(std::string("point CSV missing column: ") + need);

    PointCloud pc;
    std::string line;
    size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto f = split_csv_line(line);
        if (f.size() < cols.size())
            throw ValidationError("short row at line " + std::to_string(lineno));
        LidarPoint p;
        p.x = parse_double(f[idx["x"]], "x", lineno);
        p.y = parse_double(f[idx["y"]], "y", lineno);
        p.z = parse_double(f[idx["z"]], "z", lineno);
        p.return_number = static_cast<int>(parse_double(f[idx["return_number"]], "return_number", lineno));
        if (p.return_number < 1)
            throw ValidationError("return_number < 1 at line " + std::to_string(lineno));
        p.classification = parse_classification(f[idx["classification"]]);
        p.channel = static_cast<int>(parse_double(f[idx["channel"]], "channel", lineno));
        pc.points.push_back(p);
    }
    if (pc.points.empty()) throw ValidationError("empty point cloud");
    pc.recompute_bounds();
    return pc;
}

PointCloud read_point_cloud(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open point cloud: " + path);
    return parse_point_cloud(in);
}

namespace {

struct GridIndex {
    int w = 0, h = 0;
    double min_x = 0, max_y = 0, cell = 1;

    GridIndex(const PointCloud& pc, double cell_size) {
        cell = cell_size;
        min_x = pc.min_x;
        max_y = pc.max_y;
        w = std::max(1, static_cast<int>(std::ceil((pc.max_x - pc.min_x) / cell)));
        h = std::max(1, static_cast<int>(std::ceil((pc.max_y - pc.min_y) / cell)));
    }
    int col(double x) const {
        return std::clamp(static_cast<int>(std::floor((x - min_x) / cell)), 0, w - 1);
    }
    int row(double y) const {
        return std::clamp(static_cast<int>(std::floor((max_y - y) / cell)), 0, h - 1);
    }
};

} // namespace

PointCloud classify_ground_fallback(const PointCloud& pc, double grid, double tol) {
    if (grid <= 0) throw ValidationError("fallback grid must be > 0");
    if (tol < 0) throw ValidationError("fallback tolerance must be >= 0");

    GridIndex gi(pc, grid);
    std::vector<double> cell_min(static_cast<size_t>(gi.w) * gi.h,
                                 std::numeric_limits<double>::infinity());
    for (const auto& p : pc.points) {
        auto& m = cell_min[static_cast<size_t>(gi.row(p.y)) * gi.w + gi.col(p.x)];
        m = std::min(m, p.z);
    }
    PointCloud out = pc;
    for (auto& p : out.points) {
        if (p.classification != Classification::Unclassified) continue;
        const double m = cell_min[static_cast<size_t>(gi.row(p.y)) * gi.w + gi.col(p.x)];
        if (p.z <= m + tol) p.classification = Classification::Ground;
    }
    return out;
}

Raster build_dtm(const PointCloud& pc, double cell_size) {
    if (cell_size <= 0) throw ValidationError("dtm cell size must be > 0");
    GridIndex gi(pc, cell_size);
    std::vector<double> sum(static_cast<size_t>(gi.w) * gi.h, 0.0);
    std::vector<int> cnt(sum.size(), 0);
    size_t n_ground = 0;
    for (const auto& p : pc.points) {
        if (p.classification != Classification::Ground) continue;
        const size_t i = static_cast<size_t>(gi.row(p.y)) * gi.w + gi.col(p.x);
        sum[i] += p.z;
        cnt[i] += 1;
        ++n_ground;
    }
    if (n_ground == 0) throw ValidationError("no ground points for DTM");

    const float nodata = -9999.0f;
    Geotransform gt{pc.min_x, pc.max_y, cell_size};
    Raster dtm(gi.w, gi.h, 1, gt, nodata, nodata);
    for (int r = 0; r < gi.h; ++r)
        for (int c = 0; c < gi.w; ++c) {
            const size_t i = static_cast<size_t>(r) * gi.w + c;
            if (cnt[i] > 0) dtm.at(r, c) = static_cast<float>(sum[i] / cnt[i]);
        }

    // iterated 3x3 neighbor-mean fill, bounded by width+height passes
    for (int pass = 0; pass < gi.w + gi.h; ++pass) {
        bool any_nodata = false;
        Raster next = dtm;
        for (int r = 0; r < gi.h; ++r)
            for (int c = 0; c < gi.w; ++c) {
                if (!dtm.is_nodata(dtm.at(r, c))) continue;
                double s = 0.0;
                int n = 0;
                for (int dr = -1; dr <= 1; ++dr)
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        const int rr = r + dr, cc = c + dc;
                        if (!dtm.in_bounds(rr, cc)) continue;
                        const float v = dtm.at(rr, cc);
                        if (dtm.is_nodata(v)) continue;
                        s += v;
                        ++n;
                    }
                if (n > 0) next.at(r, c) = static_cast<float>(s / n);
                else any_nodata = true;
            }
        dtm = std::move(next);
        if (!any_nodata) break;
    }
    return dtm;
}

PointCloud normalize_heights(const PointCloud& pc, const Raster& dtm) {
    PointCloud out = pc;
    for (auto& p : out.points) {
        const PixelRC px = dtm.pixel_at(p.x, p.y);
        // tolerate points sitting exactly on the max-x / min-y boundary
        const int r = std::min(px.r, dtm.height() - 1);
        const int c = std::min(px.c, dtm.width() - 1);
        if (r < 0 || c < 0 || r >= dtm.height() || c >= dtm.width())
            throw ValidationError("point outside DTM extent");
        p.z = std::max(0.0, p.z - dtm.at(r, c));
    }
    return out;
}

} // namespace treecrown
