#include "treecrown/raster.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace treecrown {

Raster::Raster(int width, int height, int bands, Geotransform gt, float nodata,
               float fill)
    : width_(width), height_(height), bands_(bands), gt_(gt), nodata_(nodata),
      values_(static_cast<size_t>(width) * height * bands, fill) {
    if (width <= 0 || height <= 0 || bands < 1)
        throw ValidationError("raster dimensions must be positive");
    if (gt.cell_size <= 0.0)
        throw ValidationError("cell_size must be > 0");
}

PixelRC Raster::pixel_at(double x, double y) const {
    return PixelRC{
        static_cast<int>(std::floor((gt_.origin_y - y) / gt_.cell_size)),
        static_cast<int>(std::floor((x - gt_.origin_x) / gt_.cell_size))};
}

PixelRC map_pixel(const Geotransform& src, int r, int c, const Geotransform& dst) {
    const double x = src.center_x(c);
    const double y = src.center_y(r);
    return PixelRC{
        static_cast<int>(std::floor((dst.origin_y - y) / dst.cell_size)),
        static_cast<int>(std::floor((x - dst.origin_x) / dst.cell_size))};
}

namespace {

// index mirrored into [0, n) (reflect padding, edge repeated once: -1 -> 0)
inline int reflect(int i, int n) {
    while (i < 0 || i >= n) {
        if (i < 0) i = -i - 1;
        if (i >= n) i = 2 * n - i - 1;
    }
    return i;
}

std::vector<double> gaussian_kernel(double sigma, int radius) {
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
        k[i + radius] = w;
        sum += w;
    }
    for (double& w : k) w /= sum;
    return k;
}

} // namespace

Raster gaussian_smooth(const Raster& r, double sigma) {
    if (sigma < 0.0) throw ValidationError("gaussian sigma must be >= 0");
    if (r.bands() != 1) throw ValidationError("gaussian_smooth expects a single band");
    if (sigma == 0.0) return r;

    const int w = r.width(), h = r.height();
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    const std::vector<double> kernel = gaussian_kernel(sigma, radius);

    // Renormalized nodata handling: convolve value*mask and mask separately,
    // both passes separable, then divide.
    std::vector<double> val(static_cast<size_t>(w) * h);
    std::vector<double> msk(static_cast<size_t>(w) * h);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) {
            const float v = r.at(i, j);
            const bool ok = !r.is_nodata(v) && std::isfinite(v);
            val[static_cast<size_t>(i) * w + j] = ok ? v : 0.0;
            msk[static_cast<size_t>(i) * w + j] = ok ? 1.0 : 0.0;
        }

    std::vector<double> val_t(val.size()), msk_t(msk.size());

    // horizontal pass
#pragma omp parallel for schedule(static)
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < w; ++j) {
            double sv = 0.0, sm = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int jj = reflect(j + k, w);
                const double kw = kernel[k + radius];
                sv += kw * val[static_cast<size_t>(i) * w + jj];
                sm += kw * msk[static_cast<size_t>(i) * w + jj];
            }
            val_t[static_cast<size_t>(i) * w + j] = sv;
            msk_t[static_cast<size_t>(i) * w + j] = sm;
        }
    }

    Raster out(w, h, 1, r.geotransform(), r.nodata());

    // vertical pass
#pragma omp parallel for schedule(static)
    for (int j = 0; j < w; ++j) {
        for (int i = 0; i < h; ++i) {
            double sv = 0.0, sm = 0.0;
            for (int k = -radius; k <= radius; ++k) {
                const int ii = reflect(i + k, h);
                const double kw = kernel[k + radius];
                sv += kw * val_t[static_cast<size_t>(ii) * w + j];
                sm += kw * msk_t[static_cast<size_t>(ii) * w + j];
            }
            if (r.is_nodata(r.at(i, j)) || sm <= 0.0)
                out.at(i, j) = r.nodata();
            else
                out.at(i, j) = static_cast<float>(sv / sm);
        }
    }
    return out;
}

Raster read_raster(const std::string& path) {
    std::ifstream jf(path + ".json");
    if (!jf) throw IoError("cannot open raster sidecar: " + path + ".json");
    nlohmann::json j;
    try {
        jf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError("malformed raster sidecar " + path + ".json: " + e.what());
    }
    for (const char* key : {"width", "height", "bands", "dtype", "nodata",
                            "origin_x", "origin_y", "cell_size"})
        if (!j.contains(key))
            throw ValidationError(std::string("raster sidecar missing field: ") + key);
    if (j["dtype"].get<std::string>() != "f32")
        throw ValidationError("unsupported raster dtype: " + j["dtype"].get<std::string>());

    const int width = j["width"].get<int>();
    const int height = j["height"].get<int>();
    const int bands = j["bands"].get<int>();
    Geotransform gt{j["origin_x"].get<double>(), j["origin_y"].get<double>(),
                    j["cell_size"].get<double>()};
    Raster r(width, height, bands, gt, j["nodata"].get<float>());

    std::ifstream bf(path + ".bin", std::ios::binary);
    if (!bf) throw IoError("cannot open raster payload: " + path + ".bin");
    bf.seekg(0, std::ios::end);
    const auto bytes = static_cast<size_t>(bf.tellg());
    bf.seekg(0);
    const size_t expect = r.values().size() * sizeof(float);
    if (bytes != expect)
        throw ValidationError("raster payload size mismatch: " + path + ".bin has " +
                              std::to_string(bytes) + " bytes, header implies " +
                              std::to_string(expect));
    bf.read(reinterpret_cast<char*>(r.values().data()),
            static_cast<std::streamsize>(expect));
    if (!bf) throw IoError("short read on raster payload: " + path + ".bin");
    return r;
}

void write_raster(const Raster& r, const std::string& path,
                  const std::string& config_echo_json) {
    nlohmann::json j{{"width", r.width()},
                     {"height", r.height()},
                     {"bands", r.bands()},
                     {"dtype", "f32"},
                     {"nodata", r.nodata()},
                     {"origin_x", r.geotransform().origin_x},
                     {"origin_y", r.geotransform().origin_y},
                     {"cell_size", r.geotransform().cell_size}};
    if (!config_echo_json.empty())
        j["config"] = nlohmann::json::parse(config_echo_json);
    std::ofstream jf(path + ".json");
    if (!jf) throw IoError("cannot write raster sidecar: " + path + ".json");
    jf << j.dump(2) << "\n";

    std::ofstream bf(path + ".bin", std::ios::binary);
    if (!bf) throw IoError("cannot write raster payload: " + path + ".bin");
    bf.write(reinterpret_cast<const char*>(r.values().data()),
             static_cast<std::streamsize>(r.values().size() * sizeof(float)));
}

Raster crop(const Raster& r, int x, int y, int w, int h) {
    if (x < 0 || y < 0 || x + w > r.width() || y + h > r.height())
        throw ValidationError("crop window outside raster bounds");
    Geotransform gt = r.geotransform();
    gt.origin_x += x * gt.cell_size;
    gt.origin_y -= y * gt.cell_size;
    Raster out(w, h, r.bands(), gt, r.nodata());
    for (int b = 0; b < r.bands(); ++b)
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                out.at(i, j, b) = r.at(y + i, x + j, b);
    return out;
}

} // namespace treecrown
