#include "treecrown/enhancer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <thread>

#include <httplib.h>

namespace treecrown {

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(const unsigned char* data, size_t len) {
    std::string out;
    out.reserve((len + 2) / 3 * 4);
    for (size_t i = 0; i < len; i += 3) {
        uint32_t v = data[i] << 16;
        if (i + 1 < len) v |= data[i + 1] << 8;
        if (i + 2 < len) v |= data[i + 2];
        out.push_back(kB64[(v >> 18) & 63]);
        out.push_back(kB64[(v >> 12) & 63]);
        out.push_back(i + 1 < len ? kB64[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < len ? kB64[v & 63] : '=');
    }
    return out;
}

std::vector<unsigned char> base64_decode(const std::string& s) {
    static int8_t lut[256];
    static bool init = [] {
        std::fill(std::begin(lut), std::end(lut), int8_t{-1});
        for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kB64[i])] = static_cast<int8_t>(i);
        return true;
    }();
    (void)init;
    std::vector<unsigned char> out;
    uint32_t buf = 0;
    int bits = 0;
    for (char ch : s) {
        if (ch == '=' || ch == '\n' || ch == '\r') continue;
        const int8_t v = lut[static_cast<unsigned char>(ch)];
        if (v < 0) throw ValidationError("invalid base64 character");
        buf = (buf << 6) | static_cast<uint32_t>(v);
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            out.push_back(static_cast<unsigned char>((buf >> bits) & 0xff));
        }
    }
    return out;
}

namespace {

nlohmann::json raster_to_json(const Raster& r) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(r.values().data());
    return nlohmann::json{
        {"width", r.width()},
        {"height", r.height()},
        {"bands", r.bands()},
        {"dtype", "f32"},
        {"nodata", r.nodata()},
        {"origin_x", r.geotransform().origin_x},
        {"origin_y", r.geotransform().origin_y},
        {"cell_size", r.geotransform().cell_size},
        {"data_base64", base64_encode(bytes, r.values().size() * sizeof(float))}};
}

Raster raster_from_json(const nlohmann::json& j) {
    Raster r(j.at("width").get<int>(), j.at("height").get<int>(),
             j.at("bands").get<int>(),
             Geotransform{j.at("origin_x").get<double>(), j.at("origin_y").get<double>(),
                          j.at("cell_size").get<double>()},
             j.at("nodata").get<float>());
    const auto bytes = base64_decode(j.at("data_base64").get<std::string>());
    if (bytes.size() != r.values().size() * sizeof(float))
        throw ValidationError("inlined raster payload size mismatch");
    std::memcpy(r.values().data(), bytes.data(), bytes.size());
    return r;
}

} // namespace

nlohmann::json request_to_json(const SegmenterRequest& req) {
    nlohmann::json boxes = nlohmann::json::array();
    for (const auto& b : req.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
    return nlohmann::json{{"request_id", req.request_id},
                          {"image", raster_to_json(req.image)},
                          {"boxes", boxes}};
}

SegmenterRequest request_from_json(const nlohmann::json& j) {
    SegmenterRequest req;
    req.request_id = j.at("request_id").get<int64_t>();
    req.image = raster_from_json(j.at("image"));
    for (const auto& b : j.at("boxes")) {
        if (b.size() != 4) throw ValidationError("prompt box must have 4 elements");
        req.boxes.push_back(PromptBox{b[0].get<int>(), b[1].get<int>(),
                                      b[2].get<int>(), b[3].get<int>()});
    }
    return req;
}

nlohmann::json response_to_json(const SegmenterResponse& resp) {
    nlohmann::json results = nlohmann::json::array();
    for (const auto& r : resp.results) {
        if (r.failed) {
            results.push_back({{"failed", true}});
        } else {
            results.push_back({{"bbox", {r.x, r.y, r.w, r.h}},
                               {"rle", r.rle},
                               {"confidence", r.confidence}});
        }
    }
    return nlohmann::json{{"request_id", resp.request_id}, {"results", results}};
}

SegmenterResponse response_from_json(const nlohmann::json& j) {
    SegmenterResponse resp;
    resp.request_id = j.at("request_id").get<int64_t>();
    for (const auto& rj : j.at("results")) {
        BoxResult r;
        if (rj.contains("failed") && rj["failed"].get<bool>()) {
            r.failed = true;
        } else {
            const auto& b = rj.at("bbox");
            r.x = b[0].get<int>();
            r.y = b[1].get<int>();
            r.w = b[2].get<int>();
            r.h = b[3].get<int>();
            r.rle = rj.at("rle").get<std::vector<int64_t>>();
            r.confidence = rj.at("confidence").get<double>();
        }
        resp.results.push_back(std::move(r));
    }
    return resp;
}

SegmenterResponse mock_segmenter(const SegmenterRequest& req, const Raster& guide,
                                 double threshold) {
    SegmenterResponse resp;
    resp.request_id = req.request_id;

    for (const auto& box : req.boxes) {
        BoxResult res;
        const int x0 = std::max(0, box.x), y0 = std::max(0, box.y);
        const int x1 = std::min(guide.width(), box.x + box.w);
        const int y1 = std::min(guide.height(), box.y + box.h);
        if (x0 >= x1 || y0 >= y1) {
            res.failed = true;
            resp.results.push_back(std::move(res));
            continue;
        }

        auto above = [&](int r, int c) {
            const float v = guide.at(r, c);
            return !guide.is_nodata(v) && v >= threshold;
        };

        int sr = y0 + (y1 - y0) / 2;
        int sc = x0 + (x1 - x0) / 2;
        if (!above(sr, sc)) {
            // nearest above-threshold pixel inside the box; ties by row, then col
            double best = std::numeric_limits<double>::infinity();
            int br = -1, bc = -1;
            for (int r = y0; r < y1; ++r)
                for (int c = x0; c < x1; ++c) {
                    if (!above(r, c)) continue;
                    const double d = static_cast<double>(r - sr) * (r - sr) +
                                     static_cast<double>(c - sc) * (c - sc);
                    if (d < best) {
                        best = d;
                        br = r;
                        bc = c;
                    }
                }
            if (br < 0) {
                res.failed = true;
                resp.results.push_back(std::move(res));
                continue;
            }
            sr = br;
            sc = bc;
        }

        const int bw = x1 - x0, bh = y1 - y0;
        std::vector<uint8_t> bits(static_cast<size_t>(bw) * bh, 0);
        std::deque<PixelRC> frontier{{sr, sc}};
        bits[static_cast<size_t>(sr - y0) * bw + (sc - x0)] = 1;
        double sum = guide.at(sr, sc);
        int64_t n = 1;
        while (!frontier.empty()) {
            const PixelRC p = frontier.front();
            frontier.pop_front();
            constexpr int DR[4] = {-1, 1, 0, 0};
            constexpr int DC[4] = {0, 0, -1, 1};
            for (int k = 0; k < 4; ++k) {
                const int rr = p.r + DR[k], cc = p.c + DC[k];
                if (rr < y0 || rr >= y1 || cc < x0 || cc >= x1) continue;
                auto& b = bits[static_cast<size_t>(rr - y0) * bw + (cc - x0)];
                if (b || !above(rr, cc)) continue;
                b = 1;
                sum += guide.at(rr, cc);
                ++n;
                frontier.push_back(PixelRC{rr, cc});
            }
        }

        res.x = x0;
        res.y = y0;
        res.w = bw;
        res.h = bh;
        res.rle = rle_encode(bits);
        res.confidence = std::clamp(sum / static_cast<double>(n), 0.0, 1.0);
        resp.results.push_back(std::move(res));
    }
    return resp;
}

nlohmann::json handle_segment_request(const nlohmann::json& request_json,
                                      double threshold) {
    const SegmenterRequest req = request_from_json(request_json);
    if (req.image.bands() == 1)
        return response_to_json(mock_segmenter(req, req.image, threshold));
    Raster guide(req.image.width(), req.image.height(), 1, req.image.geotransform(),
                 req.image.nodata());
    for (int r = 0; r < req.image.height(); ++r)
        for (int c = 0; c < req.image.width(); ++c)
            guide.at(r, c) = req.image.at(r, c, 0);
    return response_to_json(mock_segmenter(req, guide, threshold));
}

SegmenterResponse MockSegmenterClient::segment(const SegmenterRequest& req) {
    return response_from_json(handle_segment_request(request_to_json(req), threshold_));
}

HttpSegmenterClient::HttpSegmenterClient(std::string host, int port, int max_attempts)
    : host_(std::move(host)), port_(port), max_attempts_(max_attempts) {}

SegmenterResponse HttpSegmenterClient::segment(const SegmenterRequest& req) {
    const std::string body = request_to_json(req).dump();
    std::string last_error;
    for (int attempt = 0; attempt < max_attempts_; ++attempt) {
        httplib::Client cli(host_, port_);
        cli.set_read_timeout(60, 0);
        auto res = cli.Post("/segment", body, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "segmenter returned HTTP " + std::to_string(res->status);
            continue;
        }
        try {
            auto resp = response_from_json(nlohmann::json::parse(res->body));
            if (resp.request_id != req.request_id)
                throw ValidationError("response id mismatch");
            if (resp.results.size() != req.boxes.size())
                throw ValidationError("response does not align with request boxes");
            return resp;
        } catch (const nlohmann::json::exception& e) {
            throw SegmenterError(std::string("malformed segmenter response: ") + e.what());
        }
    }
    throw SegmenterError("segmenter unreachable after " + std::to_string(max_attempts_) +
                         " attempts: " + last_error);
}

FileSegmenterClient::FileSegmenterClient(std::string exchange_dir, double timeout_s)
    : dir_(std::move(exchange_dir)), timeout_s_(timeout_s) {}

SegmenterResponse FileSegmenterClient::segment(const SegmenterRequest& req) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir_) / "requests");
    fs::create_directories(fs::path(dir_) / "responses");
    const std::string name = std::to_string(req.request_id) + ".json";
    const fs::path req_path = fs::path(dir_) / "requests" / name;
    const fs::path resp_path = fs::path(dir_) / "responses" / name;
    {
        const fs::path tmp = req_path.string() + ".tmp";
        std::ofstream out(tmp);
        out << request_to_json(req).dump();
        out.close();
        fs::rename(tmp, req_path);
    }
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::duration<double>(timeout_s_);
    while (std::chrono::steady_clock::now() < deadline) {
        if (fs::exists(resp_path)) {
            std::ifstream in(resp_path);
            nlohmann::json j;
            try {
                in >> j;
                auto resp = response_from_json(j);
                if (resp.results.size() != req.boxes.size())
                    throw ValidationError("response does not align with request boxes");
                return resp;
            } catch (const nlohmann::json::exception& e) {
                throw SegmenterError(std::string("malformed segmenter response: ") + e.what());
            }
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(50));
    }
    throw SegmenterError("timed out waiting for " + resp_path.string());
}

Tile enhance_tile(const Tile& tile, const Raster& tile_image, SegmenterClient& client,
                  int64_t request_id) {
    SegmenterRequest req;
    req.request_id = request_id;
    req.image = tile_image;
    for (const auto& m : tile.instances) {
        PromptBox b{m.x, m.y, std::max(1, m.w), std::max(1, m.h)};
        // clip to tile bounds
        b.x = std::clamp(b.x, 0, tile.spec.size - 1);
        b.y = std::clamp(b.y, 0, tile.spec.size - 1);
        b.w = std::min(b.w, tile.spec.size - b.x);
        b.h = std::min(b.h, tile.spec.size - b.y);
        req.boxes.push_back(b);
    }

    const SegmenterResponse resp = client.segment(req);
    if (resp.results.size() != tile.instances.size())
        throw SegmenterError("segmenter response does not align with request boxes");

    Tile out;
    out.spec = tile.spec;
    for (size_t i = 0; i < tile.instances.size(); ++i) {
        const InstanceMask& coarse = tile.instances[i];
        const BoxResult& r = resp.results[i];
        if (r.failed || r.rle.empty()) {
            InstanceMask kept = coarse;
            kept.fallback = true;
            out.instances.push_back(std::move(kept));
            continue;
        }
        auto bits = rle_decode(r.rle, r.w, r.h);

        // clip the returned mask to the prompt box
        const PromptBox& pb = req.boxes[i];
        bool any = false;
        for (int rr = 0; rr < r.h; ++rr)
            for (int cc = 0; cc < r.w; ++cc) {
                auto& b = bits[static_cast<size_t>(rr) * r.w + cc];
                const int gr = r.y + rr, gc = r.x + cc;
                if (gr < pb.y || gr >= pb.y + pb.h || gc < pb.x || gc >= pb.x + pb.w)
                    b = 0;
                any |= b != 0;
            }
        if (!any) {
            InstanceMask kept = coarse;
            kept.fallback = true;
            out.instances.push_back(std::move(kept));
            continue;
        }
        InstanceMask enhanced = make_instance(coarse.id, r.x, r.y, r.w, r.h, bits,
                                              r.confidence);
        out.instances.push_back(std::move(enhanced));
    }
    return out;
}

AnnotationSet enhance_set(const AnnotationSet& set, const Raster& image_source,
                          SegmenterClient& client) {
    AnnotationSet out;
    out.cell_size_m = set.cell_size_m;
    out.dropped_count = set.dropped_count;
    out.tiles.resize(set.tiles.size());
    for (size_t i = 0; i < set.tiles.size(); ++i) {
        const Tile& t = set.tiles[i];
        const int x = static_cast<int>(t.spec.x), y = static_cast<int>(t.spec.y);
        const int w = std::min(t.spec.size, image_source.width() - x);
        const int h = std::min(t.spec.size, image_source.height() - y);
        const Raster tile_img = crop(image_source, x, y, w, h);
        out.tiles[i] = enhance_tile(t, tile_img, client, static_cast<int64_t>(i + 1));
    }
    return out;
}

} // namespace treecrown
