#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "treecrown/labelset.hpp"
#include "treecrown/raster.hpp"

namespace treecrown {

struct PromptBox {
    int x = 0, y = 0, w = 1, h = 1; // tile-local pixels
};

struct SegmenterRequest {
    int64_t request_id = 0;
    Raster image; // tile crop, inlined as base64 rasterbin on the wire
    std::vector<PromptBox> boxes;
};

struct BoxResult {
    bool failed = false;
    int x = 0, y = 0, w = 0, h = 0; // mask bbox, tile-local, inside the prompt box
    std::vector<int64_t> rle;
    double confidence = 0.0;
};

struct SegmenterResponse {
    int64_t request_id = 0;
    std::vector<BoxResult> results; // 1:1 with request boxes, order preserved
};

nlohmann::json request_to_json(const SegmenterRequest& req);
SegmenterRequest request_from_json(const nlohmann::json& j);
nlohmann::json response_to_json(const SegmenterResponse& resp);
SegmenterResponse response_from_json(const nlohmann::json& j);

std::string base64_encode(const unsigned char* data, size_t len);
std::vector<unsigned char> base64_decode(const std::string& s);

// Deterministic stand-in for a box-prompted segmenter: per box, flood-fill
// the 4-connected region of guide pixels >= threshold from the box center
// (re-seeded at the nearest above-threshold pixel if the center is below),
// clipped to the box. Confidence is the region mean clamped to [0,1].
SegmenterResponse mock_segmenter(const SegmenterRequest& req, const Raster& guide,
                                 double threshold);

// Wire-level mock handler: floods band 0 of the inlined request image.
nlohmann::json handle_segment_request(const nlohmann::json& request_json,
                                      double threshold);

class SegmenterClient {
public:
    virtual ~SegmenterClient() = default;
    virtual SegmenterResponse segment(const SegmenterRequest& req) = 0;
};

// In-process mock flooding band 0 of the request image.
class MockSegmenterClient : public SegmenterClient {
public:
    explicit MockSegmenterClient(double threshold) : threshold_(threshold) {}
    SegmenterResponse segment(const SegmenterRequest& req) override;

private:
    double threshold_;
};

// HTTP POST /segment against an external endpoint ("host:port" or URL).
class HttpSegmenterClient : public SegmenterClient {
public:
    HttpSegmenterClient(std::string host, int port, int max_attempts = 3);
    SegmenterResponse segment(const SegmenterRequest& req) override;

private:
    std::string host_;
    int port_;
    int max_attempts_;
};

// Writes requests/<id>.json and polls responses/<id>.json.
class FileSegmenterClient : public SegmenterClient {
public:
    explicit FileSegmenterClient(std::string exchange_dir, double timeout_s = 60.0);
    SegmenterResponse segment(const SegmenterRequest& req) override;

private:
    std::string dir_;
    double timeout_s_;
};

struct EnhanceOptions {
    int64_t first_request_id = 1;
};

// Replaces each coarse mask with the segmenter's mask for its bbox. Failed
// or empty results keep the coarse mask and set fallback = true. Ids are
// preserved, centroids and bboxes recomputed, masks clipped to prompt boxes.
Tile enhance_tile(const Tile& tile, const Raster& tile_image, SegmenterClient& client,
                  int64_t request_id);

// Enhances every tile of the set; tile image = crop of `image_source`.
AnnotationSet enhance_set(const AnnotationSet& set, const Raster& image_source,
                          SegmenterClient& client);

} // namespace treecrown
