// Batch driver for the tree-crown pseudo-labelling pipeline. Each stage is a
// subcommand; `run-all` chains them on a config file.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "treecrown/chm.hpp"
#include "treecrown/delineate.hpp"
#include "treecrown/enhancer.hpp"
#include "treecrown/eval.hpp"
#include "treecrown/labelset.hpp"
#include "treecrown/pointcloud.hpp"
#include "treecrown/postfilter.hpp"
#include "treecrown/raster.hpp"
#include "treecrown/spectral.hpp"
#include "treecrown/synth.hpp"

using namespace treecrown;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitSegmenter = 3;
constexpr int kExitInternal = 4;

std::set<int> parse_channels(const std::string& s) {
    std::set<int> out;
    std::string cur;
    for (char c : s + ",") {
        if (c == ',') {
            if (!cur.empty()) out.insert(std::stoi(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    return out;
}


// config echoes carry file basenames so outputs do not depend on where the
// output directory lives
std::string base_name(const std::string& path) {
    return std::filesystem::path(path).filename().string();
}

struct ChmParams {
    std::string points, out;
    double cell = 0.5;
    std::string channels = "1,2";
    double fallback_grid = 1.0;
    double fallback_tol = 0.2;
};

void run_chm(const ChmParams& p) {
    PointCloud pc = read_point_cloud(p.points);
    pc = classify_ground_fallback(pc, p.fallback_grid, p.fallback_tol);
    const Raster dtm = build_dtm(pc, p.cell);
    pc = normalize_heights(pc, dtm);
    Raster chm = rasterize_chm(pc, p.cell, parse_channels(p.channels));
    chm = fill_chm_gaps(chm);
    const json cfg{{"points", base_name(p.points)},
                   {"cell", p.cell},
                   {"channels", p.channels},
                   {"fallback_grid", p.fallback_grid},
                   {"fallback_tol", p.fallback_tol}};
    write_raster(chm, p.out, cfg.dump());
    std::cout << "chm: " << chm.width() << "x" << chm.height() << " cells -> "
              << p.out << "\n";
}

struct DelineateParams {
    std::string chm, out;
    double sigma = 1.0, min_height = 2.0, win_a = 1.0, win_b = 0.05;
};

void run_delineate(const DelineateParams& p) {
    const Raster chm = read_raster(p.chm);
    const Raster smoothed = gaussian_smooth(chm, p.sigma);
    const auto tops = local_maxima(smoothed, p.min_height, p.win_a, p.win_b);
    const SegmentMap sm = marker_watershed(smoothed, tops, p.min_height);
    auto instances = segments_to_instances(sm);

    AnnotationSet set = single_tile_set(std::move(instances), sm.width, sm.height,
                                        chm.geotransform().cell_size);
    set.origin_x = chm.geotransform().origin_x;
    set.origin_y = chm.geotransform().origin_y;
    const json cfg{{"chm", base_name(p.chm)},
                   {"sigma", p.sigma},
                   {"min_height", p.min_height},
                   {"win_a", p.win_a},
                   {"win_b", p.win_b}};
    write_annotations(set, p.out, cfg.dump());
    std::cout << "delineate: " << tops.size() << " treetops -> " << p.out << "\n";
}

struct NdviParams {
    std::string ortho, bands, annotations, out, hist;
    double threshold = 0.2;
};

void run_ndvi_filter(const NdviParams& p) {
    const Raster ortho = read_raster(p.ortho);
    const BandSet bands = read_band_set(p.bands);
    const Raster ndvi = compute_ndvi(ortho, bands);
    AnnotationSet set = read_annotations(p.annotations);

    const json cfg{{"ortho", base_name(p.ortho)},
                   {"bands", base_name(p.bands)},
                   {"annotations", base_name(p.annotations)},
                   {"threshold", p.threshold}};

    int64_t before = 0, after = 0;
    for (auto& tile : set.tiles) {
        // segment grid = set grid shifted by tile origin
        Geotransform seg_gt = set.geotransform();
        seg_gt.origin_x += tile.spec.x * seg_gt.cell_size;
        seg_gt.origin_y -= tile.spec.y * seg_gt.cell_size;
        const auto means = segment_mean_index(tile.instances, seg_gt, ndvi);
        if (!p.hist.empty()) write_mean_histogram(means, p.hist);
        before += static_cast<int64_t>(tile.instances.size());
        tile.instances = filter_by_ndvi(tile.instances, means, p.threshold);
        after += static_cast<int64_t>(tile.instances.size());
    }
    write_annotations(set, p.out, cfg.dump());
    std::cout << "ndvi-filter: kept " << after << "/" << before << " segments -> "
              << p.out << "\n";
}

struct TileParams {
    std::string annotations, ortho, out;
    int size = 1024, stride = 512;
};

void run_tile(const TileParams& p) {
    const AnnotationSet set = read_annotations(p.annotations);
    const Raster ortho = read_raster(p.ortho);

    // collect instances in the set grid, upscale into ortho pixels
    std::vector<InstanceMask> all;
    for (const auto& t : set.tiles)
        for (const auto& m : t.instances) {
            InstanceMask g = m;
            g.x += static_cast<int>(t.spec.x);
            g.y += static_cast<int>(t.spec.y);
            g.cx += static_cast<double>(t.spec.x);
            g.cy += static_cast<double>(t.spec.y);
            all.push_back(std::move(g));
        }
    const auto upscaled = upscale_instances(all, set.geotransform(),
                                            ortho.geotransform(), ortho.width(),
                                            ortho.height());
    const auto tiles = make_tiles(ortho.width(), ortho.height(), p.size, p.stride);
    AnnotationSet tiled = assign_to_tiles(upscaled, tiles,
                                          ortho.geotransform().cell_size);
    tiled.origin_x = ortho.geotransform().origin_x;
    tiled.origin_y = ortho.geotransform().origin_y;
    const json cfg{{"annotations", base_name(p.annotations)},
                   {"ortho", base_name(p.ortho)},
                   {"size", p.size},
                   {"stride", p.stride}};
    write_annotations(tiled, p.out, cfg.dump());
    int64_t n = 0;
    for (const auto& t : tiled.tiles) n += static_cast<int64_t>(t.instances.size());
    std::cout << "tile: " << tiled.tiles.size() << " tiles, " << n
              << " instances, " << tiled.dropped_count << " dropped -> " << p.out
              << "\n";
}

struct EnhanceParams {
    std::string tiles, ortho, endpoint, mock_guide, out;
    double mock_threshold = 0.2;
};

void run_enhance(const EnhanceParams& p) {
    const AnnotationSet set = read_annotations(p.tiles);
    std::unique_ptr<SegmenterClient> client;
    std::string image_path;
    if (!p.endpoint.empty()) {
        std::string host = p.endpoint;
        if (host.rfind("http://", 0) == 0) host = host.substr(7);
        const auto colon = host.rfind(':');
        if (colon == std::string::npos)
            throw ValidationError("endpoint must be host:port");
        const int port = std::stoi(host.substr(colon + 1));
        client = std::make_unique<HttpSegmenterClient>(host.substr(0, colon), port);
        image_path = p.ortho;
    } else if (!p.mock_guide.empty()) {
        client = std::make_unique<MockSegmenterClient>(p.mock_threshold);
        image_path = p.mock_guide;
    } else {
        throw ValidationError("enhance needs --endpoint or --mock-guide");
    }
    const Raster image = read_raster(image_path);

    AnnotationSet out = enhance_set(set, image, *client);
    int64_t fallbacks = 0;
    for (const auto& t : out.tiles)
        for (const auto& m : t.instances) fallbacks += m.fallback ? 1 : 0;
    out.origin_x = set.origin_x;
    out.origin_y = set.origin_y;
    const json cfg{{"tiles", base_name(p.tiles)},
                   {"ortho", base_name(p.ortho)},
                   {"endpoint", p.endpoint},
                   {"mock_guide", base_name(p.mock_guide)},
                   {"mock_threshold", p.mock_threshold}};
    write_annotations(out, p.out, cfg.dump());
    std::cout << "enhance: " << fallbacks << " fallbacks -> " << p.out << "\n";
}

struct PostfilterParams {
    std::string annotations, out;
    double score = 0.3, nms_iou = 0.3, ios = 0.8;
    bool box_nms = false;
};

void run_postfilter(const PostfilterParams& p) {
    AnnotationSet set = read_annotations(p.annotations);
    for (auto& t : set.tiles) {
        t.instances = threshold_filter(t.instances, p.score);
        t.instances = nms(t.instances, p.nms_iou, p.box_nms);
        t.instances = containment_filter(t.instances, p.ios);
    }
    const json cfg{{"annotations", base_name(p.annotations)},
                   {"score", p.score},
                   {"nms_iou", p.nms_iou},
                   {"ios", p.ios},
                   {"box_nms", p.box_nms}};
    write_annotations(set, p.out, cfg.dump());
    std::cout << "postfilter -> " << p.out << "\n";
}

struct EvalParams {
    std::string pred, gt, out, csv, markdown;
    double overlap = 0.5, level = 0.95;
    std::string window = "center", mode = "iou";
    int bootstrap = 1000;
    uint64_t seed = 42;
};

void run_eval(const EvalParams& p) {
    const AnnotationSet pred = read_annotations(p.pred);
    const AnnotationSet gt = read_annotations(p.gt);
    EvalConfig cfg;
    cfg.overlap_thr = p.overlap;
    cfg.mode = p.mode == "iou" ? OverlapMode::Iou : OverlapMode::IntersectionOverGt;
    cfg.window = p.window == "full" ? EvalWindow::Full : EvalWindow::Center;
    cfg.bootstrap_n = p.bootstrap;
    cfg.level = p.level;
    cfg.seed = p.seed;
    const EvalReport rep = evaluate_dataset(pred, gt, cfg);
    write_report_json(rep, p.out);
    if (!p.csv.empty()) write_report_csv(rep, p.csv);
    if (!p.markdown.empty()) {
        std::ofstream md(p.markdown);
        md << report_markdown(rep, p.pred);
    }
    std::cout << "eval: P=" << rep.precision << " R=" << rep.recall
              << " F1=" << rep.f1 << " mIoU=" << rep.miou << " CI=["
              << rep.ci_low << ", " << rep.ci_high << "] -> " << p.out << "\n";
}

struct RunAllParams {
    std::string config, out_dir;
};

void run_all(const RunAllParams& p) {
    std::ifstream cf(p.config);
    if (!cf) throw IoError("cannot open config: " + p.config);
    json cfg;
    cf >> cfg;
    namespace fs = std::filesystem;
    fs::create_directories(p.out_dir);
    const std::string d = p.out_dir;

    ChmParams chm;
    chm.points = cfg.at("points").get<std::string>();
    chm.cell = cfg.value("cell", 0.5);
    {
        std::string ch;
        for (int c : cfg.value("channels", std::vector<int>{1, 2}))
            ch += (ch.empty() ? "" : ",") + std::to_string(c);
        chm.channels = ch;
    }
    chm.out = d + "/chm.rasterbin";
    run_chm(chm);

    DelineateParams del;
    del.chm = chm.out;
    del.sigma = cfg.value("sigma", 1.0);
    del.min_height = cfg.value("min_height", 2.0);
    del.win_a = cfg.value("win_a", 1.0);
    del.win_b = cfg.value("win_b", 0.05);
    del.out = d + "/coarse.json";
    run_delineate(del);

    NdviParams ndvi;
    ndvi.ortho = cfg.at("ortho").get<std::string>();
    ndvi.bands = cfg.at("bands").get<std::string>();
    ndvi.annotations = del.out;
    ndvi.threshold = cfg.value("ndvi_threshold", 0.2);
    ndvi.hist = d + "/ndvi_hist.csv";
    ndvi.out = d + "/filtered.json";
    run_ndvi_filter(ndvi);

    TileParams tile;
    tile.annotations = ndvi.out;
    tile.ortho = ndvi.ortho;
    tile.size = cfg.value("tile_size", 1024);
    tile.stride = cfg.value("stride", 512);
    tile.out = d + "/tiled.json";
    run_tile(tile);

    EnhanceParams enh;
    enh.tiles = tile.out;
    enh.ortho = ndvi.ortho;
    enh.endpoint = cfg.value("endpoint", std::string{});
    enh.mock_guide = cfg.value("mock_guide", std::string{});
    enh.mock_threshold = cfg.value("mock_threshold", 0.2);
    enh.out = d + "/pseudo.json";
    if (enh.endpoint.empty() && enh.mock_guide.empty()) {
        // derive the guide from the ortho
        const Raster ortho = read_raster(ndvi.ortho);
        const BandSet bands = read_band_set(ndvi.bands);
        write_raster(compute_ndvi(ortho, bands), d + "/ndvi.rasterbin");
        enh.mock_guide = d + "/ndvi.rasterbin";
    }
    run_enhance(enh);

    PostfilterParams post;
    post.annotations = enh.out;
    post.score = cfg.value("score", 0.3);
    post.nms_iou = cfg.value("nms_iou", 0.3);
    post.ios = cfg.value("ios", 0.8);
    post.out = d + "/final.json";
    run_postfilter(post);

    if (cfg.contains("gt")) {
        EvalParams ev;
        ev.pred = post.out;
        ev.gt = cfg.at("gt").get<std::string>();
        ev.overlap = cfg.value("overlap", 0.5);
        ev.window = cfg.value("window", std::string("center"));
        ev.bootstrap = cfg.value("bootstrap", 1000);
        ev.level = cfg.value("level", 0.95);
        ev.seed = cfg.value("seed", 42ULL);
        ev.out = d + "/report.json";
        ev.csv = d + "/report.csv";
        run_eval(ev);
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"tree-crown pseudo-label pipeline"};
    app.require_subcommand(1);

    int jobs = 0;
    app.add_option("--jobs", jobs, "worker thread count (0 = hardware default)");

    ChmParams chm;
    auto* chm_cmd = app.add_subcommand("chm", "build the canopy height model");
    chm_cmd->add_option("--points", chm.points, "point cloud CSV")->required();
    chm_cmd->add_option("--cell", chm.cell, "cell size, meters");
    chm_cmd->add_option("--channels", chm.channels, "lidar channels, comma-separated");
    chm_cmd->add_option("--fallback-grid", chm.fallback_grid, "ground fallback grid, meters");
    chm_cmd->add_option("--fallback-tol", chm.fallback_tol, "ground fallback tolerance, meters");
    chm_cmd->add_option("--out", chm.out, "output rasterbin stem")->required();

    DelineateParams del;
    auto* del_cmd = app.add_subcommand("delineate", "treetops and watershed crowns");
    del_cmd->add_option("--chm", del.chm, "CHM rasterbin stem")->required();
    del_cmd->add_option("--sigma", del.sigma, "Gaussian sigma, cells");
    del_cmd->add_option("--min-height", del.min_height, "minimum tree height, meters");
    del_cmd->add_option("--win-a", del.win_a, "window intercept, meters");
    del_cmd->add_option("--win-b", del.win_b, "window slope per meter of height");
    del_cmd->add_option("--out", del.out, "output annotation JSON")->required();

    NdviParams ndvi;
    auto* ndvi_cmd = app.add_subcommand("ndvi-filter", "drop low-NDVI segments");
    ndvi_cmd->add_option("--ortho", ndvi.ortho, "orthophoto rasterbin stem")->required();
    ndvi_cmd->add_option("--bands", ndvi.bands, "band config JSON")->required();
    ndvi_cmd->add_option("--annotations", ndvi.annotations, "input annotations")->required();
    ndvi_cmd->add_option("--threshold", ndvi.threshold, "NDVI threshold");
    ndvi_cmd->add_option("--hist", ndvi.hist, "per-segment mean CSV");
    ndvi_cmd->add_option("--out", ndvi.out, "output annotation JSON")->required();

    TileParams tile;
    auto* tile_cmd = app.add_subcommand("tile", "upscale to image pixels and tile");
    tile_cmd->add_option("--annotations", tile.annotations, "input annotations")->required();
    tile_cmd->add_option("--ortho", tile.ortho, "orthophoto rasterbin stem")->required();
    tile_cmd->add_option("--size", tile.size, "tile size, pixels");
    tile_cmd->add_option("--stride", tile.stride, "tile stride, pixels");
    tile_cmd->add_option("--out", tile.out, "output annotation JSON")->required();

    EnhanceParams enh;
    auto* enh_cmd = app.add_subcommand("enhance", "segmenter-based mask enhancement");
    enh_cmd->add_option("--tiles", enh.tiles, "tiled annotations")->required();
    enh_cmd->add_option("--ortho", enh.ortho, "orthophoto rasterbin stem");
    enh_cmd->add_option("--endpoint", enh.endpoint, "segmenter endpoint host:port");
    enh_cmd->add_option("--mock-guide", enh.mock_guide, "guide raster for the mock");
    enh_cmd->add_option("--mock-threshold", enh.mock_threshold, "mock flood threshold");
    enh_cmd->add_option("--out", enh.out, "output annotation JSON")->required();

    PostfilterParams post;
    auto* post_cmd = app.add_subcommand("postfilter", "score gate, NMS, containment");
    post_cmd->add_option("--annotations", post.annotations, "input annotations")->required();
    post_cmd->add_option("--score", post.score, "score threshold");
    post_cmd->add_option("--nms-iou", post.nms_iou, "NMS IoU threshold");
    post_cmd->add_option("--ios", post.ios, "containment threshold");
    post_cmd->add_flag("--box-nms", post.box_nms, "use box IoU in NMS");
    post_cmd->add_option("--out", post.out, "output annotation JSON")->required();

    EvalParams ev;
    auto* eval_cmd = app.add_subcommand("eval", "match predictions against ground truth");
    eval_cmd->add_option("--pred", ev.pred, "prediction annotations")->required();
    eval_cmd->add_option("--gt", ev.gt, "ground-truth annotations")->required();
    eval_cmd->add_option("--overlap", ev.overlap, "matching overlap threshold");
    eval_cmd->add_option("--mode", ev.mode, "iou | intersection-over-gt")
        ->check(CLI::IsMember({"iou", "intersection-over-gt"}));
    eval_cmd->add_option("--window", ev.window, "center | full")
        ->check(CLI::IsMember({"center", "full"}));
    eval_cmd->add_option("--bootstrap", ev.bootstrap, "bootstrap resamples");
    eval_cmd->add_option("--level", ev.level, "confidence level");
    eval_cmd->add_option("--seed", ev.seed, "bootstrap seed");
    eval_cmd->add_option("--csv", ev.csv, "also write CSV report");
    eval_cmd->add_option("--markdown", ev.markdown, "also write markdown table");
    eval_cmd->add_option("--out", ev.out, "report JSON")->required();

    RunAllParams ra;
    auto* ra_cmd = app.add_subcommand("run-all", "run the whole pipeline");
    ra_cmd->add_option("--config", ra.config, "pipeline config JSON")->required();
    ra_cmd->add_option("--out-dir", ra.out_dir, "output directory")->required();

    std::string synth_dir;
    uint64_t synth_seed = 7;
    auto* synth_cmd = app.add_subcommand("synth", "generate the bundled synthetic scene");
    synth_cmd->add_option("--out-dir", synth_dir, "output directory")->required();
    synth_cmd->add_option("--seed", synth_seed, "scene seed");

    for (auto* sub : {chm_cmd, del_cmd, ndvi_cmd, tile_cmd, enh_cmd, post_cmd,
                      eval_cmd, ra_cmd, synth_cmd})
        sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

#ifdef _OPENMP
    if (jobs > 0) omp_set_num_threads(jobs);
#endif

    try {
        if (chm_cmd->parsed()) run_chm(chm);
        else if (del_cmd->parsed()) run_delineate(del);
        else if (ndvi_cmd->parsed()) run_ndvi_filter(ndvi);
        else if (tile_cmd->parsed()) run_tile(tile);
        else if (enh_cmd->parsed()) run_enhance(enh);
        else if (post_cmd->parsed()) run_postfilter(post);
        else if (eval_cmd->parsed()) run_eval(ev);
        else if (ra_cmd->parsed()) run_all(ra);
        else if (synth_cmd->parsed()) treecrown::synth::write_scene(synth_dir, synth_seed);
    } catch (const SegmenterError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSegmenter;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitValidation;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
    return kExitOk;
}
