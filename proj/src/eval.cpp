#include "treecrown/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "treecrown/postfilter.hpp"

namespace treecrown {

MatchResult match_instances(const std::vector<InstanceMask>& preds,
                            const std::vector<InstanceMask>& gts,
                            double thr, OverlapMode mode) {
    struct Cand {
        double overlap;
        double iou;
        int gi, pi;
    };
    std::vector<Cand> cands;
    for (size_t gi = 0; gi < gts.size(); ++gi)
        for (size_t pi = 0; pi < preds.size(); ++pi) {
            const int64_t inter = mask_intersection(preds[pi], gts[gi]);
            if (inter == 0) continue;
            const int64_t uni = preds[pi].area() + gts[gi].area() - inter;
            const double iou = static_cast<double>(inter) / static_cast<double>(uni);
            const double overlap =
                mode == OverlapMode::Iou
                    ? iou
                    : static_cast<double>(inter) / static_cast<double>(gts[gi].area());
            if (overlap >= thr)
                cands.push_back(Cand{overlap, iou, static_cast<int>(gi),
                                     static_cast<int>(pi)});
        }
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
        if (a.overlap != b.overlap) return a.overlap > b.overlap;
        const int ga = gts[a.gi].id, gb = gts[b.gi].id;
        if (ga != gb) return ga < gb;
        return preds[a.pi].id < preds[b.pi].id;
    });

    std::vector<uint8_t> gt_used(gts.size(), 0), pred_used(preds.size(), 0);
    MatchResult m;
    for (const auto& c : cands) {
        if (gt_used[c.gi] || pred_used[c.pi]) continue;
        gt_used[c.gi] = pred_used[c.pi] = 1;
        m.pairs.push_back(MatchPair{gts[c.gi].id, preds[c.pi].id, c.iou});
    }
    for (size_t gi = 0; gi < gts.size(); ++gi)
        if (!gt_used[gi]) m.unmatched_gt.push_back(gts[gi].id);
    for (size_t pi = 0; pi < preds.size(); ++pi)
        if (!pred_used[pi]) m.unmatched_pred.push_back(preds[pi].id);
    return m;
}

void prf1(const MatchResult& m, int64_t n_gt, int64_t n_pred, double& precision,
          double& recall, double& f1) {
    const auto tp = static_cast<int64_t>(m.pairs.size());
    precision = n_pred > 0 ? static_cast<double>(tp) / n_pred : 0.0;
    recall = n_gt > 0 ? static_cast<double>(tp) / n_gt : 0.0;
    // harmonic mean written as 2TP / (2TP + FP + FN): one correctly rounded division
    f1 = n_pred + n_gt > 0
             ? 2.0 * static_cast<double>(tp) / static_cast<double>(n_pred + n_gt)
             : 0.0;
}

double mean_iou(const MatchResult& m, const std::vector<InstanceMask>& gts,
                std::vector<double>& per_tree_iou) {
    per_tree_iou.assign(gts.size(), 0.0);
    for (const auto& p : m.pairs)
        for (size_t gi = 0; gi < gts.size(); ++gi)
            if (gts[gi].id == p.gt_id) {
                per_tree_iou[gi] = p.iou;
                break;
            }
    if (per_tree_iou.empty()) return 0.0;
    double s = 0.0;
    for (double v : per_tree_iou) s += v;
    return s / static_cast<double>(per_tree_iou.size());
}

namespace {

// splitmix64 for seeding, xorshift64* as the draw stream
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Xorshift64Star {
    uint64_t state;
    explicit Xorshift64Star(uint64_t seed) : state(seed ? seed : 0x1ULL) {}
    uint64_t next() {
        state ^= state >> 12;
        state ^= state << 25;
        state ^= state >> 27;
        return state * 0x2545f4914f6cdd1dULL;
    }
    // uniform index in [0, n) via 128-bit multiply-shift
    size_t index(size_t n) {
        return static_cast<size_t>(
            (static_cast<unsigned __int128>(next()) * n) >> 64);
    }
};

double percentile(const std::vector<double>& sorted, double q) {
    if (sorted.size() == 1) return sorted[0];
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const size_t lo = static_cast<size_t>(std::floor(pos));
    const size_t hi = std::min(lo + 1, sorted.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

} // namespace

void bootstrap_ci(const std::vector<double>& per_tree_iou, int n, double level,
                  uint64_t seed, double& low, double& high) {
    if (per_tree_iou.empty()) throw ValidationError("bootstrap on empty per-tree list");
    if (n < 1) throw ValidationError("bootstrap resample count must be >= 1");
    if (level < 0.0 || level > 1.0) throw ValidationError("level must be in [0,1]");

    const size_t k = per_tree_iou.size();
    std::vector<double> means(static_cast<size_t>(n));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        Xorshift64Star rng(splitmix64(seed + static_cast<uint64_t>(i)));
        double s = 0.0;
        for (size_t j = 0; j < k; ++j) s += per_tree_iou[rng.index(k)];
        means[static_cast<size_t>(i)] = s / static_cast<double>(k);
    }
    std::sort(means.begin(), means.end());
    const double alpha = (1.0 - level) / 2.0;
    low = percentile(means, alpha);
    high = percentile(means, 1.0 - alpha);
}

namespace {

bool in_center_window(const TileSpec& t, double cx, double cy) {
    const double q = t.size / 4.0;
    return cx >= q && cx < 3 * q && cy >= q && cy < 3 * q; // tile-local
}

std::vector<InstanceMask> window_filter(const std::vector<InstanceMask>& instances,
                                        const TileSpec& t, EvalWindow w) {
    if (w == EvalWindow::Full) return instances;
    std::vector<InstanceMask> kept;
    for (const auto& m : instances)
        if (in_center_window(t, m.cx, m.cy)) kept.push_back(m);
    return kept;
}

} // namespace

EvalReport evaluate_dataset(const AnnotationSet& preds, const AnnotationSet& gts,
                            const EvalConfig& config) {
    if (preds.cell_size_m != gts.cell_size_m)
        throw ValidationError("grid mismatch: prediction and ground-truth cell sizes differ");
    if (preds.tiles.size() != gts.tiles.size())
        throw ValidationError("grid mismatch: tile counts differ");

    auto tile_key = [](const Tile& t) {
        return std::pair<int64_t, int64_t>{t.spec.y, t.spec.x};
    };
    std::vector<size_t> pi(preds.tiles.size()), gi(gts.tiles.size());
    for (size_t i = 0; i < pi.size(); ++i) pi[i] = i;
    for (size_t i = 0; i < gi.size(); ++i) gi[i] = i;
    auto by_key = [&](const std::vector<Tile>& tiles) {
        return [&tiles, tile_key](size_t a, size_t b) {
            return tile_key(tiles[a]) < tile_key(tiles[b]);
        };
    };
    std::sort(pi.begin(), pi.end(), by_key(preds.tiles));
    std::sort(gi.begin(), gi.end(), by_key(gts.tiles));

    EvalReport rep;
    rep.config = config;
    for (size_t t = 0; t < pi.size(); ++t) {
        const Tile& pt = preds.tiles[pi[t]];
        const Tile& gt = gts.tiles[gi[t]];
        if (tile_key(pt) != tile_key(gt) || pt.spec.size != gt.spec.size)
            throw ValidationError("grid mismatch: tile origins or sizes differ");

        const auto p = window_filter(pt.instances, pt.spec, config.window);
        const auto g = window_filter(gt.instances, gt.spec, config.window);
        const MatchResult m = match_instances(p, g, config.overlap_thr, config.mode);

        rep.tp += static_cast<int64_t>(m.pairs.size());
        rep.fp += static_cast<int64_t>(m.unmatched_pred.size());
        rep.fn += static_cast<int64_t>(m.unmatched_gt.size());
        std::vector<double> per_tree;
        mean_iou(m, g, per_tree);
        rep.per_tree_iou.insert(rep.per_tree_iou.end(), per_tree.begin(), per_tree.end());
    }

    rep.precision = rep.tp + rep.fp > 0
                        ? static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fp)
                        : 0.0;
    rep.recall = rep.tp + rep.fn > 0
                     ? static_cast<double>(rep.tp) / static_cast<double>(rep.tp + rep.fn)
                     : 0.0;
    rep.f1 = 2 * rep.tp + rep.fp + rep.fn > 0
                 ? 2.0 * static_cast<double>(rep.tp) /
                       static_cast<double>(2 * rep.tp + rep.fp + rep.fn)
                 : 0.0;

    if (!rep.per_tree_iou.empty()) {
        double s = 0.0;
        for (double v : rep.per_tree_iou) s += v;
        rep.miou = s / static_cast<double>(rep.per_tree_iou.size());
        bootstrap_ci(rep.per_tree_iou, config.bootstrap_n, config.level, config.seed,
                     rep.ci_low, rep.ci_high);
    }
    return rep;
}

namespace {

nlohmann::json config_json(const EvalConfig& c) {
    return nlohmann::json{
        {"overlap_thr", c.overlap_thr},
        {"mode", c.mode == OverlapMode::Iou ? "iou" : "intersection_over_gt"},
        {"window", c.window == EvalWindow::Center ? "center" : "full"},
        {"bootstrap_n", c.bootstrap_n},
        {"level", c.level},
        {"seed", c.seed}};
}

} // namespace

void write_report_json(const EvalReport& r, const std::string& path) {
    nlohmann::json j{{"tp", r.tp},
                     {"fp", r.fp},
                     {"fn", r.fn},
                     {"precision", r.precision},
                     {"recall", r.recall},
                     {"f1", r.f1},
                     {"miou", r.miou},
                     {"ci_low", r.ci_low},
                     {"ci_high", r.ci_high},
                     {"per_tree_iou", r.per_tree_iou},
                     {"config", config_json(r.config)}};
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report: " + path);
    out << j.dump(2) << "\n";
}

void write_report_csv(const EvalReport& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report CSV: " + path);
    out << "tp,fp,fn,precision,recall,f1,miou,ci_low,ci_high\n";
    out << r.tp << "," << r.fp << "," << r.fn << "," << r.precision << ","
        << r.recall << "," << r.f1 << "," << r.miou << "," << r.ci_low << ","
        << r.ci_high << "\n";
}

std::string report_markdown(const EvalReport& r, const std::string& method_name) {
    std::ostringstream os;
    os.precision(3);
    os << std::fixed;
    os << "| Method | F1 | Precision | Recall | mIoU | mIoU 95% CI |\n";
    os << "|---|---|---|---|---|---|\n";
    os << "| " << method_name << " | " << r.f1 << " | " << r.precision << " | "
       << r.recall << " | " << r.miou << " | [" << r.ci_low << ", " << r.ci_high
       << "] |\n";
    return os.str();
}

} // namespace treecrown
