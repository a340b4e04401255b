#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "treecrown/labelset.hpp"

namespace treecrown {

enum class OverlapMode { Iou, IntersectionOverGt };
enum class EvalWindow { Center, Full };

struct MatchPair {
    int gt_id = 0;
    int pred_id = 0;
    double iou = 0;
};

struct MatchResult {
    std::vector<MatchPair> pairs;
    std::vector<int> unmatched_gt;
    std::vector<int> unmatched_pred;
};

struct EvalConfig {
    double overlap_thr = 0.5;
    OverlapMode mode = OverlapMode::Iou;
    EvalWindow window = EvalWindow::Center;
    int bootstrap_n = 1000;
    double level = 0.95;
    uint64_t seed = 42;
};

struct EvalReport {
    int64_t tp = 0, fp = 0, fn = 0;
    double precision = 0, recall = 0, f1 = 0, miou = 0;
    double ci_low = 0, ci_high = 0;
    std::vector<double> per_tree_iou; // aligned with gt order
    EvalConfig config;
};

// Greedy one-to-one matching of pairs with overlap >= thr, taken in
// descending overlap order (ties: smaller gt id, then pred id). The reported
// pair statistic is always IoU, also in intersection-over-gt mode.
MatchResult match_instances(const std::vector<InstanceMask>& preds,
                            const std::vector<InstanceMask>& gts,
                            double thr = 0.5, OverlapMode mode = OverlapMode::Iou);

void prf1(const MatchResult& m, int64_t n_gt, int64_t n_pred, double& precision,
          double& recall, double& f1);

// Per-gt IoU, 0 for unmatched trees; miou averages over all gt trees.
double mean_iou(const MatchResult& m, const std::vector<InstanceMask>& gts,
                std::vector<double>& per_tree_iou);

// Percentile bootstrap of the mean with per-resample derived seeds, so the
// result is independent of thread count.
void bootstrap_ci(const std::vector<double>& per_tree_iou, int n, double level,
                  uint64_t seed, double& low, double& high);

EvalReport evaluate_dataset(const AnnotationSet& preds, const AnnotationSet& gts,
                            const EvalConfig& config);

void write_report_json(const EvalReport& r, const std::string& path);
void write_report_csv(const EvalReport& r, const std::string& path);
std::string report_markdown(const EvalReport& r, const std::string& method_name);

} // namespace treecrown
