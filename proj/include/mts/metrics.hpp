#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mts/volume.hpp"

namespace mts {

// ---- segmentation overlap ----

// 2|P n G| / (|P| + |G|); 1.0 when both masks are empty of `label`.
double dice(const MaskVolume& pred, const MaskVolume& gt, int32_t label);
// |P n G| / |P u G|; 1.0 when both empty.
double iou(const MaskVolume& pred, const MaskVolume& gt, int32_t label);
// Symmetric Hausdorff distance (100th percentile) between boundary voxel
// centers, Euclidean with physical spacing. Throws EmptyMaskError when either
// mask has no `label` voxels.
double hausdorff(const MaskVolume& pred, const MaskVolume& gt, int32_t label);

// ---- binary classification ----

struct ConfusionCounts {
    int64_t tp = 0, fp = 0, tn = 0, fn = 0;
    int64_t total() const { return tp + fp + tn + fn; }
};

ConfusionCounts confusion_from_predictions(const std::vector<int>& pred, const std::vector<int>& truth);

struct ConfusionStats {
    double acc, sensitivity, specificity, f1, mcc;
};

// Textbook rates; any degenerate denominator yields 0 for that metric.
ConfusionStats confusion_stats(const ConfusionCounts& c);

// Mann-Whitney AUC: (wins + 0.5 * ties) / (n1 * n0), computed via midranks.
// Throws DegenerateError unless both classes are present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

struct RocResult {
    double auc = 0.0;
    double delong_variance = 0.0;
    double ci_low = 0.0, ci_high = 0.0;
    double level = 0.95;
};

// DeLong structural-component variance with a normal-approximation CI
// clipped to [0, 1]. The auc field equals roc_auc on the same inputs.
RocResult delong_ci(const std::vector<double>& scores, const std::vector<int>& labels, double level = 0.95);

// Standard normal quantile (Acklam's rational approximation).
double normal_quantile(double p);

// ---- aggregation and reporting ----

struct FoldStats {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation (n-1)
};

// Arithmetic mean and sample std; a single value reports std 0 with a
// warning; an empty list throws DegenerateError.
FoldStats aggregate_folds(const std::vector<double>& values);

struct ClassificationMetrics {
    ConfusionCounts counts;
    ConfusionStats stats;
    std::optional<RocResult> roc;  // absent for single-class cohorts
};

// Threshold-0.5 confusion metrics plus DeLong AUC over P(class 1) scores.
ClassificationMetrics evaluate_binary(const std::vector<double>& scores, const std::vector<int>& labels);

// Per-fold metric values with mean +/- std aggregation, serializable to CSV
// (fold rows then mean and std rows) and a JSON mirror.
struct MetricReport {
    std::string task;
    std::string cohort;
    std::vector<std::string> metrics;    // column order
    std::vector<std::string> fold_names;
    std::map<std::string, std::vector<double>> values;  // metric -> per-fold

    void set(const std::string& metric, std::vector<double> fold_values);
    FoldStats stats(const std::string& metric) const;
    void write_csv(const std::string& path) const;
    void write_json(const std::string& path) const;
    static MetricReport read_json(const std::string& path);
};

}  // namespace mts
