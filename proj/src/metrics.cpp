#include "mts/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "mts/errors.hpp"

using nlohmann::json;

namespace mts {

namespace {

struct OverlapCounts {
    int64_t p = 0, g = 0, both = 0;
};

OverlapCounts overlap(const MaskVolume& pred, const MaskVolume& gt, int32_t label) {
    if (pred.shape != gt.shape)
        throw ShapeError("mask shape mismatch " + shape_str(pred.shape) + " vs " + shape_str(gt.shape));
    OverlapCounts c;
    for (size_t i = 0; i < pred.labels.size(); ++i) {
        const bool in_p = pred.labels[i] == label;
        const bool in_g = gt.labels[i] == label;
        c.p += in_p;
        c.g += in_g;
        c.both += in_p && in_g;
    }
    return c;
}

}  // namespace

double dice(const MaskVolume& pred, const MaskVolume& gt, int32_t label) {
    const OverlapCounts c = overlap(pred, gt, label);
    if (c.p + c.g == 0) return 1.0;  // both empty, by convention
    return 2.0 * double(c.both) / double(c.p + c.g);
}

double iou(const MaskVolume& pred, const MaskVolume& gt, int32_t label) {
    const OverlapCounts c = overlap(pred, gt, label);
    const int64_t uni = c.p + c.g - c.both;
    if (uni == 0) return 1.0;
    return double(c.both) / double(uni);
}

namespace {

// voxels with `label` having a 6-neighbour outside the label (or at the edge)
std::vector<std::array<int64_t, 3>> boundary_voxels(const MaskVolume& m, int32_t label) {
    std::vector<std::array<int64_t, 3>> out;
    const int64_t d = m.shape[0], h = m.shape[1], w = m.shape[2];
    for (int64_t z = 0; z < d; ++z)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                if (m.at(z, y, x) != label) continue;
                const bool boundary =
                    z == 0 || z == d - 1 || y == 0 || y == h - 1 || x == 0 || x == w - 1 ||
                    m.at(z - 1, y, x) != label || m.at(z + 1, y, x) != label ||
                    m.at(z, y - 1, x) != label || m.at(z, y + 1, x) != label ||
                    m.at(z, y, x - 1) != label || m.at(z, y, x + 1) != label;
                if (boundary) out.push_back({z, y, x});
            }
    return out;
}

double directed_hausdorff(const std::vector<std::array<int64_t, 3>>& a,
                          const std::vector<std::array<int64_t, 3>>& b,
                          const std::array<double, 3>& sp) {
    double worst = 0.0;
#pragma omp parallel for reduction(max : worst) schedule(static)
    for (int64_t i = 0; i < int64_t(a.size()); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& q : b) {
            const double dz = double(a[size_t(i)][0] - q[0]) * sp[0];
            const double dy = double(a[size_t(i)][1] - q[1]) * sp[1];
            const double dx = double(a[size_t(i)][2] - q[2]) * sp[2];
            best = std::min(best, dz * dz + dy * dy + dx * dx);
        }
        worst = std::max(worst, best);
    }
    return std::sqrt(worst);
}

}  // namespace

double hausdorff(const MaskVolume& pred, const MaskVolume& gt, int32_t label) {
    if (pred.shape != gt.shape)
        throw ShapeError("mask shape mismatch " + shape_str(pred.shape) + " vs " + shape_str(gt.shape));
    const auto a = boundary_voxels(pred, label);
    const auto b = boundary_voxels(gt, label);
    if (a.empty() || b.empty())
        throw EmptyMaskError("hausdorff: empty mask for label " + std::to_string(label));
    return std::max(directed_hausdorff(a, b, gt.spacing), directed_hausdorff(b, a, gt.spacing));
}

// ---------------------------------------------------------------------------

ConfusionCounts confusion_from_predictions(const std::vector<int>& pred, const std::vector<int>& truth) {
    if (pred.size() != truth.size()) throw ShapeError("confusion: size mismatch");
    ConfusionCounts c;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (truth[i] == 1)
            pred[i] == 1 ? ++c.tp : ++c.fn;
        else
            pred[i] == 1 ? ++c.fp : ++c.tn;
    }
    return c;
}

ConfusionStats confusion_stats(const ConfusionCounts& c) {
    auto rate = [](double num, double den) { return den > 0.0 ? num / den : 0.0; };
    ConfusionStats s{};
    const double tp = double(c.tp), fp = double(c.fp), tn = double(c.tn), fn = double(c.fn);
    s.acc = rate(tp + tn, tp + fp + tn + fn);
    s.sensitivity = rate(tp, tp + fn);
    s.specificity = rate(tn, tn + fp);
    const double precision = rate(tp, tp + fp);
    s.f1 = rate(2.0 * precision * s.sensitivity, precision + s.sensitivity);
    const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    s.mcc = denom > 0.0 ? (tp * tn - fp * fn) / std::sqrt(denom) : 0.0;
    return s;
}

namespace {

// midranks (1-based, ties averaged)
std::vector<double> midranks(const std::vector<double>& v) {
    const size_t n = v.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t(0));
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
        const double r = 0.5 * double(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

void check_binary_labels(const std::vector<double>& scores, const std::vector<int>& labels,
                         int64_t& n_pos, int64_t& n_neg) {
    if (scores.size() != labels.size()) throw ShapeError("scores/labels size mismatch");
    if (scores.empty()) throw DegenerateError("empty score list");
    n_pos = n_neg = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw LabelError("labels must be 0/1");
        y == 1 ? ++n_pos : ++n_neg;
    }
    if (n_pos == 0 || n_neg == 0)
        throw DegenerateError("AUC needs both classes present (got " + std::to_string(n_pos) + " positive, " +
                              std::to_string(n_neg) + " negative)");
}

}  // namespace

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    int64_t n_pos = 0, n_neg = 0;
    check_binary_labels(scores, labels, n_pos, n_neg);
    const std::vector<double> ranks = midranks(scores);
    double rank_sum = 0.0;
    for (size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == 1) rank_sum += ranks[i];
    return (rank_sum - double(n_pos) * double(n_pos + 1) / 2.0) / (double(n_pos) * double(n_neg));
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must be in (0, 1)");
    // Acklam's rational approximation, |relative error| < 1.15e-9
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                               1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                               6.680131188771972e+01,  -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                               -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                               3.754408661907416e+00};
    const double plow = 0.02425, phigh = 1 - plow;
    double q, r;
    if (p < plow) {
        q = std::sqrt(-2 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    if (p > phigh) {
        q = std::sqrt(-2 * std::log(1 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
    }
    q = p - 0.5;
    r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

RocResult delong_ci(const std::vector<double>& scores, const std::vector<int>& labels, double level) {
    int64_t n_pos = 0, n_neg = 0;
    check_binary_labels(scores, labels, n_pos, n_neg);
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("delong_ci: level must be in (0, 1)");

    std::vector<double> pos, neg;
    pos.reserve(size_t(n_pos));
    neg.reserve(size_t(n_neg));
    for (size_t i = 0; i < labels.size(); ++i)
        (labels[i] == 1 ? pos : neg).push_back(scores[i]);

    // structural components: V10 per positive, V01 per negative
    auto psi = [](double x, double y) { return x > y ? 1.0 : (x == y ? 0.5 : 0.0); };
    std::vector<double> v10(pos.size()), v01(neg.size(), 0.0);
    for (size_t i = 0; i < pos.size(); ++i) {
        double acc = 0.0;
        for (size_t j = 0; j < neg.size(); ++j) {
            const double p = psi(pos[i], neg[j]);
            acc += p;
            v01[j] += p;
        }
        v10[i] = acc / double(neg.size());
    }
    for (double& v : v01) v /= double(pos.size());

    RocResult r;
    r.level = level;
    r.auc = roc_auc(scores, labels);

    auto sample_var = [](const std::vector<double>& v, double mean) {
        if (v.size() < 2) return 0.0;
        double acc = 0.0;
        for (double x : v) acc += (x - mean) * (x - mean);
        return acc / double(v.size() - 1);
    };
    const double mean10 = std::accumulate(v10.begin(), v10.end(), 0.0) / double(v10.size());
    const double mean01 = std::accumulate(v01.begin(), v01.end(), 0.0) / double(v01.size());
    r.delong_variance = sample_var(v10, mean10) / double(pos.size()) + sample_var(v01, mean01) / double(neg.size());

    const double z = normal_quantile(0.5 + level / 2.0);
    const double half = z * std::sqrt(std::max(0.0, r.delong_variance));
    r.ci_low = std::max(0.0, r.auc - half);
    r.ci_high = std::min(1.0, r.auc + half);
    return r;
}

// ---------------------------------------------------------------------------

FoldStats aggregate_folds(const std::vector<double>& values) {
    if (values.empty()) throw DegenerateError("aggregate_folds: empty value list");
    FoldStats s;
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / double(values.size());
    if (values.size() < 2) {
        log_warn("aggregate_folds: single value, reporting std 0");
        s.std = 0.0;
        return s;
    }
    double acc = 0.0;
    for (double v : values) acc += (v - s.mean) * (v - s.mean);
    s.std = std::sqrt(acc / double(values.size() - 1));
    return s;
}

ClassificationMetrics evaluate_binary(const std::vector<double>& scores, const std::vector<int>& labels) {
    ClassificationMetrics m;
    std::vector<int> pred(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) pred[i] = scores[i] >= 0.5 ? 1 : 0;
    m.counts = confusion_from_predictions(pred, labels);
    m.stats = confusion_stats(m.counts);
    try {
        m.roc = delong_ci(scores, labels);
    } catch (const DegenerateError&) {
        m.roc.reset();  // single-class cohort: AUC marked degenerate
    }
    return m;
}

void MetricReport::set(const std::string& metric, std::vector<double> fold_values) {
    if (!values.count(metric)) metrics.push_back(metric);
    values[metric] = std::move(fold_values);
}

FoldStats MetricReport::stats(const std::string& metric) const {
    auto it = values.find(metric);
    if (it == values.end()) throw ConfigError("MetricReport: unknown metric " + metric);
    return aggregate_folds(it->second);
}

void MetricReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << "row";
    for (const auto& m : metrics) out << "," << m;
    out << "\n";
    size_t n_folds = 0;
    for (const auto& m : metrics) n_folds = std::max(n_folds, values.at(m).size());
    for (size_t f = 0; f < n_folds; ++f) {
        out << (f < fold_names.size() ? fold_names[f] : "fold" + std::to_string(f + 1));
        for (const auto& m : metrics) {
            const auto& v = values.at(m);
            out << ",";
            if (f < v.size()) out << v[f];
        }
        out << "\n";
    }
    out << "mean";
    for (const auto& m : metrics) out << "," << stats(m).mean;
    out << "\nstd";
    for (const auto& m : metrics) out << "," << stats(m).std;
    out << "\n";
    if (!out) throw IoError("write failed for " + path);
}

void MetricReport::write_json(const std::string& path) const {
    json j;
    j["task"] = task;
    j["cohort"] = cohort;
    j["fold_names"] = fold_names;
    for (const auto& m : metrics) {
        const FoldStats s = stats(m);
        j["metrics"][m] = {{"folds", values.at(m)}, {"mean", s.mean}, {"std", s.std}};
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

MetricReport MetricReport::read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot read " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(path + ": invalid JSON: " + e.what());
    }
    MetricReport r;
    r.task = j.value("task", "");
    r.cohort = j.value("cohort", "");
    if (j.contains("fold_names")) r.fold_names = j["fold_names"].get<std::vector<std::string>>();
    if (j.contains("metrics"))
        for (auto& [name, entry] : j["metrics"].items())
            r.set(name, entry.at("folds").get<std::vector<double>>());
    return r;
}

}  // namespace mts
