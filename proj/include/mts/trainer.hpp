#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mts/augment.hpp"
#include "mts/manifest.hpp"
#include "mts/metrics.hpp"
#include "mts/model.hpp"

namespace mts {

struct TrainConfig {
    ModelConfig model;
    int max_epochs = 100;
    int batch_size = 2;
    double lr = 1e-4;
    int patience = 5;
    uint64_t seed = 0;
    bool augment_enabled = true;
    AugmentParams augment;

    void validate() const;
    // modalities the data must provide: the TAFE subset plus T2/FLAIR when CMD is on
    std::vector<Modality> required_modalities() const;
};

struct FoldPlan {
    std::vector<std::vector<std::string>> folds;  // case ids per fold
    std::vector<int64_t> positives_per_fold;      // classification tasks only
};

// Deterministic stratified k-fold split over the eligible cases. A class
// with fewer members than k triggers a StratifyWarning through the warning
// sink and falls back to unstratified for that class.
FoldPlan split_folds(const std::vector<ManifestEntry>& eligible, Task task, int k, uint64_t seed);

// Early-stopping policy: stop after `patience` consecutive epochs without a
// new best validation loss.
class EarlyStopper {
public:
    explicit EarlyStopper(int patience) : patience_(patience) {
        if (patience < 1) throw ConfigError("patience must be >= 1");
    }
    // feed one epoch's validation loss; returns true when it is a new best
    bool update(double val_loss) {
        ++epoch_;
        if (!seen_ || val_loss < best_) {
            seen_ = true;
            best_ = val_loss;
            best_epoch_ = epoch_;
            since_best_ = 0;
            return true;
        }
        ++since_best_;
        return false;
    }
    bool should_stop() const { return since_best_ >= patience_; }
    int best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_; }
    int epoch() const { return epoch_; }

private:
    int patience_;
    int epoch_ = 0, best_epoch_ = 0, since_best_ = 0;
    double best_ = 0.0;
    bool seen_ = false;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct RunRecord {
    std::vector<EpochRecord> epochs;
    int best_epoch = 0;
    int stop_epoch = 0;
    double best_val_loss = 0.0;
    std::string checkpoint_path;
};

// Preloaded preprocessed cases, shared across folds.
class CaseStore {
public:
    void add(Case c);
    const Case& by_id(const std::string& id) const;
    std::vector<const Case*> select(const std::vector<std::string>& ids) const;
    size_t size() const { return cases_.size(); }

    static CaseStore load(const std::vector<ManifestEntry>& entries, const std::array<int64_t, 3>& target);

private:
    std::vector<Case> cases_;
    std::map<std::string, size_t> index_;
};

// Adam on the joint loss with early stopping; saves the best-validation
// checkpoint under run_dir and writes history.csv.
RunRecord train_fold(const TrainConfig& cfg, const std::vector<std::string>& train_ids,
                     const std::vector<std::string>& val_ids, const CaseStore& store,
                     const std::string& run_dir);

struct CvResult {
    FoldPlan plan;
    std::vector<RunRecord> records;
    std::vector<std::string> checkpoints;
    MetricReport report;  // per-fold validation metrics
};

// Full 5-fold cross-validation over the eligible cases of a manifest;
// writes runs/<fold_i>/... plus report.csv/report.json under run_dir.
CvResult train_cross_validation(const TrainConfig& cfg, const Manifest& manifest, const std::string& run_dir,
                                int k = 5);

// The ensemble rule: arithmetic mean of the member probability rows.
Tensor average_probability_rows(const std::vector<Tensor>& member_probs);

// Mean of the member models' softmax probabilities.
ClassificationBundle ensemble_predict(const std::vector<const MtsModel*>& models, const Case& c);
ClassificationBundle ensemble_predict(const std::vector<std::string>& checkpoint_paths, const Case& c);

// Per-voxel argmax of the mean softmax over member models.
MaskVolume ensemble_segment(const std::vector<const MtsModel*>& models, const Case& c);

std::vector<std::unique_ptr<MtsModel>> load_ensemble(const std::vector<std::string>& checkpoint_paths);

// classification scores P(class 1) for a cohort
std::vector<double> ensemble_scores(const std::vector<const MtsModel*>& models,
                                    const std::vector<const Case*>& cases);

// ---- ablation grids ----

struct AblationRow {
    std::string name;      // e.g. "TAFE", "SwinT-3", "T1C+FLAIR/DSF"
    std::string group;     // sequences grid: the combination label
    std::string variant;   // sequences grid: TAFE or DSF
    ModelConfig config;
};

// grid is one of: modules (Table-4 layout), depth (Table-5), sequences (Table-6)
std::vector<AblationRow> ablation_grid(const std::string& grid, const ModelConfig& base);

struct AblationResult {
    AblationRow row;
    MetricReport test_report;  // per-fold-model metrics on the held-out cohort
};

std::vector<AblationResult> run_ablation(const std::string& grid, const TrainConfig& base,
                                         const Manifest& train_manifest, const Manifest& test_manifest,
                                         const std::string& out_dir);

void write_ablation_csv(const std::string& grid, const std::vector<AblationResult>& results,
                        const std::string& path);
void write_ablation_json(const std::string& grid, const std::vector<AblationResult>& results,
                         const std::string& path);

// classification metrics of each fold model on a test cohort
MetricReport evaluate_cohort(const std::vector<std::string>& checkpoints,
                             const std::vector<const Case*>& cases, Task task);

}  // namespace mts
