#include "mts/trainer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "mts/optim.hpp"

namespace fs = std::filesystem;

namespace mts {

void TrainConfig::validate() const {
    model.validate();
    if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (lr <= 0.0) throw ConfigError("train: learning rate must be > 0");
    if (patience < 1) throw ConfigError("train: patience must be >= 1");
}

std::vector<Modality> TrainConfig::required_modalities() const {
    std::vector<Modality> req = model.modalities;
    if (model.cmd_enabled)
        for (Modality m : {Modality::T2, Modality::FLAIR})
            if (std::find(req.begin(), req.end(), m) == req.end()) req.push_back(m);
    return req;
}

// ---------------------------------------------------------------------------

FoldPlan split_folds(const std::vector<ManifestEntry>& eligible, Task task, int k, uint64_t seed) {
    if (k < 2) throw ConfigError("split_folds: k must be >= 2");
    if (int64_t(eligible.size()) < k)
        throw EligibilityError("split_folds: need at least " + std::to_string(k) + " eligible cases, got " +
                               std::to_string(eligible.size()));

    // group by class label for stratification (single group for segmentation)
    std::vector<std::vector<std::string>> groups;
    if (task == Task::Segmentation) {
        groups.resize(1);
        for (const auto& e : eligible) groups[0].push_back(e.case_id);
    } else {
        groups.resize(2);
        for (const auto& e : eligible) groups[size_t(e.class_label(task))].push_back(e.case_id);
        for (size_t g = 0; g < 2; ++g)
            if (!groups[g].empty() && int64_t(groups[g].size()) < k)
                log_warn("StratifyWarning: class " + std::to_string(g) + " has " +
                         std::to_string(groups[g].size()) + " members (< " + std::to_string(k) +
                         " folds); unstratified for that class");
    }

    FoldPlan plan;
    plan.folds.resize(size_t(k));
    Rng rng(seed);
    for (auto& group : groups) {
        // seeded Fisher-Yates then round-robin dealing
        for (size_t i = group.size(); i > 1; --i)
            std::swap(group[i - 1], group[size_t(rng.uniform_int(int64_t(i)))]);
        for (size_t i = 0; i < group.size(); ++i) plan.folds[i % size_t(k)].push_back(group[i]);
    }

    if (task != Task::Segmentation) {
        std::map<std::string, int> label_of;
        for (const auto& e : eligible) label_of[e.case_id] = e.class_label(task);
        plan.positives_per_fold.resize(size_t(k), 0);
        for (size_t f = 0; f < size_t(k); ++f)
            for (const auto& id : plan.folds[f]) plan.positives_per_fold[f] += label_of[id];
    }
    return plan;
}

// ---------------------------------------------------------------------------

void CaseStore::add(Case c) {
    index_[c.id] = cases_.size();
    cases_.push_back(std::move(c));
}

const Case& CaseStore::by_id(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw DataError("case '" + id + "' not loaded");
    return cases_[it->second];
}

std::vector<const Case*> CaseStore::select(const std::vector<std::string>& ids) const {
    std::vector<const Case*> out;
    out.reserve(ids.size());
    for (const auto& id : ids) out.push_back(&by_id(id));
    return out;
}

CaseStore CaseStore::load(const std::vector<ManifestEntry>& entries, const std::array<int64_t, 3>& target) {
    CaseStore store;
    for (const auto& e : entries) store.add(load_case(e, target));
    return store;
}

// ---------------------------------------------------------------------------

namespace {

double run_batches(const MtsModel& model, const TrainConfig& cfg, const std::vector<const Case*>& cases,
                   bool training, nn::Adam* opt, Rng& rng) {
    double loss_sum = 0.0;
    int64_t seen = 0;
    for (size_t begin = 0; begin < cases.size(); begin += size_t(cfg.batch_size)) {
        const size_t end = std::min(cases.size(), begin + size_t(cfg.batch_size));
        std::vector<const Case*> chunk(cases.begin() + long(begin), cases.begin() + long(end));

        std::vector<Case> augmented;
        if (training && cfg.augment_enabled) {
            augmented.reserve(chunk.size());
            for (const Case* c : chunk) augmented.push_back(augment(*c, rng.next_u64(), cfg.augment));
            for (size_t i = 0; i < chunk.size(); ++i) chunk[i] = &augmented[i];
        }

        const Batch batch = make_batch(chunk, cfg.model);
        ModelOutput out = model.forward(batch, training, rng);
        if (!out.loss.defined()) throw DataError("training batch produced no loss (missing labels/masks?)");
        loss_sum += out.loss.item() * double(chunk.size());
        seen += int64_t(chunk.size());
        if (training && opt) {
            opt->zero_grad();
            ad::backward(out.loss);
            opt->step();
        }
    }
    return loss_sum / double(seen);
}

}  // namespace

RunRecord train_fold(const TrainConfig& cfg, const std::vector<std::string>& train_ids,
                     const std::vector<std::string>& val_ids, const CaseStore& store,
                     const std::string& run_dir) {
    cfg.validate();
    if (train_ids.empty() || val_ids.empty()) throw DataError("train_fold: empty train or validation split");
    fs::create_directories(run_dir);

    MtsModel model(cfg.model);
    nn::Adam opt(model.parameters(), cfg.lr);

    RunRecord rec;
    rec.checkpoint_path = (fs::path(run_dir) / "checkpoint.mts").string();
    EarlyStopper stopper(cfg.patience);

    std::vector<std::string> order = train_ids;
    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        Rng rng = Rng(cfg.seed).fork(uint64_t(epoch));
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[size_t(rng.uniform_int(int64_t(i)))]);

        const double train_loss = run_batches(model, cfg, store.select(order), true, &opt, rng);
        Rng val_rng = Rng(cfg.seed).fork(0);
        const double val_loss = run_batches(model, cfg, store.select(val_ids), false, nullptr, val_rng);
        rec.epochs.push_back({epoch, train_loss, val_loss});

        if (stopper.update(val_loss)) model.save_checkpoint(rec.checkpoint_path);
        if (stopper.should_stop()) break;
    }
    rec.best_epoch = stopper.best_epoch();
    rec.best_val_loss = stopper.best_loss();
    rec.stop_epoch = int(rec.epochs.size());

    std::ofstream hist(fs::path(run_dir) / "history.csv");
    hist << "epoch,train_loss,val_loss\n";
    for (const auto& e : rec.epochs) hist << e.epoch << "," << e.train_loss << "," << e.val_loss << "\n";
    return rec;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> model_scores(const MtsModel& model, const std::vector<const Case*>& cases) {
    std::vector<double> scores;
    scores.reserve(cases.size());
    Rng rng(0);
    for (const Case* c : cases) {
        const Batch b = make_batch({c}, model.config());
        const ModelOutput out = model.forward(b, false, rng);
        scores.push_back(out.bundle().probabilities[1]);  // P(class 1)
    }
    return scores;
}

std::vector<int> cohort_labels(const std::vector<const Case*>& cases, Task task) {
    std::vector<int> labels;
    for (const Case* c : cases) {
        switch (task) {
            case Task::IDH: labels.push_back(c->idh == Idh::Mutant ? 1 : 0); break;
            case Task::Codel: labels.push_back(c->codel == Codel::Codeleted ? 1 : 0); break;
            case Task::Grade: labels.push_back(c->grade == Grade::HGG ? 1 : 0); break;
            default: throw ConfigError("cohort_labels: classification tasks only");
        }
    }
    return labels;
}

void fill_classification_report(MetricReport& report, const std::vector<std::vector<double>>& per_fold_scores,
                                const std::vector<int>& labels) {
    std::vector<double> acc, f1, mcc, auc;
    for (const auto& scores : per_fold_scores) {
        const ClassificationMetrics m = evaluate_binary(scores, labels);
        acc.push_back(m.stats.acc);
        f1.push_back(m.stats.f1);
        mcc.push_back(m.stats.mcc);
        auc.push_back(m.roc ? m.roc->auc : std::nan(""));
    }
    report.set("ACC", acc);
    report.set("F1", f1);
    report.set("MCC", mcc);
    report.set("AUC", auc);
}

}  // namespace

CvResult train_cross_validation(const TrainConfig& cfg, const Manifest& manifest, const std::string& run_dir,
                                int k) {
    cfg.validate();
    const Task task = cfg.model.task;
    const auto eligible = manifest.eligible_entries(task, cfg.required_modalities());
    if (eligible.empty()) {
        std::string mods;
        for (Modality m : cfg.required_modalities()) mods += (mods.empty() ? "" : ",") + to_string(m);
        throw EligibilityError("no eligible cases for task '" + to_string(task) +
                               "': the inclusion rules require modalities {" + mods +
                               "} and a known label (segmentation: a mask)");
    }

    CvResult cv;
    cv.plan = split_folds(eligible, task, k, cfg.seed);
    const CaseStore store = CaseStore::load(eligible, cfg.model.backbone.input_size);

    for (int f = 0; f < k; ++f) {
        std::vector<std::string> train_ids, val_ids = cv.plan.folds[size_t(f)];
        for (int g = 0; g < k; ++g)
            if (g != f)
                train_ids.insert(train_ids.end(), cv.plan.folds[size_t(g)].begin(), cv.plan.folds[size_t(g)].end());

        TrainConfig fold_cfg = cfg;
        fold_cfg.model.init_seed = Rng(cfg.seed).fork(uint64_t(100 + f)).next_u64();
        const std::string fold_dir = (fs::path(run_dir) / ("fold" + std::to_string(f + 1))).string();
        cv.records.push_back(train_fold(fold_cfg, train_ids, val_ids, store, fold_dir));
        cv.checkpoints.push_back(cv.records.back().checkpoint_path);
    }

    // per-fold validation metrics from the best checkpoints
    cv.report.task = to_string(task);
    cv.report.cohort = "cross-validation";
    for (int f = 0; f < k; ++f) cv.report.fold_names.push_back("fold" + std::to_string(f + 1));

    if (task == Task::Segmentation) {
        std::vector<double> dices, ious, hds;
        for (int f = 0; f < k; ++f) {
            auto model = MtsModel::load_checkpoint(cv.checkpoints[size_t(f)]);
            model->set_trainable(false);
            double dsum = 0, isum = 0, hsum = 0;
            int64_t n = 0, hn = 0;
            for (const auto& id : cv.plan.folds[size_t(f)]) {
                const Case& c = store.by_id(id);
                const MaskVolume pred = ensemble_segment({model.get()}, c);
                const MaskVolume gt = cfg.model.backbone.seg_channels == 2 ? c.mask->binarized() : *c.mask;
                const int32_t max_label = cfg.model.backbone.seg_channels == 2 ? 1 : 3;
                for (int32_t label = 1; label <= max_label; ++label) {
                    dsum += dice(pred, gt, label);
                    isum += iou(pred, gt, label);
                    ++n;
                    try {
                        hsum += hausdorff(pred, gt, label);
                        ++hn;
                    } catch (const EmptyMaskError&) {
                    }
                }
            }
            dices.push_back(dsum / double(n));
            ious.push_back(isum / double(n));
            hds.push_back(hn ? hsum / double(hn) : std::nan(""));
        }
        cv.report.set("Dice", dices);
        cv.report.set("IoU", ious);
        cv.report.set("Hausdorff_mm", hds);
    } else {
        // evaluate each fold's model on its own held-out fold
        std::vector<double> acc, f1, mcc, auc;
        for (int f = 0; f < k; ++f) {
            auto model = MtsModel::load_checkpoint(cv.checkpoints[size_t(f)]);
            model->set_trainable(false);
            const auto cases = store.select(cv.plan.folds[size_t(f)]);
            const auto scores = model_scores(*model, cases);
            const auto labels = cohort_labels(cases, task);
            const ClassificationMetrics m = evaluate_binary(scores, labels);
            acc.push_back(m.stats.acc);
            f1.push_back(m.stats.f1);
            mcc.push_back(m.stats.mcc);
            auc.push_back(m.roc ? m.roc->auc : std::nan(""));
        }
        cv.report.set("ACC", acc);
        cv.report.set("F1", f1);
        cv.report.set("MCC", mcc);
        cv.report.set("AUC", auc);
    }

    fs::create_directories(run_dir);
    cv.report.write_csv((fs::path(run_dir) / "report.csv").string());
    cv.report.write_json((fs::path(run_dir) / "report.json").string());
    return cv;
}

// ---------------------------------------------------------------------------

std::vector<std::unique_ptr<MtsModel>> load_ensemble(const std::vector<std::string>& checkpoint_paths) {
    if (checkpoint_paths.empty()) throw CheckpointError("ensemble: no checkpoints given");
    std::vector<std::unique_ptr<MtsModel>> models;
    for (const auto& p : checkpoint_paths) {
        models.push_back(MtsModel::load_checkpoint(p));
        models.back()->set_trainable(false);
        if (!(models.back()->config() == models.front()->config()))
            throw CheckpointError("ensemble: checkpoint '" + p + "' config differs from '" +
                                  checkpoint_paths.front() + "'");
    }
    return models;
}

Tensor average_probability_rows(const std::vector<Tensor>& member_probs) {
    if (member_probs.empty()) throw DegenerateError("ensemble: no probability rows");
    Tensor mean = Tensor::zeros(member_probs.front().shape);
    for (const Tensor& p : member_probs) {
        check_same_shape(p, mean, "average_probability_rows");
        for (int64_t i = 0; i < mean.numel(); ++i) mean[i] += p[i];
    }
    for (double& v : mean.data) v /= double(member_probs.size());
    return mean;
}

ClassificationBundle ensemble_predict(const std::vector<const MtsModel*>& models, const Case& c) {
    if (models.empty()) throw CheckpointError("ensemble: no models given");
    Rng rng(0);
    ClassificationBundle out;
    std::vector<Tensor> member_probs;
    Tensor mean_tafe = Tensor::zeros({1, 2}), mean_cmd = Tensor::zeros({1, 2});
    bool has_tafe = false, has_cmd = false;
    for (const MtsModel* m : models) {
        const Batch b = make_batch({&c}, m->config());
        const ClassificationBundle one = m->forward(b, false, rng).bundle();
        member_probs.push_back(one.probabilities);
        if (one.c_tafe.defined()) {
            has_tafe = true;
            for (int64_t i = 0; i < 2; ++i) mean_tafe[i] += one.c_tafe[i];
        }
        if (one.c_cmd) {
            has_cmd = true;
            for (int64_t i = 0; i < 2; ++i) mean_cmd[i] += one.c_cmd->operator[](i);
        }
        out.source = one.source;
    }
    const double n = double(models.size());
    Tensor mean_probs = average_probability_rows(member_probs);
    out.probabilities = mean_probs;
    // final "logits" = log of the mean probabilities, so softmax(c_final)
    // reproduces the ensemble probabilities exactly
    out.c_final = Tensor(mean_probs.shape);
    for (int64_t i = 0; i < mean_probs.numel(); ++i)
        out.c_final[i] = std::log(std::max(mean_probs[i], 1e-300));
    if (has_tafe) {
        for (double& v : mean_tafe.data) v /= n;
        out.c_tafe = mean_tafe;
    }
    if (has_cmd) {
        for (double& v : mean_cmd.data) v /= n;
        out.c_cmd = mean_cmd;
    }
    return out;
}

ClassificationBundle ensemble_predict(const std::vector<std::string>& checkpoint_paths, const Case& c) {
    const auto models = load_ensemble(checkpoint_paths);
    std::vector<const MtsModel*> ptrs;
    for (const auto& m : models) ptrs.push_back(m.get());
    return ensemble_predict(ptrs, c);
}

MaskVolume ensemble_segment(const std::vector<const MtsModel*>& models, const Case& c) {
    if (models.empty()) throw CheckpointError("ensemble: no models given");
    Rng rng(0);
    Tensor mean_probs;
    for (const MtsModel* m : models) {
        const Batch b = make_batch({&c}, m->config());
        const ModelOutput out = m->forward(b, false, rng);
        if (!out.seg_logits.defined()) throw ConfigError("ensemble_segment: model has no segmentation output");
        const ad::Var probs = ad::softmax_axis1(out.seg_logits);
        if (!mean_probs.defined()) mean_probs = Tensor::zeros(probs.shape());
        for (int64_t i = 0; i < mean_probs.numel(); ++i) mean_probs[i] += probs.value()[i];
    }
    for (double& v : mean_probs.data) v /= double(models.size());

    const int64_t classes = mean_probs.dim(1);
    const Shape vol{mean_probs.dim(2), mean_probs.dim(3), mean_probs.dim(4)};
    const int64_t sp = shape_numel(vol);
    const Volume3D& ref = c.volumes.begin()->second;
    MaskVolume out(vol, ref.spacing);
    for (int64_t v = 0; v < sp; ++v) {
        int best = 0;
        double best_p = mean_probs[v];
        for (int64_t cl = 1; cl < classes; ++cl)
            if (mean_probs[cl * sp + v] > best_p) {
                best_p = mean_probs[cl * sp + v];
                best = int(cl);
            }
        out.labels[size_t(v)] = best;
    }
    return out;
}

std::vector<double> ensemble_scores(const std::vector<const MtsModel*>& models,
                                    const std::vector<const Case*>& cases) {
    std::vector<double> scores;
    scores.reserve(cases.size());
    for (const Case* c : cases) scores.push_back(ensemble_predict(models, *c).probabilities[1]);
    return scores;
}

MetricReport evaluate_cohort(const std::vector<std::string>& checkpoints,
                             const std::vector<const Case*>& cases, Task task) {
    MetricReport report;
    report.task = to_string(task);
    report.cohort = "test";
    const auto labels = cohort_labels(cases, task);
    std::vector<std::vector<double>> per_fold;
    for (size_t f = 0; f < checkpoints.size(); ++f) {
        report.fold_names.push_back("fold" + std::to_string(f + 1));
        auto model = MtsModel::load_checkpoint(checkpoints[f]);
        model->set_trainable(false);
        per_fold.push_back(model_scores(*model, cases));
    }
    fill_classification_report(report, per_fold, labels);
    return report;
}

// ---------------------------------------------------------------------------
// ablation grids
// ---------------------------------------------------------------------------

namespace {

ModelConfig with_modules(ModelConfig base, bool tafe, bool cmd, bool dsf) {
    base.tafe_enabled = tafe;
    base.cmd_enabled = cmd;
    base.dsf_enabled = dsf;
    return base;
}

std::string combo_name(const std::vector<Modality>& mods) {
    std::string s;
    for (Modality m : mods) {
        std::string u = to_string(m);
        for (auto& ch : u) ch = char(std::toupper(ch));
        s += (s.empty() ? "" : "+") + u;
    }
    return s;
}

}  // namespace

std::vector<AblationRow> ablation_grid(const std::string& grid, const ModelConfig& base) {
    if (base.task != Task::IDH)
        throw ConfigError("ablation grids follow the IDH protocol; set task=idh");
    std::vector<AblationRow> rows;

    if (grid == "modules") {
        rows.push_back({"TAFE", "", "TAFE", with_modules(base, true, false, false)});
        rows.push_back({"CMD", "", "CMD", with_modules(base, false, true, false)});
        rows.push_back({"DSF", "", "DSF", with_modules(base, true, true, true)});
        return rows;
    }

    if (grid == "depth") {
        for (int depth = 1; depth <= 4; ++depth) {
            ModelConfig tafe_cfg = with_modules(base, true, false, false);
            tafe_cfg.tafe_stages = StageSet::preset("TAFE-" + std::to_string(depth));
            rows.push_back({"TAFE-" + std::to_string(depth), "", "TAFE", tafe_cfg});

            // SwinT baseline: identical model trained without segmentation
            // guidance (alpha = 0), decoder detached
            ModelConfig swint_cfg = tafe_cfg;
            swint_cfg.loss.alpha = 0.0;
            rows.push_back({"SwinT-" + std::to_string(depth), "", "SwinT", swint_cfg});
        }
        return rows;
    }

    if (grid == "sequences") {
        const std::vector<std::vector<Modality>> combos = {
            {Modality::T1, Modality::T2},
            {Modality::T1C, Modality::T2},
            {Modality::T1C, Modality::FLAIR},
            {Modality::T1, Modality::T1C, Modality::T2},
            {Modality::T1, Modality::T1C, Modality::FLAIR},
            {Modality::T1, Modality::T1C, Modality::T2, Modality::FLAIR}};
        for (const auto& mods : combos) {
            for (const char* variant : {"TAFE", "DSF"}) {
                ModelConfig cfg = std::string(variant) == "TAFE" ? with_modules(base, true, false, false)
                                                                 : with_modules(base, true, true, true);
                cfg.modalities = mods;
                cfg.backbone.in_channels = int64_t(mods.size());
                rows.push_back({combo_name(mods) + "/" + variant, combo_name(mods), variant, cfg});
            }
        }
        return rows;
    }

    throw ConfigError("unknown ablation grid '" + grid + "' (expected modules|depth|sequences)");
}

std::vector<AblationResult> run_ablation(const std::string& grid, const TrainConfig& base,
                                         const Manifest& train_manifest, const Manifest& test_manifest,
                                         const std::string& out_dir) {
    const auto rows = ablation_grid(grid, base.model);
    std::vector<AblationResult> results;
    for (const auto& row : rows) {
        TrainConfig cfg = base;
        cfg.model = row.config;

        std::string dir_name = row.name;
        for (auto& ch : dir_name)
            if (ch == '/' || ch == '+') ch = '_';
        const std::string run_dir = (fs::path(out_dir) / dir_name).string();
        const CvResult cv = train_cross_validation(cfg, train_manifest, run_dir);

        const auto test_entries = test_manifest.eligible_entries(cfg.model.task, cfg.required_modalities());
        if (test_entries.empty()) throw EligibilityError("ablation: no eligible test cases for row " + row.name);
        const CaseStore test_store = CaseStore::load(test_entries, cfg.model.backbone.input_size);
        std::vector<std::string> ids;
        for (const auto& e : test_entries) ids.push_back(e.case_id);

        AblationResult res{row, evaluate_cohort(cv.checkpoints, test_store.select(ids), cfg.model.task)};
        results.push_back(std::move(res));
    }
    return results;
}

void write_ablation_csv(const std::string& grid, const std::vector<AblationResult>& results,
                        const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    const std::vector<std::string> metrics = {"ACC", "F1", "MCC", "AUC"};

    if (grid == "sequences") {
        // 6 combination rows x {TAFE, DSF} column groups
        out << "sequences";
        for (const char* variant : {"TAFE", "DSF"})
            for (const auto& m : metrics) out << "," << variant << "_" << m << "_mean," << variant << "_" << m << "_std";
        out << "\n";
        std::vector<std::string> groups;
        for (const auto& r : results)
            if (std::find(groups.begin(), groups.end(), r.row.group) == groups.end()) groups.push_back(r.row.group);
        for (const auto& g : groups) {
            out << g;
            for (const char* variant : {"TAFE", "DSF"}) {
                const AblationResult* found = nullptr;
                for (const auto& r : results)
                    if (r.row.group == g && r.row.variant == variant) found = &r;
                for (const auto& m : metrics) {
                    if (found) {
                        const FoldStats s = found->test_report.stats(m);
                        out << "," << s.mean << "," << s.std;
                    } else {
                        out << ",,";
                    }
                }
            }
            out << "\n";
        }
        return;
    }

    out << "configuration";
    for (const auto& m : metrics) out << "," << m << "_mean," << m << "_std";
    out << "\n";
    for (const auto& r : results) {
        out << r.row.name;
        for (const auto& m : metrics) {
            const FoldStats s = r.test_report.stats(m);
            out << "," << s.mean << "," << s.std;
        }
        out << "\n";
    }
}

void write_ablation_json(const std::string& grid, const std::vector<AblationResult>& results,
                         const std::string& path) {
    nlohmann::json j;
    j["grid"] = grid;
    for (const auto& r : results) {
        nlohmann::json row;
        row["name"] = r.row.name;
        if (!r.row.group.empty()) {
            row["sequences"] = r.row.group;
            row["module"] = r.row.variant;
        }
        for (const auto& m : r.test_report.metrics) {
            const FoldStats s = r.test_report.stats(m);
            row["metrics"][m] = {{"folds", r.test_report.values.at(m)}, {"mean", s.mean}, {"std", s.std}};
        }
        j["rows"].push_back(row);
    }
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace mts
