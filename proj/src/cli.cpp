#include "mts/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"
#include "mts/explain.hpp"
#include "mts/metrics.hpp"
#include "mts/nifti.hpp"
#include "mts/phantom.hpp"
#include "mts/pngio.hpp"
#include "mts/runconfig.hpp"
#include "mts/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mts {

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

// refuse to clobber an existing non-empty --out unless --force
void ensure_out_dir(const std::string& out, bool force) {
    if (fs::exists(out) && !fs::is_directory(out))
        throw ConfigError("--out " + out + " exists and is not a directory");
    if (fs::exists(out) && !fs::is_empty(out) && !force)
        throw ConfigError("--out " + out + " is not empty; pass --force to overwrite");
    fs::create_directories(out);
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    size_t pos = 0;
    while (pos <= s.size()) {
        const size_t comma = s.find(',', pos);
        const std::string item = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        if (!item.empty()) out.push_back(item);
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

json run_config_with_overrides(const std::string& config_path, const std::vector<std::string>& overrides,
                               const std::string& task, uint64_t seed, bool seed_given) {
    json config = load_run_config(config_path);
    if (!task.empty()) config["train"]["task"] = task;
    if (seed_given) config["train"]["seed"] = seed;
    for (const auto& o : overrides) apply_override(config, o);
    return config;
}

// ---------------------------------------------------------------------------

struct PhantomArgs {
    int n = 10;
    std::string out;
    uint64_t seed = 1;
    int64_t size = 32;
    int64_t core_radius = 5;
    int64_t rim = 2;
    double noise = 0.05;
    double contrast = 0.4;
    bool subregions = false;
    bool force = false;
};

int cmd_phantom(const PhantomArgs& args) {
    if (args.n <= 0) throw ConfigError("nothing to generate: --n must be > 0");
    ensure_out_dir(args.out, args.force);

    PhantomSpec spec;
    spec.grid = args.size;
    spec.core_radius = args.core_radius;
    spec.rim_thickness = args.rim;
    spec.noise_sigma = args.noise;
    spec.contrast = args.contrast;
    spec.subregion_mask = args.subregions;

    const Manifest manifest = write_phantom_dataset(spec, args.n, args.seed, args.out);
    int mismatch = 0;
    for (const auto& e : manifest.entries) mismatch += e.idh == Idh::Mutant;
    std::cout << "phantom: wrote " << manifest.entries.size() << " cases (" << mismatch << " mismatch, "
              << manifest.entries.size() - size_t(mismatch) << " non-mismatch) to " << args.out
              << " with manifest " << manifest.path << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string manifest;
    std::string out;
    std::string config;
    std::string task;
    std::vector<std::string> overrides;
    uint64_t seed = 0;
    bool seed_given = false;
    int folds = 5;
    bool force = false;
};

int cmd_train(const TrainArgs& args) {
    const json config = run_config_with_overrides(args.config, args.overrides, args.task, args.seed,
                                                  args.seed_given);
    const TrainConfig cfg = train_config_from_json(config);
    ensure_out_dir(args.out, args.force);
    const Manifest manifest = validate_manifest(args.manifest);

    const CvResult cv = train_cross_validation(cfg, manifest, args.out, args.folds);

    // run summary; alpha=0 without CMD is the SwinT (no segmentation
    // guidance) ablation mode
    json summary;
    summary["config"] = config;
    summary["swint_mode"] = cfg.model.loss.alpha == 0.0 && !cfg.model.cmd_enabled;
    for (size_t f = 0; f < cv.records.size(); ++f) {
        summary["folds"].push_back({{"fold", f + 1},
                                    {"best_epoch", cv.records[f].best_epoch},
                                    {"stop_epoch", cv.records[f].stop_epoch},
                                    {"best_val_loss", cv.records[f].best_val_loss},
                                    {"checkpoint", cv.records[f].checkpoint_path}});
    }
    std::ofstream(fs::path(args.out) / "run.json") << summary.dump(2) << "\n";

    std::cout << "train: " << cv.records.size() << " folds done; report at "
              << (fs::path(args.out) / "report.csv").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string checkpoints;
    std::string manifest;
    std::string out;
    std::string task = "idh";
    bool force = false;
};

int cmd_eval(const EvalArgs& args) {
    const auto paths = split_list(args.checkpoints);
    if (paths.empty()) throw ConfigError("--checkpoints needs at least one path");
    for (const auto& p : paths)
        if (!fs::exists(p)) throw ConfigError("checkpoint not found: " + p);
    ensure_out_dir(args.out, args.force);

    const Task task = task_from_string(args.task);
    const auto models = load_ensemble(paths);
    std::vector<const MtsModel*> ptrs;
    for (const auto& m : models) ptrs.push_back(m.get());
    const ModelConfig& mc = ptrs.front()->config();
    if (mc.task != task)
        throw ConfigError("checkpoints were trained for task '" + to_string(mc.task) + "', not '" +
                          to_string(task) + "'");

    std::vector<Modality> required = mc.modalities;
    if (mc.cmd_enabled)
        for (Modality m : {Modality::T2, Modality::FLAIR})
            if (std::find(required.begin(), required.end(), m) == required.end()) required.push_back(m);

    const Manifest manifest = validate_manifest(args.manifest);
    const auto entries = manifest.eligible_entries(task, required);
    if (entries.empty())
        throw EligibilityError("no eligible cases in " + args.manifest + " for task '" + to_string(task) + "'");
    const CaseStore store = CaseStore::load(entries, mc.backbone.input_size);
    std::vector<std::string> ids;
    for (const auto& e : entries) ids.push_back(e.case_id);
    const auto cases = store.select(ids);

    const bool ensemble = paths.size() > 1;
    if (!ensemble) log_warn("eval: single checkpoint, no ensemble column");

    if (task == Task::Segmentation) {
        const int32_t max_label = mc.backbone.seg_channels == 2 ? 1 : 3;
        const char* label_names[4] = {"BG", "NCR", "ED", "ET"};
        std::ofstream pred_csv(fs::path(args.out) / "predictions.csv");
        pred_csv << "case_id";
        for (int32_t l = 1; l <= max_label; ++l) {
            const char* n = mc.backbone.seg_channels == 2 ? "WT" : label_names[l];
            pred_csv << ",Dice_" << n << ",IoU_" << n << ",HD_" << n;
        }
        pred_csv << "\n";

        MetricReport report;
        report.task = to_string(task);
        report.cohort = args.manifest;
        std::map<std::string, std::vector<double>> cols;
        for (const Case* c : cases) {
            const MaskVolume pred = ensemble_segment(ptrs, *c);
            const MaskVolume gt = mc.backbone.seg_channels == 2 ? c->mask->binarized() : *c->mask;
            pred_csv << c->id;
            for (int32_t l = 1; l <= max_label; ++l) {
                const char* n = mc.backbone.seg_channels == 2 ? "WT" : label_names[l];
                const double dc = dice(pred, gt, l), ic = iou(pred, gt, l);
                double hd = std::nan("");
                try {
                    hd = hausdorff(pred, gt, l);
                } catch (const EmptyMaskError&) {
                }
                pred_csv << "," << dc << "," << ic << "," << hd;
                cols[std::string("Dice_") + n].push_back(dc);
                cols[std::string("IoU_") + n].push_back(ic);
                cols[std::string("HD_") + n].push_back(hd);
            }
            pred_csv << "\n";
            report.fold_names.push_back(c->id);
        }
        for (auto& [name, vals] : cols) report.set(name, vals);
        json pred_mirror;
        for (size_t i = 0; i < cases.size(); ++i) {
            json row;
            row["case_id"] = cases[i]->id;
            for (auto& [name, vals] : cols) row[name] = vals[i];
            pred_mirror["cases"].push_back(row);
        }
        std::ofstream(fs::path(args.out) / "predictions.json") << pred_mirror.dump(2) << "\n";
        report.write_csv((fs::path(args.out) / "report.csv").string());
        report.write_json((fs::path(args.out) / "report.json").string());
        std::cout << "eval: " << cases.size() << " cases; report at "
                  << (fs::path(args.out) / "report.csv").string() << "\n";
        return kExitOk;
    }

    // classification: per-case predictions with optional ensemble column
    std::vector<int> labels;
    for (const Case* c : cases) {
        switch (task) {
            case Task::IDH: labels.push_back(c->idh == Idh::Mutant ? 1 : 0); break;
            case Task::Codel: labels.push_back(c->codel == Codel::Codeleted ? 1 : 0); break;
            default: labels.push_back(c->grade == Grade::HGG ? 1 : 0); break;
        }
    }

    std::vector<std::vector<double>> per_model;
    Rng rng(0);
    for (const MtsModel* m : ptrs) {
        std::vector<double> scores;
        for (const Case* c : cases) {
            const Batch b = make_batch({c}, m->config());
            scores.push_back(m->forward(b, false, rng).bundle().probabilities[1]);
        }
        per_model.push_back(std::move(scores));
    }
    std::vector<double> ens(cases.size(), 0.0);
    for (const auto& scores : per_model)
        for (size_t i = 0; i < scores.size(); ++i) ens[i] += scores[i] / double(per_model.size());

    std::ofstream pred_csv(fs::path(args.out) / "predictions.csv");
    pred_csv << "case_id,label";
    for (size_t mdl = 0; mdl < per_model.size(); ++mdl) pred_csv << ",model" << mdl + 1 << "_p1";
    if (ensemble) pred_csv << ",ensemble_p1";
    pred_csv << ",pred_class\n";
    for (size_t i = 0; i < cases.size(); ++i) {
        pred_csv << cases[i]->id << "," << labels[i];
        for (const auto& scores : per_model) pred_csv << "," << scores[i];
        if (ensemble) pred_csv << "," << ens[i];
        pred_csv << "," << (ens[i] >= 0.5 ? 1 : 0) << "\n";
    }

    json pred_mirror;
    for (size_t i = 0; i < cases.size(); ++i) {
        json row;
        row["case_id"] = cases[i]->id;
        row["label"] = labels[i];
        for (size_t mdl = 0; mdl < per_model.size(); ++mdl)
            row["model" + std::to_string(mdl + 1) + "_p1"] = per_model[mdl][i];
        if (ensemble) row["ensemble_p1"] = ens[i];
        row["pred_class"] = ens[i] >= 0.5 ? 1 : 0;
        pred_mirror["cases"].push_back(row);
    }
    std::ofstream(fs::path(args.out) / "predictions.json") << pred_mirror.dump(2) << "\n";

    MetricReport report;
    report.task = to_string(task);
    report.cohort = args.manifest;
    std::vector<double> acc, f1, mcc, auc, ci_lo, ci_hi;
    bool degenerate = false;
    auto add_row = [&](const std::vector<double>& scores) {
        const ClassificationMetrics m = evaluate_binary(scores, labels);
        acc.push_back(m.stats.acc);
        f1.push_back(m.stats.f1);
        mcc.push_back(m.stats.mcc);
        auc.push_back(m.roc ? m.roc->auc : std::nan(""));
        ci_lo.push_back(m.roc ? m.roc->ci_low : std::nan(""));
        ci_hi.push_back(m.roc ? m.roc->ci_high : std::nan(""));
        degenerate = degenerate || !m.roc;
    };
    for (size_t mdl = 0; mdl < per_model.size(); ++mdl) {
        report.fold_names.push_back("model" + std::to_string(mdl + 1));
        add_row(per_model[mdl]);
    }
    if (ensemble) {
        report.fold_names.push_back("ensemble");
        add_row(ens);
    }
    report.set("ACC", acc);
    report.set("F1", f1);
    report.set("MCC", mcc);
    report.set("AUC", auc);
    report.set("AUC_CI_low", ci_lo);
    report.set("AUC_CI_high", ci_hi);
    report.write_csv((fs::path(args.out) / "report.csv").string());
    report.write_json((fs::path(args.out) / "report.json").string());
    if (degenerate) log_warn("eval: single-class cohort, AUC marked degenerate (nan)");

    std::cout << "eval: " << cases.size() << " cases, " << per_model.size() << " models"
              << (ensemble ? " + ensemble" : "") << "; report at "
              << (fs::path(args.out) / "report.csv").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct AblateArgs {
    std::string grid;
    std::string manifest;
    std::string test_manifest;
    std::string out;
    std::string config;
    std::vector<std::string> overrides;
    uint64_t seed = 0;
    bool seed_given = false;
    bool force = false;
};

int cmd_ablate(const AblateArgs& args) {
    if (args.grid != "modules" && args.grid != "depth" && args.grid != "sequences")
        throw ConfigError("unknown grid '" + args.grid + "' (expected modules|depth|sequences)");
    const json config = run_config_with_overrides(args.config, args.overrides, "idh", args.seed,
                                                  args.seed_given);
    const TrainConfig base = train_config_from_json(config);
    ensure_out_dir(args.out, args.force);

    const Manifest train_manifest = validate_manifest(args.manifest);
    const Manifest test_manifest = validate_manifest(args.test_manifest.empty() ? args.manifest
                                                                                : args.test_manifest);
    const auto results = run_ablation(args.grid, base, train_manifest, test_manifest, args.out);
    write_ablation_csv(args.grid, results, (fs::path(args.out) / "ablation.csv").string());
    write_ablation_json(args.grid, results, (fs::path(args.out) / "ablation.json").string());
    std::cout << "ablate: grid '" << args.grid << "' finished with " << results.size()
              << " configurations; table at " << (fs::path(args.out) / "ablation.csv").string() << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct ExplainArgs {
    std::string checkpoint;
    std::string manifest;
    std::string case_id;
    std::string method = "occlusion";
    std::string out;
    std::string layer = "x4";
    int64_t patch = 16;
    int64_t stride = 8;
    double fill = 0.0;
    int target_class = -1;
    double alpha = 0.5;
    bool force = false;
};

int cmd_explain(const ExplainArgs& args) {
    if (args.method != "occlusion" && args.method != "gradcam")
        throw ConfigError("unknown method '" + args.method + "' (expected occlusion|gradcam)");
    if (!fs::exists(args.checkpoint)) throw ConfigError("checkpoint not found: " + args.checkpoint);
    if (!fs::exists(args.manifest)) throw ConfigError("manifest not found: " + args.manifest);
    ensure_out_dir(args.out, args.force);

    auto model = MtsModel::load_checkpoint(args.checkpoint);
    const Manifest manifest = validate_manifest(args.manifest);
    const ManifestEntry* entry = nullptr;
    for (const auto& e : manifest.entries)
        if (e.case_id == args.case_id) entry = &e;
    if (!entry) throw ConfigError("case '" + args.case_id + "' not found in " + args.manifest);
    const Case c = load_case(*entry, model->config().backbone.input_size);

    Heatmap heat;
    if (args.method == "occlusion")
        heat = occlusion_map(*model, c, {args.patch, args.patch, args.patch},
                             {args.stride, args.stride, args.stride}, args.fill, args.target_class);
    else
        heat = gradcam(*model, c, args.layer, args.target_class);

    const Volume3D& base_vol = c.has(Modality::FLAIR) ? c.volume(Modality::FLAIR) : c.volumes.begin()->second;
    const std::string stem = args.case_id + "_" + args.method;
    write_nifti_raw(heat.values, base_vol.spacing, (fs::path(args.out) / (stem + ".nii.gz")).string());
    write_heatmap_montage(base_vol.data, heat.values, (fs::path(args.out) / (stem + ".png")).string(),
                          args.alpha);
    std::cout << "explain: " << args.method << " map for case " << args.case_id << " (class "
              << heat.target_class << ") written to " << args.out << "\n";
    return kExitOk;
}

// ---------------------------------------------------------------------------

struct ReportArgs {
    std::string runs;
    std::string out;
    bool force = false;
};

int cmd_report(const ReportArgs& args) {
    if (!fs::is_directory(args.runs)) throw ConfigError("--runs " + args.runs + " is not a directory");
    const fs::path report_json = fs::path(args.runs) / "report.json";
    if (!fs::exists(report_json))
        throw DataError("no report.json under " + args.runs + "; run `mtsunet train` first");
    ensure_out_dir(args.out, args.force);

    const MetricReport report = MetricReport::read_json(report_json.string());
    report.write_csv((fs::path(args.out) / "report.csv").string());
    report.write_json((fs::path(args.out) / "report.json").string());

    // fold convergence summary from the history files
    std::ofstream summary(fs::path(args.out) / "folds.csv");
    summary << "fold,epochs,final_train_loss,final_val_loss\n";
    for (int f = 1; f <= 32; ++f) {
        const fs::path hist = fs::path(args.runs) / ("fold" + std::to_string(f)) / "history.csv";
        if (!fs::exists(hist)) break;
        std::ifstream in(hist);
        std::string line, last;
        std::getline(in, line);  // header
        int epochs = 0;
        while (std::getline(in, line))
            if (!line.empty()) {
                last = line;
                ++epochs;
            }
        summary << f << "," << epochs;
        const auto c1 = last.find(','), c2 = last.rfind(',');
        if (c1 != std::string::npos && c2 != c1)
            summary << "," << last.substr(c1 + 1, c2 - c1 - 1) << "," << last.substr(c2 + 1);
        summary << "\n";
    }
    std::cout << "report: aggregated " << args.runs << " into " << args.out << "\n";
    return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------------------

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"mtsunet: multi-task glioma MRI model - phantoms, training, evaluation, ablations, explanations"};
    app.require_subcommand(1);

    PhantomArgs phantom;
    auto* sc_phantom = app.add_subcommand("phantom", "generate a synthetic phantom dataset");
    sc_phantom->add_option("--n", phantom.n, "number of cases");
    sc_phantom->add_option("--out", phantom.out, "output directory")->required();
    sc_phantom->add_option("--seed", phantom.seed, "random seed");
    sc_phantom->add_option("--size", phantom.size, "grid edge, voxels");
    sc_phantom->add_option("--core-radius", phantom.core_radius, "lesion core radius, voxels");
    sc_phantom->add_option("--rim", phantom.rim, "rim thickness, voxels");
    sc_phantom->add_option("--noise", phantom.noise, "noise sigma");
    sc_phantom->add_option("--contrast", phantom.contrast, "lesion contrast");
    sc_phantom->add_flag("--subregions", phantom.subregions, "emit ET/ED/NCR labels instead of binary");
    sc_phantom->add_flag("--force", phantom.force, "overwrite a non-empty --out");

    TrainArgs train;
    auto* sc_train = app.add_subcommand("train", "5-fold cross-validation training");
    sc_train->add_option("--manifest", train.manifest, "manifest CSV")->required()->check(CLI::ExistingFile);
    sc_train->add_option("--out", train.out, "run directory")->required();
    sc_train->add_option("--config", train.config, "run config JSON")->check(CLI::ExistingFile);
    sc_train->add_option("--task", train.task, "segmentation|idh|codel|grade");
    sc_train->add_option("--override", train.overrides, "config override key.path=value (repeatable)");
    sc_train->add_option("--seed", train.seed, "random seed");
    sc_train->add_option("--folds", train.folds, "fold count");
    sc_train->add_flag("--force", train.force, "overwrite a non-empty --out");

    EvalArgs eval;
    auto* sc_eval = app.add_subcommand("eval", "evaluate checkpoints (ensemble) on a manifest");
    sc_eval->add_option("--checkpoints", eval.checkpoints, "comma-separated checkpoint paths")->required();
    sc_eval->add_option("--manifest", eval.manifest, "manifest CSV")->required()->check(CLI::ExistingFile);
    sc_eval->add_option("--out", eval.out, "output directory")->required();
    sc_eval->add_option("--task", eval.task, "segmentation|idh|codel|grade");
    sc_eval->add_flag("--force", eval.force, "overwrite a non-empty --out");

    AblateArgs ablate;
    auto* sc_ablate = app.add_subcommand("ablate", "run an ablation grid (modules|depth|sequences)");
    sc_ablate->add_option("--grid", ablate.grid, "modules|depth|sequences")->required();
    sc_ablate->add_option("--manifest", ablate.manifest, "training manifest")->required()->check(CLI::ExistingFile);
    sc_ablate->add_option("--test-manifest", ablate.test_manifest, "held-out test manifest")
        ->check(CLI::ExistingFile);
    sc_ablate->add_option("--out", ablate.out, "output directory")->required();
    sc_ablate->add_option("--config", ablate.config, "run config JSON")->check(CLI::ExistingFile);
    sc_ablate->add_option("--override", ablate.overrides, "config override (repeatable)");
    sc_ablate->add_option("--seed", ablate.seed, "random seed");
    sc_ablate->add_flag("--force", ablate.force, "overwrite a non-empty --out");

    ExplainArgs explain;
    auto* sc_explain = app.add_subcommand("explain", "occlusion / Grad-CAM heatmaps for one case");
    sc_explain->add_option("--checkpoint", explain.checkpoint, "model checkpoint")->required();
    sc_explain->add_option("--manifest", explain.manifest, "manifest CSV")->required();
    sc_explain->add_option("--case", explain.case_id, "case id")->required();
    sc_explain->add_option("--method", explain.method, "occlusion|gradcam");
    sc_explain->add_option("--out", explain.out, "output directory")->required();
    sc_explain->add_option("--layer", explain.layer, "gradcam layer: x1..x4, cmd_t2, cmd_flair");
    sc_explain->add_option("--patch", explain.patch, "occlusion patch edge, voxels");
    sc_explain->add_option("--stride", explain.stride, "occlusion stride, voxels");
    sc_explain->add_option("--fill", explain.fill, "occlusion fill value");
    sc_explain->add_option("--class", explain.target_class, "target class (-1: predicted)");
    sc_explain->add_option("--alpha", explain.alpha, "overlay alpha for the PNG montage");
    sc_explain->add_flag("--force", explain.force, "overwrite a non-empty --out");

    ReportArgs report;
    auto* sc_report = app.add_subcommand("report", "aggregate a run directory into CSV/JSON tables");
    sc_report->add_option("--runs", report.runs, "run directory from `train`")->required();
    sc_report->add_option("--out", report.out, "output directory")->required();
    sc_report->add_flag("--force", report.force, "overwrite a non-empty --out");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (sc_phantom->parsed()) return cmd_phantom(phantom);
        if (sc_train->parsed()) {
            train.seed_given = sc_train->count("--seed") > 0;
            return cmd_train(train);
        }
        if (sc_eval->parsed()) return cmd_eval(eval);
        if (sc_ablate->parsed()) {
            ablate.seed_given = sc_ablate->count("--seed") > 0;
            return cmd_ablate(ablate);
        }
        if (sc_explain->parsed()) return cmd_explain(explain);
        if (sc_report->parsed()) return cmd_report(report);
        std::cerr << "error: no subcommand\n";
        return kExitUsage;
    } catch (const ConfigError& e) {  // includes EligibilityError
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const PhantomSpecError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ManifestError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const Error& e) {  // Case/Io/Data/Label/Domain/Degenerate/Shape...
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return kExitInternal;
    }
}

}  // namespace mts
