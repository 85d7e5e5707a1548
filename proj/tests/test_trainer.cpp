#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "mts/phantom.hpp"
#include "mts/trainer.hpp"

using namespace mts;
namespace fs = std::filesystem;

namespace {

std::vector<ManifestEntry> fake_entries(int n_pos, int n_neg) {
    std::vector<ManifestEntry> out;
    for (int i = 0; i < n_pos + n_neg; ++i) {
        ManifestEntry e;
        e.case_id = "case_" + std::to_string(i);
        e.idh = i < n_pos ? Idh::Mutant : Idh::Wildtype;
        e.volume_paths[Modality::T2] = "unused";
        out.push_back(e);
    }
    return out;
}

TrainConfig tiny_train_config(Task task = Task::IDH) {
    TrainConfig cfg;
    cfg.model.backbone.base_channels = 2;
    cfg.model.backbone.in_channels = 4;
    cfg.model.backbone.input_size = {16, 16, 16};
    cfg.model.task = task;
    cfg.model.cmd_enabled = false;
    cfg.model.dsf_enabled = false;
    cfg.model.tafe_enabled = task != Task::Segmentation;
    cfg.max_epochs = 2;
    cfg.batch_size = 2;
    cfg.lr = 1e-3;
    cfg.patience = 5;
    cfg.seed = 7;
    cfg.augment_enabled = false;
    return cfg;
}

}  // namespace

TEST_CASE("split_folds") {
    SUBCASE("10 cases, 5 pos / 5 neg: each fold holds 1+1") {
        const auto plan = split_folds(fake_entries(5, 5), Task::IDH, 5, 3);
        REQUIRE(plan.folds.size() == 5);
        for (int f = 0; f < 5; ++f) {
            CHECK(plan.folds[size_t(f)].size() == 2);
            CHECK(plan.positives_per_fold[size_t(f)] == 1);
        }
    }
    SUBCASE("same seed gives an identical plan; different seed differs") {
        const auto a = split_folds(fake_entries(20, 30), Task::IDH, 5, 11);
        const auto b = split_folds(fake_entries(20, 30), Task::IDH, 5, 11);
        CHECK(a.folds == b.folds);
        const auto c = split_folds(fake_entries(20, 30), Task::IDH, 5, 12);
        CHECK(a.folds != c.folds);
    }
    SUBCASE("100 cases at 30/70: every fold has exactly 6 positives") {
        const auto plan = split_folds(fake_entries(30, 70), Task::IDH, 5, 1);
        for (int f = 0; f < 5; ++f) {
            CHECK(plan.positives_per_fold[size_t(f)] == 6);
            CHECK(plan.folds[size_t(f)].size() == 20);
        }
    }
    SUBCASE("folds partition the eligible set") {
        const auto entries = fake_entries(13, 17);
        const auto plan = split_folds(entries, Task::IDH, 5, 5);
        std::set<std::string> seen;
        size_t total = 0;
        for (const auto& fold : plan.folds) {
            total += fold.size();
            for (const auto& id : fold) CHECK(seen.insert(id).second);  // disjoint
        }
        CHECK(total == entries.size());
    }
    SUBCASE("a class smaller than k triggers StratifyWarning") {
        std::string warning;
        set_warning_handler([&](const std::string& msg) { warning = msg; });
        const auto plan = split_folds(fake_entries(3, 27), Task::IDH, 5, 2);
        CHECK(warning.find("StratifyWarning") != std::string::npos);
        size_t total = 0;
        for (const auto& fold : plan.folds) total += fold.size();
        CHECK(total == 30);
        set_warning_handler({});
    }
    SUBCASE("fewer cases than folds is an error") {
        CHECK_THROWS_AS(split_folds(fake_entries(2, 1), Task::IDH, 5, 0), EligibilityError);
    }
}

TEST_CASE("early stopping policy") {
    SUBCASE("monotonically worsening loss stops exactly at patience+1 epochs") {
        EarlyStopper stopper(5);
        int epochs = 0;
        for (int e = 1; e <= 100; ++e) {
            ++epochs;
            stopper.update(1.0 + 0.1 * e);  // strictly worsening
            if (stopper.should_stop()) break;
        }
        CHECK(epochs == 6);  // best at epoch 1, then patience more
        CHECK(stopper.best_epoch() == 1);
    }
    SUBCASE("improvement resets the counter; best checkpoint precedes every later loss") {
        EarlyStopper stopper(2);
        const std::vector<double> losses{1.0, 0.9, 0.95, 0.85, 0.9, 0.91};
        std::vector<int> bests;
        for (double l : losses) {
            if (stopper.update(l)) bests.push_back(stopper.best_epoch());
            if (stopper.should_stop()) break;
        }
        CHECK(stopper.best_epoch() == 4);
        CHECK(stopper.best_loss() == 0.85);
        CHECK(stopper.should_stop());
        CHECK(stopper.epoch() == 6);
        CHECK(bests == std::vector<int>{1, 2, 4});
    }
    CHECK_THROWS_AS(EarlyStopper(0), ConfigError);
}

TEST_CASE("augmentation") {
    PhantomSpec spec;
    spec.grid = 16;
    spec.core_radius = 3;
    spec.rim_thickness = 1;
    spec.center_jitter = 1;
    const Case c = generate_phantom(spec, 5);

    SUBCASE("flip twice along the same axis restores the original") {
        for (int axis = 0; axis < 3; ++axis) {
            const Volume3D once = flip_volume(c.volume(Modality::T2), axis);
            const Volume3D twice = flip_volume(once, axis);
            REQUIRE(twice.data.data == c.volume(Modality::T2).data.data);
        }
    }
    SUBCASE("mask voxel count is preserved under flips and 90-degree rotations") {
        const int64_t count = c.mask->count(1);
        for (int axis = 0; axis < 3; ++axis) CHECK(flip_mask(*c.mask, axis).count(1) == count);
        CHECK(rotate_mask(*c.mask, {90.0, 0.0, 0.0}).count(1) == count);
        CHECK(rotate_mask(*c.mask, {0.0, 90.0, 0.0}).count(1) == count);
        CHECK(rotate_mask(*c.mask, {0.0, 0.0, 90.0}).count(1) == count);
        CHECK(rotate_mask(*c.mask, {0.0, 0.0, 180.0}).count(1) == count);
    }
    SUBCASE("intensity scaling leaves the mask untouched") {
        AugmentParams p;
        p.enable_flip = p.enable_rotation = p.enable_elastic = false;
        p.intensity_lo = 1.2;
        p.intensity_hi = 1.2;
        const Case out = augment(c, 9, p);
        CHECK(out.mask->labels == c.mask->labels);
        // all volumes scaled by the same factor
        for (Modality m : kAllModalities)
            for (int64_t i = 0; i < 20; ++i)
                REQUIRE(out.volume(m).data[i] == doctest::Approx(1.2 * c.volume(m).data[i]).epsilon(1e-12));
    }
    SUBCASE("deterministic per (case, seed); labels never change") {
        const Case a = augment(c, 33);
        const Case b = augment(c, 33);
        for (Modality m : kAllModalities) REQUIRE(a.volume(m).data.data == b.volume(m).data.data);
        REQUIRE(a.mask->labels == b.mask->labels);
        CHECK(a.idh == c.idh);
        CHECK(a.codel == c.codel);
        CHECK(a.grade == c.grade);
        const Case d = augment(c, 34);
        CHECK(a.volume(Modality::T2).data.data != d.volume(Modality::T2).data.data);
    }
    SUBCASE("elastic displacement stays within the configured magnitude") {
        AugmentParams p;
        p.enable_flip = p.enable_rotation = p.enable_intensity = false;
        p.elastic_magnitude = 2.0;
        const Case out = augment(c, 10, p);
        // the warped mask cannot move labels farther than the displacement cap
        // plus nearest-neighbour rounding; check the lesion is still present
        CHECK(out.mask->count(1) > 0);
        CHECK(double(std::abs(out.mask->count(1) - c.mask->count(1))) <
              0.5 * double(c.mask->count(1)) + 10.0);
    }
}

TEST_CASE("train_fold on a tiny phantom set") {
    const fs::path dir = "/tmp/mts_test_train_fold";
    fs::remove_all(dir);

    PhantomSpec spec;
    spec.grid = 16;
    spec.core_radius = 3;
    spec.rim_thickness = 1;
    spec.center_jitter = 1;
    CaseStore store;
    std::vector<std::string> train_ids, val_ids;
    for (int i = 0; i < 8; ++i) {
        PhantomSpec s = spec;
        s.mismatch = i % 2;
        Case c = generate_phantom(s, uint64_t(100 + i));
        c.id = "p" + std::to_string(i);
        (i < 6 ? train_ids : val_ids).push_back(c.id);
        store.add(std::move(c));
    }

    const TrainConfig cfg = tiny_train_config();
    const RunRecord rec = train_fold(cfg, train_ids, val_ids, store, dir.string());
    CHECK(rec.epochs.size() == 2);
    CHECK(rec.stop_epoch == 2);
    CHECK(rec.best_epoch >= 1);
    CHECK(fs::exists(rec.checkpoint_path));
    CHECK(fs::exists(dir / "history.csv"));

    std::ifstream hist(dir / "history.csv");
    std::string line;
    std::getline(hist, line);
    CHECK(line == "epoch,train_loss,val_loss");
    int rows = 0;
    while (std::getline(hist, line)) rows += !line.empty();
    CHECK(rows == 2);

    SUBCASE("fixed seed reproduces the loss trajectory") {
        fs::remove_all(dir);
        const RunRecord again = train_fold(cfg, train_ids, val_ids, store, dir.string());
        REQUIRE(again.epochs.size() == rec.epochs.size());
        for (size_t e = 0; e < rec.epochs.size(); ++e) {
            REQUIRE(again.epochs[e].train_loss == rec.epochs[e].train_loss);
            REQUIRE(again.epochs[e].val_loss == rec.epochs[e].val_loss);
        }
    }
}

TEST_CASE("ensemble") {
    SUBCASE("mean of probabilities: the five-model hand example gives (0.70, 0.30)") {
        const std::vector<Tensor> probs = {
            Tensor({1, 2}, {0.6, 0.4}), Tensor({1, 2}, {0.8, 0.2}), Tensor({1, 2}, {0.7, 0.3}),
            Tensor({1, 2}, {0.5, 0.5}), Tensor({1, 2}, {0.9, 0.1})};
        const Tensor mean = average_probability_rows(probs);
        CHECK(mean[0] == doctest::Approx(0.70).epsilon(1e-12));
        CHECK(mean[1] == doctest::Approx(0.30).epsilon(1e-12));
        CHECK(mean[0] + mean[1] == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("five identical checkpoints equal the single model") {
        const fs::path dir = "/tmp/mts_test_ensemble";
        fs::remove_all(dir);
        fs::create_directories(dir);

        ModelConfig mc = tiny_train_config().model;
        mc.init_seed = 5;
        MtsModel model(mc);
        const std::string path = (dir / "one.mts").string();
        model.save_checkpoint(path);

        PhantomSpec spec;
        spec.grid = 16;
        spec.core_radius = 3;
        spec.rim_thickness = 1;
        spec.center_jitter = 1;
        const Case c = generate_phantom(spec, 9);

        const std::vector<std::string> five(5, path);
        const ClassificationBundle ens = ensemble_predict(five, c);
        const Batch b = make_batch({&c}, mc);
        Rng rng(0);
        const ClassificationBundle single = model.forward(b, false, rng).bundle();
        CHECK(ens.probabilities[0] == doctest::Approx(single.probabilities[0]).epsilon(1e-12));
        CHECK(ens.probabilities[1] == doctest::Approx(single.probabilities[1]).epsilon(1e-12));
        CHECK(ens.probabilities[0] + ens.probabilities[1] == doctest::Approx(1.0).epsilon(1e-9));
        // softmax of the ensemble "logits" reproduces the mean probabilities
        const Tensor again = softmax_rows(ens.c_final);
        CHECK(again[0] == doctest::Approx(ens.probabilities[0]).epsilon(1e-9));
    }
    SUBCASE("config mismatch across checkpoints is a CheckpointError") {
        const fs::path dir = "/tmp/mts_test_ensemble_mismatch";
        fs::remove_all(dir);
        fs::create_directories(dir);
        ModelConfig mc = tiny_train_config().model;
        MtsModel a(mc);
        a.save_checkpoint((dir / "a.mts").string());
        mc.backbone.base_channels = 4;
        MtsModel b(mc);
        b.save_checkpoint((dir / "b.mts").string());
        CHECK_THROWS_AS(load_ensemble({(dir / "a.mts").string(), (dir / "b.mts").string()}), CheckpointError);
    }
}

TEST_CASE("ablation grids have the expected table layouts") {
    ModelConfig base = tiny_train_config().model;
    base.cmd_enabled = true;
    base.dsf_enabled = true;
    base.cmd.channels = 4;

    SUBCASE("modules: TAFE / CMD / DSF rows") {
        const auto rows = ablation_grid("modules", base);
        REQUIRE(rows.size() == 3);
        CHECK(rows[0].name == "TAFE");
        CHECK(rows[1].name == "CMD");
        CHECK(rows[2].name == "DSF");
        CHECK(rows[0].config.tafe_enabled);
        CHECK_FALSE(rows[0].config.cmd_enabled);
        CHECK_FALSE(rows[1].config.tafe_enabled);
        CHECK(rows[1].config.cmd_enabled);
        CHECK(rows[2].config.dsf_enabled);
    }
    SUBCASE("depth: TAFE-1..4 and SwinT-1..4, SwinT with alpha=0") {
        const auto rows = ablation_grid("depth", base);
        REQUIRE(rows.size() == 8);
        CHECK(rows[0].name == "TAFE-1");
        CHECK(rows[1].name == "SwinT-1");
        CHECK(rows[7].name == "SwinT-4");
        CHECK(rows[0].config.loss.alpha > 0.0);
        CHECK(rows[1].config.loss.alpha == 0.0);
        CHECK(rows[6].config.tafe_stages.stages == std::vector<int>{1, 2, 3, 4});
        for (const auto& r : rows) {
            CHECK_FALSE(r.config.cmd_enabled);
            CHECK_FALSE(r.config.dsf_enabled);
        }
    }
    SUBCASE("sequences: 6 combinations x {TAFE, DSF}") {
        const auto rows = ablation_grid("sequences", base);
        REQUIRE(rows.size() == 12);
        CHECK(rows[0].group == "T1+T2");
        CHECK(rows[0].variant == "TAFE");
        CHECK(rows[1].variant == "DSF");
        CHECK(rows[10].group == "T1+T1C+T2+FLAIR");
        CHECK(rows[0].config.modalities.size() == 2);
        CHECK(rows[0].config.backbone.in_channels == 2);
        CHECK(rows[1].config.cmd_enabled);
    }
    SUBCASE("unknown grid is a ConfigError") {
        CHECK_THROWS_AS(ablation_grid("bogus", base), ConfigError);
    }
}

TEST_CASE("cross-validation writes fold dirs, reports, and partitions correctly") {
    const fs::path data_dir = "/tmp/mts_test_cv_data";
    const fs::path run_dir = "/tmp/mts_test_cv_run";
    fs::remove_all(data_dir);
    fs::remove_all(run_dir);

    PhantomSpec spec;
    spec.grid = 16;
    spec.core_radius = 3;
    spec.rim_thickness = 1;
    spec.center_jitter = 1;
    const Manifest manifest = write_phantom_dataset(spec, 10, 3, data_dir.string());

    TrainConfig cfg = tiny_train_config();
    cfg.max_epochs = 1;
    const CvResult cv = train_cross_validation(cfg, manifest, run_dir.string());
    CHECK(cv.records.size() == 5);
    CHECK(cv.checkpoints.size() == 5);
    for (int f = 1; f <= 5; ++f) {
        CHECK(fs::exists(run_dir / ("fold" + std::to_string(f)) / "checkpoint.mts"));
        CHECK(fs::exists(run_dir / ("fold" + std::to_string(f)) / "history.csv"));
    }
    CHECK(fs::exists(run_dir / "report.csv"));
    CHECK(fs::exists(run_dir / "report.json"));
    // stratified: one mismatch and one non-mismatch per fold
    for (const auto& pos : cv.plan.positives_per_fold) CHECK(pos == 1);

    SUBCASE("missing modality requirement raises EligibilityError") {
        TrainConfig strict = cfg;
        // manifests provide all four; demand a task with labels absent instead
        Manifest unlabeled = manifest;
        for (auto& e : unlabeled.entries) e.idh = Idh::Unknown;
        CHECK_THROWS_AS(train_cross_validation(strict, unlabeled, (run_dir / "x").string()),
                        EligibilityError);
    }
}

TEST_CASE("sequences ablation CSV pivots to 6 rows x {TAFE, DSF} column groups") {
    ModelConfig base = tiny_train_config().model;
    base.cmd_enabled = true;
    base.dsf_enabled = true;
    base.cmd.channels = 4;
    const auto rows = ablation_grid("sequences", base);
    std::vector<AblationResult> results;
    for (size_t i = 0; i < rows.size(); ++i) {
        AblationResult r{rows[i], {}};
        r.test_report.fold_names = {"fold1", "fold2"};
        for (const char* m : {"ACC", "F1", "MCC", "AUC"})
            r.test_report.set(m, {0.5 + 0.01 * double(i), 0.6 + 0.01 * double(i)});
        results.push_back(std::move(r));
    }
    const std::string path = "/tmp/mts_test_sequences.csv";
    write_ablation_csv("sequences", results, path);
    std::ifstream in(path);
    std::string header;
    std::getline(in, header);
    CHECK(header.find("TAFE_AUC_mean") != std::string::npos);
    CHECK(header.find("DSF_AUC_mean") != std::string::npos);
    int rows_n = 0;
    std::string line;
    while (std::getline(in, line)) rows_n += !line.empty();
    CHECK(rows_n == 6);
    write_ablation_json("sequences", results, "/tmp/mts_test_sequences.json");
    CHECK(fs::file_size("/tmp/mts_test_sequences.json") > 100);
}
