#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "mts/cli.hpp"
#include "mts/metrics.hpp"
#include "mts/nifti.hpp"

using namespace mts;
namespace fs = std::filesystem;

namespace {

int cli(std::vector<std::string> args) {
    std::vector<const char*> argv{"mtsunet"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(int(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int count_lines(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    int n = 0;
    while (std::getline(in, line)) n += !line.empty();
    return n;
}

const fs::path kRoot = "/tmp/mts_test_cli";

// shared tiny dataset + one trained run, built once
struct Fixture {
    fs::path data = kRoot / "data";
    fs::path run = kRoot / "run";

    Fixture() {
        if (fs::exists(kRoot / ".ready")) return;
        fs::remove_all(kRoot);
        fs::create_directories(kRoot);
        REQUIRE(cli({"phantom", "--n", "10", "--out", data.string(), "--seed", "1", "--size", "16",
                     "--core-radius", "3", "--rim", "1"}) == 0);
        REQUIRE(cli({"train", "--manifest", (data / "manifest.csv").string(), "--out", run.string(),
                     "--task", "idh", "--override", "model.base_channels=2",
                     "--override", "model.input_size=[16,16,16]", "--override", "cmd.channels=4",
                     "--override", "train.epochs=2", "--override", "train.lr=0.001"}) == 0);
        std::ofstream(kRoot / ".ready") << "ok";
    }
};

std::string fold_checkpoints(const fs::path& run, int n = 5) {
    std::string joined;
    for (int f = 1; f <= n; ++f)
        joined += (f > 1 ? "," : "") + (run / ("fold" + std::to_string(f)) / "checkpoint.mts").string();
    return joined;
}

}  // namespace

TEST_CASE("phantom subcommand") {
    Fixture fx;
    SUBCASE("writes n case dirs and a manifest with n rows") {
        int dirs = 0;
        for (const auto& e : fs::directory_iterator(fx.data)) dirs += e.is_directory();
        CHECK(dirs == 10);
        CHECK(count_lines(fx.data / "manifest.csv") == 11);  // header + 10
    }
    SUBCASE("rerun with the same seed gives identical manifest bytes") {
        const fs::path alt = kRoot / "data2";
        fs::remove_all(alt);
        REQUIRE(cli({"phantom", "--n", "10", "--out", alt.string(), "--seed", "1", "--size", "16",
                     "--core-radius", "3", "--rim", "1"}) == 0);
        CHECK(slurp(alt / "manifest.csv") == slurp(fx.data / "manifest.csv"));
        // and identical volume payloads
        CHECK(slurp(alt / "phantom_0000" / "t2.nii.gz") == slurp(fx.data / "phantom_0000" / "t2.nii.gz"));
    }
    SUBCASE("n=0 exits 2 with 'nothing to generate'") {
        CHECK(cli({"phantom", "--n", "0", "--out", (kRoot / "none").string()}) == 2);
    }
    SUBCASE("refuses to overwrite a non-empty --out unless --force") {
        CHECK(cli({"phantom", "--n", "2", "--out", fx.data.string(), "--size", "16", "--core-radius", "3",
                   "--rim", "1"}) == 2);
        const fs::path f = kRoot / "forced";
        fs::remove_all(f);
        REQUIRE(cli({"phantom", "--n", "2", "--out", f.string(), "--size", "16", "--core-radius", "3",
                     "--rim", "1"}) == 0);
        CHECK(cli({"phantom", "--n", "2", "--out", f.string(), "--size", "16", "--core-radius", "3", "--rim",
                   "1", "--force"}) == 0);
    }
}

TEST_CASE("train subcommand") {
    Fixture fx;
    SUBCASE("produces 5 fold dirs and a report with 5 fold rows plus mean/std") {
        for (int f = 1; f <= 5; ++f) {
            CHECK(fs::exists(fx.run / ("fold" + std::to_string(f)) / "checkpoint.mts"));
            CHECK(fs::exists(fx.run / ("fold" + std::to_string(f)) / "history.csv"));
        }
        CHECK(count_lines(fx.run / "report.csv") == 8);  // header + 5 folds + mean + std
        CHECK(fs::exists(fx.run / "report.json"));
        CHECK(fs::exists(fx.run / "run.json"));
    }
    SUBCASE("IDH task on a manifest lacking FLAIR exits 2 citing eligibility") {
        const fs::path broken = kRoot / "noflair";
        fs::remove_all(broken);
        fs::create_directories(broken);
        std::ifstream in(fx.data / "manifest.csv");
        std::ofstream out(broken / "manifest.csv");
        std::string line;
        std::getline(in, line);
        out << line << "\n";
        while (std::getline(in, line)) {
            // blank the flair column (index 4)
            std::vector<std::string> cells;
            std::string cell;
            std::istringstream is(line);
            while (std::getline(is, cell, ',')) cells.push_back(cell);
            cells.resize(10);  // keep trailing empty columns
            cells[4].clear();
            for (size_t i = 0; i < cells.size(); ++i) {
                // volume paths are relative to the original manifest dir
                if (i >= 1 && i <= 5 && !cells[i].empty()) cells[i] = (fx.data / cells[i]).string();
                out << (i ? "," : "") << cells[i];
            }
            out << "\n";
        }
        out.close();
        CHECK(cli({"train", "--manifest", (broken / "manifest.csv").string(), "--out",
                   (kRoot / "run_noflair").string(), "--task", "idh", "--override",
                   "model.base_channels=2", "--override", "model.input_size=[16,16,16]", "--override",
                   "train.epochs=1"}) == 2);
    }
    SUBCASE("alpha=0 override marks SwinT mode in the run record") {
        const fs::path run2 = kRoot / "run_swint";
        fs::remove_all(run2);
        REQUIRE(cli({"train", "--manifest", (fx.data / "manifest.csv").string(), "--out", run2.string(),
                     "--task", "idh", "--override", "model.base_channels=2", "--override",
                     "model.input_size=[16,16,16]", "--override", "train.epochs=1", "--override",
                     "loss.alpha=0", "--override", "cmd.enabled=false", "--override",
                     "dsf.enabled=false"}) == 0);
        const std::string run_json = slurp(run2 / "run.json");
        CHECK(run_json.find("\"swint_mode\": true") != std::string::npos);
    }
    SUBCASE("config validation failures exit 2 listing the offending key") {
        CHECK(cli({"train", "--manifest", (fx.data / "manifest.csv").string(), "--out",
                   (kRoot / "run_bad").string(), "--override", "no.such=1"}) == 2);
    }
}

TEST_CASE("eval subcommand") {
    Fixture fx;
    SUBCASE("five checkpoints produce an ensemble column") {
        const fs::path out = kRoot / "eval5";
        fs::remove_all(out);
        REQUIRE(cli({"eval", "--checkpoints", fold_checkpoints(fx.run), "--manifest",
                     (fx.data / "manifest.csv").string(), "--task", "idh", "--out", out.string()}) == 0);
        const std::string pred = slurp(out / "predictions.csv");
        CHECK(pred.find("ensemble_p1") != std::string::npos);
        CHECK(pred.find("model5_p1") != std::string::npos);
        const std::string report = slurp(out / "report.csv");
        CHECK(report.find("AUC_CI_low") != std::string::npos);
        CHECK(count_lines(out / "predictions.csv") == 11);
    }
    SUBCASE("a single checkpoint omits the ensemble column and warns") {
        const fs::path out = kRoot / "eval1";
        fs::remove_all(out);
        std::string warning;
        set_warning_handler([&](const std::string& msg) { warning += msg; });
        REQUIRE(cli({"eval", "--checkpoints", fold_checkpoints(fx.run, 1), "--manifest",
                     (fx.data / "manifest.csv").string(), "--task", "idh", "--out", out.string()}) == 0);
        set_warning_handler({});
        CHECK(slurp(out / "predictions.csv").find("ensemble_p1") == std::string::npos);
        CHECK(warning.find("single checkpoint") != std::string::npos);
    }
    SUBCASE("missing checkpoint exits 2") {
        CHECK(cli({"eval", "--checkpoints", "/nope/missing.mts", "--manifest",
                   (fx.data / "manifest.csv").string(), "--out", (kRoot / "evalx").string()}) == 2);
    }
}

TEST_CASE("segmentation train + eval emit Dice/HD/IoU columns") {
    Fixture fx;
    const fs::path run = kRoot / "run_seg";
    if (!fs::exists(run))
        REQUIRE(cli({"train", "--manifest", (fx.data / "manifest.csv").string(), "--out", run.string(),
                     "--task", "segmentation", "--override", "model.base_channels=2", "--override",
                     "model.input_size=[16,16,16]", "--override", "train.epochs=1"}) == 0);
    const std::string report = slurp(run / "report.csv");
    CHECK(report.find("Dice") != std::string::npos);
    CHECK(report.find("IoU") != std::string::npos);
    CHECK(report.find("Hausdorff") != std::string::npos);

    const fs::path out = kRoot / "eval_seg";
    fs::remove_all(out);
    REQUIRE(cli({"eval", "--checkpoints", fold_checkpoints(run, 2), "--manifest",
                 (fx.data / "manifest.csv").string(), "--task", "segmentation", "--out", out.string()}) == 0);
    const std::string pred = slurp(out / "predictions.csv");
    CHECK(pred.find("Dice_WT") != std::string::npos);
    CHECK(pred.find("IoU_WT") != std::string::npos);
    CHECK(pred.find("HD_WT") != std::string::npos);
}

TEST_CASE("explain subcommand") {
    Fixture fx;
    const std::string ckpt = (fx.run / "fold1" / "checkpoint.mts").string();
    SUBCASE("occlusion writes NIfTI + PNG") {
        const fs::path out = kRoot / "explain_occ";
        fs::remove_all(out);
        REQUIRE(cli({"explain", "--checkpoint", ckpt, "--manifest", (fx.data / "manifest.csv").string(),
                     "--case", "phantom_0001", "--method", "occlusion", "--patch", "8", "--stride", "8",
                     "--out", out.string()}) == 0);
        CHECK(fs::exists(out / "phantom_0001_occlusion.nii.gz"));
        CHECK(fs::exists(out / "phantom_0001_occlusion.png"));
    }
    SUBCASE("gradcam map is normalized into [0,1]") {
        const fs::path out = kRoot / "explain_cam";
        fs::remove_all(out);
        REQUIRE(cli({"explain", "--checkpoint", ckpt, "--manifest", (fx.data / "manifest.csv").string(),
                     "--case", "phantom_0001", "--method", "gradcam", "--layer", "x4", "--out",
                     out.string()}) == 0);
        const Volume3D heat = read_volume_nifti((out / "phantom_0001_gradcam.nii.gz").string(), Modality::T1);
        CHECK(heat.data.min() >= 0.0);
        CHECK(heat.data.max() <= 1.0 + 1e-6);
    }
    SUBCASE("missing case exits 2 with the id") {
        CHECK(cli({"explain", "--checkpoint", ckpt, "--manifest", (fx.data / "manifest.csv").string(),
                   "--case", "ghost", "--method", "occlusion", "--out", (kRoot / "explain_x").string()}) == 2);
    }
    SUBCASE("unknown method exits 2") {
        CHECK(cli({"explain", "--checkpoint", ckpt, "--manifest", (fx.data / "manifest.csv").string(),
                   "--case", "phantom_0001", "--method", "shap", "--out",
                   (kRoot / "explain_y").string()}) == 2);
    }
}

TEST_CASE("report subcommand aggregates a run directory") {
    Fixture fx;
    const fs::path out = kRoot / "report_out";
    fs::remove_all(out);
    REQUIRE(cli({"report", "--runs", fx.run.string(), "--out", out.string()}) == 0);
    CHECK(fs::exists(out / "report.csv"));
    CHECK(fs::exists(out / "report.json"));
    CHECK(count_lines(out / "folds.csv") == 6);  // header + 5 folds
}

TEST_CASE("ablate subcommand: modules grid at toy scale") {
    Fixture fx;
    const fs::path out = kRoot / "ablate_modules";
    fs::remove_all(out);
    REQUIRE(cli({"ablate", "--grid", "modules", "--manifest", (fx.data / "manifest.csv").string(),
                 "--out", out.string(), "--override", "model.base_channels=2", "--override",
                 "model.input_size=[16,16,16]", "--override", "cmd.channels=4", "--override",
                 "train.epochs=1"}) == 0);
    const std::string table = slurp(out / "ablation.csv");
    CHECK(count_lines(out / "ablation.csv") == 4);  // header + TAFE + CMD + DSF
    CHECK(table.find("TAFE") != std::string::npos);
    CHECK(table.find("CMD") != std::string::npos);
    CHECK(table.find("DSF") != std::string::npos);
    CHECK(table.find("AUC_mean") != std::string::npos);
    CHECK(fs::exists(out / "ablation.json"));

    SUBCASE("unknown grid exits 2") {
        CHECK(cli({"ablate", "--grid", "bogus", "--manifest", (fx.data / "manifest.csv").string(), "--out",
                   (kRoot / "ablate_x").string()}) == 2);
    }
}

TEST_CASE("usage errors exit 2") {
    CHECK(cli({"frobnicate"}) == 2);
    CHECK(cli({"train"}) == 2);  // missing required options
}

TEST_CASE("data errors exit 3") {
    Fixture fx;
    const fs::path dir = kRoot / "broken_manifest";
    fs::remove_all(dir);
    fs::create_directories(dir);
    // manifest referencing files that do not exist -> ManifestError -> 3
    std::ofstream(dir / "manifest.csv")
        << "case_id,t1,t1c,t2,flair,mask,idh,codel,grade,split\n"
        << "a,,,ghost_t2.nii.gz,,,mutant,,,train\n";
    CHECK(cli({"train", "--manifest", (dir / "manifest.csv").string(), "--out",
               (kRoot / "run_broken").string(), "--task", "idh"}) == 3);
    // corrupt checkpoint file -> CheckpointError -> 3
    std::ofstream(dir / "bad.mts") << "not a checkpoint";
    CHECK(cli({"eval", "--checkpoints", (dir / "bad.mts").string(), "--manifest",
               (fx.data / "manifest.csv").string(), "--task", "idh", "--out",
               (kRoot / "eval_broken").string()}) == 3);
}
