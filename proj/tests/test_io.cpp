#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "mts/manifest.hpp"
#include "mts/nifti.hpp"
#include "mts/pngio.hpp"
#include "mts/rng.hpp"
#include "mts/runconfig.hpp"

using namespace mts;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = "/tmp/mts_test_io";

std::vector<unsigned char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("nifti volume round trip (.nii and .nii.gz)") {
    fs::create_directories(kDir);
    Rng rng(4);
    Volume3D v(Tensor({5, 6, 7}), {2.0, 1.5, 1.0}, Modality::FLAIR);
    for (double& x : v.data.data) x = rng.normal();

    for (const char* name : {"vol.nii", "vol.nii.gz"}) {
        const std::string path = (kDir / name).string();
        write_nifti(v, path);
        const Volume3D back = read_volume_nifti(path, Modality::FLAIR);
        REQUIRE(back.shape() == v.shape());
        CHECK(back.spacing[0] == doctest::Approx(2.0));
        CHECK(back.spacing[1] == doctest::Approx(1.5));
        CHECK(back.spacing[2] == doctest::Approx(1.0));
        for (int64_t i = 0; i < v.numel(); ++i)
            REQUIRE(back.data[i] == doctest::Approx(v.data[i]).epsilon(1e-6));  // float32 storage
    }
}

TEST_CASE("nifti mask round trip is exact") {
    fs::create_directories(kDir);
    MaskVolume m(Shape{4, 5, 6}, {1.0, 1.0, 2.0});
    Rng rng(5);
    for (auto& l : m.labels) l = int32_t(rng.uniform_int(4));
    const std::string path = (kDir / "mask.nii.gz").string();
    write_nifti(m, path);
    const MaskVolume back = read_mask_nifti(path);
    REQUIRE(back.shape == m.shape);
    CHECK(back.labels == m.labels);
}

TEST_CASE("nifti writes are byte-deterministic") {
    fs::create_directories(kDir);
    Volume3D v(Tensor({4, 4, 4}), {1, 1, 1}, Modality::T1);
    Rng rng(6);
    for (double& x : v.data.data) x = rng.normal();
    write_nifti(v, (kDir / "det_a.nii.gz").string());
    write_nifti(v, (kDir / "det_b.nii.gz").string());
    CHECK(slurp((kDir / "det_a.nii.gz").string()) == slurp((kDir / "det_b.nii.gz").string()));
}

TEST_CASE("nifti error paths") {
    fs::create_directories(kDir);
    SUBCASE("missing file") {
        CHECK_THROWS_AS(read_volume_nifti((kDir / "missing.nii").string(), Modality::T1), IoError);
    }
    SUBCASE("not a nifti") {
        const std::string path = (kDir / "junk.nii").string();
        std::ofstream(path) << "this is not a nifti file at all, padding padding padding "
                            << std::string(400, 'x');
        CHECK_THROWS_AS(read_volume_nifti(path, Modality::T1), IoError);
    }
    SUBCASE("float file rejected as mask") {
        Volume3D v(Tensor({3, 3, 3}), {1, 1, 1}, Modality::T1);
        const std::string path = (kDir / "float.nii").string();
        write_nifti(v, path);
        CHECK_THROWS_AS(read_mask_nifti(path), IoError);
    }
}

TEST_CASE("png writer emits a valid signature and plausible size") {
    fs::create_directories(kDir);
    const std::string path = (kDir / "out.png").string();
    std::vector<uint8_t> rgb(16 * 8 * 3, 128);
    write_png_rgb(path, 16, 8, rgb);
    const auto bytes = slurp(path);
    REQUIRE(bytes.size() > 40);
    const uint8_t sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
    for (int i = 0; i < 8; ++i) REQUIRE(bytes[size_t(i)] == sig[i]);
    CHECK(std::equal(bytes.end() - 8, bytes.end() - 4, "IEND"));
}

TEST_CASE("heatmap montage") {
    fs::create_directories(kDir);
    Tensor base({8, 8, 8});
    Tensor heat({8, 8, 8});
    Rng rng(7);
    for (double& x : base.data) x = rng.normal();
    heat[8 * 8 * 4 + 8 * 4 + 4] = 1.0;
    const std::string path = (kDir / "montage.png").string();
    write_heatmap_montage(base, heat, path, 0.5);
    CHECK(fs::file_size(path) > 100);
}

TEST_CASE("run config: defaults, file merge, overrides, unknown keys") {
    fs::create_directories(kDir);
    SUBCASE("defaults parse into a valid TrainConfig") {
        const auto cfg = train_config_from_json(default_run_config());
        CHECK(cfg.model.backbone.base_channels == 8);
        CHECK(cfg.lr == doctest::Approx(1e-4));
        CHECK(cfg.patience == 5);
        CHECK(cfg.batch_size == 2);
        CHECK(cfg.max_epochs == 100);
        CHECK(cfg.model.task == Task::IDH);
        CHECK(cfg.model.dsf_enabled);
    }
    SUBCASE("user file merges over defaults") {
        const std::string path = (kDir / "cfg.json").string();
        std::ofstream(path) << R"({"model": {"base_channels": 4}, "train": {"epochs": 7}})";
        const auto j = load_run_config(path);
        const auto cfg = train_config_from_json(j);
        CHECK(cfg.model.backbone.base_channels == 4);
        CHECK(cfg.max_epochs == 7);
        CHECK(cfg.patience == 5);  // untouched default
    }
    SUBCASE("unknown keys are rejected with their paths") {
        const std::string path = (kDir / "bad.json").string();
        std::ofstream(path) << R"({"model": {"base_chanels": 4}})";
        try {
            load_run_config(path);
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("model.base_chanels") != std::string::npos);
        }
    }
    SUBCASE("overrides are typed against the defaults") {
        auto j = default_run_config();
        apply_override(j, "loss.alpha=0");
        apply_override(j, "cmd.enabled=false");
        apply_override(j, "dsf.enabled=false");
        apply_override(j, "train.epochs=3");
        const auto cfg = train_config_from_json(j);
        CHECK(cfg.model.loss.alpha == 0.0);
        CHECK_FALSE(cfg.model.cmd_enabled);
        CHECK(cfg.max_epochs == 3);
        CHECK_THROWS_AS(apply_override(j, "no.such.key=1"), ConfigError);
        CHECK_THROWS_AS(apply_override(j, "train.epochs=notanumber"), ConfigError);
        CHECK_THROWS_AS(apply_override(j, "malformed"), ConfigError);
    }
    SUBCASE("schema version is enforced") {
        const std::string path = (kDir / "schema.json").string();
        std::ofstream(path) << R"({"schema_version": 99})";
        CHECK_THROWS_AS(load_run_config(path), ConfigError);
    }
}

TEST_CASE("MTSUNET_CACHE round-trips preprocessed cases") {
    const fs::path dir = kDir / "cache_test";
    fs::remove_all(dir);
    fs::create_directories(dir / "cache");

    Volume3D v(Tensor({12, 12, 12}), {1, 1, 1}, Modality::T2);
    Rng rng(8);
    for (double& x : v.data.data) x = rng.normal();
    write_nifti(v, (dir / "t2.nii.gz").string());

    ManifestEntry e;
    e.case_id = "cached";
    e.volume_paths[Modality::T2] = (dir / "t2.nii.gz").string();

    setenv("MTSUNET_CACHE", (dir / "cache").string().c_str(), 1);
    const Case first = load_case(e, {16, 16, 16});
    bool cache_file_seen = false;
    for (const auto& f : fs::directory_iterator(dir / "cache"))
        cache_file_seen = cache_file_seen || f.path().extension() == ".case";
    const Case second = load_case(e, {16, 16, 16});
    unsetenv("MTSUNET_CACHE");

    CHECK(cache_file_seen);
    REQUIRE(second.volumes.size() == 1);
    CHECK(second.volume(Modality::T2).data.data == first.volume(Modality::T2).data.data);
    // without the env var the same load still works (no cache involvement)
    const Case third = load_case(e, {16, 16, 16});
    CHECK(third.volume(Modality::T2).data.data == first.volume(Modality::T2).data.data);
}
