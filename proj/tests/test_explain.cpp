#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mts/explain.hpp"
#include "mts/phantom.hpp"

using namespace mts;

namespace {

ModelConfig tiny_model_config() {
    ModelConfig mc;
    mc.backbone.base_channels = 2;
    mc.backbone.in_channels = 4;
    mc.backbone.input_size = {16, 16, 16};
    mc.cmd.channels = 4;
    mc.init_seed = 17;
    return mc;
}

// classification heads are zero-initialized; heatmaps need a model whose
// prediction actually depends on the input
void give_heads_weight(MtsModel& model, uint64_t seed) {
    Rng rng(seed);
    for (auto& p : model.parameters())
        if (p.name.rfind("tafe.head", 0) == 0 || p.name == "cmd.head.weight")
            for (double& v : p.var.value().data) v = 0.3 * rng.normal();
}

Case tiny_case(uint64_t seed) {
    PhantomSpec spec;
    spec.grid = 16;
    spec.core_radius = 3;
    spec.rim_thickness = 1;
    spec.center_jitter = 1;
    spec.mismatch = true;
    return generate_phantom(spec, seed);
}

Case zero_case() {
    Case c;
    c.id = "zeros";
    for (Modality m : kAllModalities)
        c.volumes[m] = Volume3D(Tensor({16, 16, 16}), {1, 1, 1}, m);
    return c;
}

}  // namespace

TEST_CASE("occlusion positions cover every voxel when stride <= patch") {
    CHECK(occlusion_positions(16, 8) == 2);
    CHECK(occlusion_positions(16, 5) == 4);   // ceil(16/5)
    CHECK(occlusion_positions(17, 8) == 3);
    // stride = patch: exactly ceil(D/p) positions per axis
    CHECK(occlusion_positions(16, 16) == 1);
}

TEST_CASE("occlusion of an all-zero input with fill 0 is the zero map") {
    MtsModel model(tiny_model_config());
    const Case c = zero_case();
    const Heatmap h = occlusion_map(model, c, {8, 8, 8}, {8, 8, 8}, 0.0);
    REQUIRE(h.values.shape == Shape{16, 16, 16});
    for (double v : h.values.data) REQUIRE(v == 0.0);
    CHECK(h.method == "occlusion");
}

TEST_CASE("occlusion is deterministic and block-constant on the stride grid") {
    MtsModel model(tiny_model_config());
    give_heads_weight(model, 51);
    const Case c = tiny_case(5);
    const Heatmap a = occlusion_map(model, c, {8, 8, 8}, {8, 8, 8}, 0.0);
    const Heatmap b = occlusion_map(model, c, {8, 8, 8}, {8, 8, 8}, 0.0);
    REQUIRE(a.values.data == b.values.data);
    // nearest-neighbour upsampling: 2x2x2 grid of constant blocks
    for (int64_t z = 0; z < 16; ++z)
        for (int64_t y = 0; y < 16; ++y)
            for (int64_t x = 0; x < 16; ++x)
                REQUIRE(a.values[(z * 16 + y) * 16 + x] ==
                        a.values[((z / 8 * 8) * 16 + (y / 8 * 8)) * 16 + (x / 8 * 8)]);
    // some occlusion must change the prediction on a structured input
    double mx = 0.0;
    for (double v : a.values.data) mx = std::max(mx, std::abs(v));
    CHECK(mx > 0.0);
}

TEST_CASE("occlusion patch larger than the volume is a ConfigError") {
    MtsModel model(tiny_model_config());
    const Case c = tiny_case(6);
    CHECK_THROWS_AS(occlusion_map(model, c, {32, 32, 32}, {8, 8, 8}, 0.0), ConfigError);
    CHECK_THROWS_AS(occlusion_map(model, c, {8, 8, 8}, {0, 8, 8}, 0.0), ConfigError);
}

TEST_CASE("gradcam") {
    MtsModel model(tiny_model_config());
    give_heads_weight(model, 52);
    const Case c = tiny_case(7);

    SUBCASE("values lie in [0,1] after max-normalization; deterministic") {
        // a map may be all-zero for a given (layer, class) when the weighted
        // activation sum is negative everywhere; a nonzero map must be
        // normalized so its maximum is exactly 1
        int nonzero_maps = 0;
        for (const char* layer : {"x4", "cmd_t2"}) {
            for (int target : {0, 1}) {
                const Heatmap h = gradcam(model, c, layer, target);
                REQUIRE(h.values.shape == Shape{16, 16, 16});
                double mx = 0.0;
                for (double v : h.values.data) {
                    REQUIRE(v >= 0.0);
                    REQUIRE(v <= 1.0);
                    mx = std::max(mx, v);
                }
                if (mx > 0.0) {
                    ++nonzero_maps;
                    REQUIRE(mx == doctest::Approx(1.0).epsilon(1e-12));
                }
                const Heatmap again = gradcam(model, c, layer, target);
                REQUIRE(h.values.data == again.values.data);
            }
        }
        CHECK(nonzero_maps > 0);
    }
    SUBCASE("every encoder stage and the CMD branches are addressable") {
        for (const char* layer : {"x1", "x2", "x3", "x4", "cmd_t2", "cmd_flair"}) {
            const Heatmap h = gradcam(model, c, layer);
            REQUIRE(h.values.shape == Shape{16, 16, 16});
        }
        CHECK_THROWS_AS(gradcam(model, c, "x9"), ConfigError);
    }
    SUBCASE("a score with zero dependence on the layer yields the all-zero map") {
        // zero the final MLP: the class score is constant, all gradients vanish
        MtsModel frozen(tiny_model_config());
        for (auto& p : frozen.parameters())
            if (p.name.rfind("mlp.", 0) == 0)
                std::fill(p.var.value().data.begin(), p.var.value().data.end(), 0.0);
        const Heatmap h = gradcam(frozen, c, "x4");
        for (double v : h.values.data) REQUIRE(v == 0.0);
    }
    SUBCASE("CMD-layer map on a TAFE-only model is a ConfigError") {
        ModelConfig mc = tiny_model_config();
        mc.cmd_enabled = false;
        mc.dsf_enabled = false;
        MtsModel tafe_only(mc);
        CHECK_THROWS_AS(gradcam(tafe_only, c, "cmd_t2"), ConfigError);
    }
}
