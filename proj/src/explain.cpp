#include "mts/explain.hpp"

#include <algorithm>
#include <cmath>

#include "mts/kernels.hpp"

namespace mts {

namespace {

double class_probability(const MtsModel& model, const Batch& batch, int target) {
    Rng rng(0);
    const ModelOutput out = model.forward(batch, false, rng);
    return out.bundle().probabilities[target];
}

// occlude the patch in every volume feeding the model (TAFE stack and the
// CMD T2/FLAIR inputs)
Batch occluded_batch(const Batch& base, const ModelConfig& cfg, const Shape& vol,
                     const std::array<int64_t, 3>& start, const std::array<int64_t, 3>& patch, double fill) {
    Batch out = base;
    auto patch_tensor = [&](const ad::Var& src) {
        Tensor t = src.value();
        const int64_t channels = t.dim(1);
        for (int64_t ch = 0; ch < channels; ++ch)
            for (int64_t z = start[0]; z < std::min(vol[0], start[0] + patch[0]); ++z)
                for (int64_t y = start[1]; y < std::min(vol[1], start[1] + patch[1]); ++y) {
                    double* row = t.ptr() + ((ch * vol[0] + z) * vol[1] + y) * vol[2];
                    for (int64_t x = start[2]; x < std::min(vol[2], start[2] + patch[2]); ++x) row[x] = fill;
                }
        return ad::Var(std::move(t));
    };
    out.input = patch_tensor(base.input);
    if (cfg.cmd_enabled) {
        out.t2 = patch_tensor(base.t2);
        out.flair = patch_tensor(base.flair);
    }
    return out;
}

}  // namespace

int64_t occlusion_positions(int64_t extent, int64_t stride) { return (extent + stride - 1) / stride; }

Heatmap occlusion_map(const MtsModel& model, const Case& c, const std::array<int64_t, 3>& patch,
                      const std::array<int64_t, 3>& stride, double fill, int target_class) {
    Batch base = make_batch({&c}, model.config());
    base.seg_targets.clear();  // probabilities only; skip loss work per position
    base.labels.clear();
    const Shape vol{base.input.dim(2), base.input.dim(3), base.input.dim(4)};
    for (int i = 0; i < 3; ++i) {
        if (patch[size_t(i)] <= 0 || stride[size_t(i)] <= 0)
            throw ConfigError("occlusion: patch and stride must be positive");
        if (patch[size_t(i)] > vol[size_t(i)])
            throw ConfigError("occlusion: patch " + std::to_string(patch[size_t(i)]) +
                              " exceeds volume dim " + std::to_string(vol[size_t(i)]));
    }

    Rng rng(0);
    const ModelOutput base_out = model.forward(base, false, rng);
    const ClassificationBundle bundle = base_out.bundle();
    int target = target_class;
    if (target < 0) target = bundle.probabilities[1] >= bundle.probabilities[0] ? 1 : 0;
    const double base_prob = bundle.probabilities[target];

    const int64_t gz = occlusion_positions(vol[0], stride[0]);
    const int64_t gy = occlusion_positions(vol[1], stride[1]);
    const int64_t gx = occlusion_positions(vol[2], stride[2]);
    Tensor grid(Shape{gz, gy, gx});

    // positions are independent forward passes
#pragma omp parallel for collapse(2) schedule(dynamic)
    for (int64_t iz = 0; iz < gz; ++iz)
        for (int64_t iy = 0; iy < gy; ++iy)
            for (int64_t ix = 0; ix < gx; ++ix) {
                const std::array<int64_t, 3> start{iz * stride[0], iy * stride[1], ix * stride[2]};
                const Batch occ = occluded_batch(base, model.config(), vol, start, patch, fill);
                grid[(iz * gy + iy) * gx + ix] = base_prob - class_probability(model, occ, target);
            }

    Heatmap h;
    h.method = "occlusion";
    h.target_class = target;
    h.baseline = base_prob;
    h.values = Tensor(vol);
    for (int64_t z = 0; z < vol[0]; ++z)
        for (int64_t y = 0; y < vol[1]; ++y)
            for (int64_t x = 0; x < vol[2]; ++x) {
                const int64_t iz = std::min(z / stride[0], gz - 1);
                const int64_t iy = std::min(y / stride[1], gy - 1);
                const int64_t ix = std::min(x / stride[2], gx - 1);
                h.values[(z * vol[1] + y) * vol[2] + x] = grid[(iz * gy + iy) * gx + ix];
            }
    return h;
}

Heatmap gradcam(const MtsModel& model, const Case& c, const std::string& layer, int target_class) {
    const Batch batch = make_batch({&c}, model.config());
    Rng rng(0);
    const ModelOutput out = model.forward(batch, false, rng);
    const ClassificationBundle bundle = out.bundle();
    int target = target_class;
    if (target < 0) target = bundle.probabilities[1] >= bundle.probabilities[0] ? 1 : 0;

    ad::Var activation;
    if (layer == "x1" || layer == "x2" || layer == "x3" || layer == "x4")
        activation = out.pyramid.x(layer[1] - '0');
    else if (layer == "cmd_t2")
        activation = out.cmd_features.f_t2_aug;
    else if (layer == "cmd_flair")
        activation = out.cmd_features.f_flair_aug;
    else
        throw ConfigError("gradcam: unknown layer '" + layer + "' (x1..x4, cmd_t2, cmd_flair)");
    if (!activation.defined()) throw ConfigError("gradcam: layer '" + layer + "' is not active in this model");

    const Shape vol{batch.input.dim(2), batch.input.dim(3), batch.input.dim(4)};
    Heatmap h;
    h.method = "gradcam";
    h.layer = layer;
    h.target_class = target;
    h.values = Tensor(vol);

    // class score = target logit; backward fills activation->grad
    ad::backward(ad::slice_axis1(out.final_logits, target, target + 1));
    if (!activation.grad().defined()) return h;  // detached layer: all-zero map

    const Tensor& act = activation.value();
    const Tensor& grad = activation.grad();
    const int64_t channels = act.dim(1);
    const int64_t sp = act.dim(2) * act.dim(3) * act.dim(4);

    // channel weights: GAP of the gradients
    std::vector<double> w(size_t(channels), 0.0);
    for (int64_t ch = 0; ch < channels; ++ch) {
        double acc = 0.0;
        for (int64_t v = 0; v < sp; ++v) acc += grad[ch * sp + v];
        w[size_t(ch)] = acc / double(sp);
    }
    Tensor cam(Shape{act.dim(2), act.dim(3), act.dim(4)});
    for (int64_t v = 0; v < sp; ++v) {
        double acc = 0.0;
        for (int64_t ch = 0; ch < channels; ++ch) acc += w[size_t(ch)] * act[ch * sp + v];
        cam[v] = std::max(0.0, acc);
    }

    // trilinear upsample to voxel space
    double affine[12] = {0};
    for (int i = 0; i < 3; ++i) {
        const double scale = double(cam.shape[size_t(i)]) / double(vol[size_t(i)]);
        affine[i * 4 + i] = scale;
        affine[i * 4 + 3] = 0.5 * scale - 0.5;
    }
    kernels::resample_trilinear(cam.ptr(), cam.shape[0], cam.shape[1], cam.shape[2], h.values.ptr(), vol[0],
                                vol[1], vol[2], affine, nullptr, 0.0);
    for (double& v : h.values.data) v = std::max(0.0, v);

    const double mx = h.values.max();
    if (mx > 0.0)
        for (double& v : h.values.data) v /= mx;
    return h;
}

}  // namespace mts
