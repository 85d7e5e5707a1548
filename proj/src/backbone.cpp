#include "mts/backbone.hpp"

#include "mts/errors.hpp"

namespace mts {

void BackboneConfig::validate() const {
    if (base_channels < 1) throw ConfigError("backbone: base_channels must be >= 1");
    if (in_channels < 1) throw ConfigError("backbone: in_channels must be >= 1");
    for (int64_t d : input_size)
        if (d <= 0 || d % 16 != 0)
            throw ConfigError("backbone: input dims must be positive multiples of 16, got " + std::to_string(d));
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("backbone: dropout_rate must be in [0, 1)");
    if (seg_channels != 2 && seg_channels != 4) throw ConfigError("backbone: seg_channels must be 2 or 4");
    if (blocks_per_stage < 1) throw ConfigError("backbone: blocks_per_stage must be >= 1");
}

Backbone::Backbone(BackboneConfig cfg, Rng& rng) : cfg_(cfg) {
    cfg_.validate();
    int64_t prev = cfg_.in_channels;
    for (int stage = 1; stage <= 4; ++stage) {
        const int64_t ch = cfg_.stage_channels(stage);
        enc_.push_back(std::make_unique<nn::Conv3d>(prev, ch, 3, 2, 1, rng));
        register_child("enc" + std::to_string(stage) + ".0", enc_.back().get());
        for (int b = 1; b < cfg_.blocks_per_stage; ++b) {
            enc_.push_back(std::make_unique<nn::Conv3d>(ch, ch, 3, 1, 1, rng));
            register_child("enc" + std::to_string(stage) + "." + std::to_string(b), enc_.back().get());
        }
        prev = ch;
    }
    for (int stage = 3; stage >= 1; --stage) {
        const int64_t ch = cfg_.stage_channels(stage);
        dec_.push_back(std::make_unique<nn::Conv3d>(2 * ch + ch, ch, 3, 1, 1, rng));
        register_child("dec" + std::to_string(stage), dec_.back().get());
    }
    seg_head_ = std::make_unique<nn::Conv3d>(cfg_.base_channels, cfg_.seg_channels, 1, 1, 0, rng);
    register_child("seg_head", seg_head_.get());
}

FeaturePyramid Backbone::encode(const ad::Var& batch) const {
    const Shape& s = batch.shape();
    if (s.size() != 5) throw ShapeError("encode: expected (B, C, D, H, W), got " + shape_str(s));
    if (s[1] != cfg_.in_channels)
        throw ShapeError("encode: channel count " + std::to_string(s[1]) + " != config in_channels " +
                         std::to_string(cfg_.in_channels));
    for (int i = 2; i < 5; ++i)
        if (s[size_t(i)] % 16 != 0)
            throw ShapeError("encode: spatial dim " + std::to_string(s[size_t(i)]) + " not divisible by 16");

    FeaturePyramid p;
    ad::Var y = batch;
    size_t conv = 0;
    for (int stage = 1; stage <= 4; ++stage) {
        y = ad::softplus(enc_[conv++]->forward(y));
        for (int b = 1; b < cfg_.blocks_per_stage; ++b) y = ad::softplus(enc_[conv++]->forward(y));
        p.stages[size_t(stage - 1)] = y;
    }
    return p;
}

ad::Var Backbone::decode(const FeaturePyramid& pyramid) const {
    for (int stage = 1; stage <= 4; ++stage) {
        const ad::Var& x = pyramid.x(stage);
        if (!x.defined() || x.shape().size() != 5 || x.dim(1) != cfg_.stage_channels(stage))
            throw ShapeError("decode: pyramid stage " + std::to_string(stage) + " does not match config (C=" +
                             std::to_string(cfg_.base_channels) + ")");
    }
    ad::Var y = pyramid.x(4);
    for (int stage = 3; stage >= 1; --stage)
        y = ad::softplus(dec_[size_t(3 - stage)]->forward(ad::concat_axis1({ad::upsample2(y), pyramid.x(stage)})));
    return seg_head_->forward(ad::upsample2(y));
}

ad::Var Backbone::tumor_probability(const ad::Var& seg_logits) const {
    // softmax channels sum to 1, so foreground probability = 1 - p(background)
    const ad::Var probs = ad::softmax_axis1(seg_logits);
    return ad::affine(ad::slice_axis1(probs, 0, 1), -1.0, 1.0);
}

std::vector<int> mask_to_targets(const MaskVolume& mask, int64_t seg_channels) {
    std::vector<int> out(mask.labels.size());
    for (size_t i = 0; i < mask.labels.size(); ++i) {
        const int32_t v = mask.labels[i];
        if (v < 0 || v > 3) throw LabelError("mask label " + std::to_string(v) + " outside declared set");
        out[i] = seg_channels == 2 ? (v != 0 ? 1 : 0) : int(v);
    }
    return out;
}

ad::Var seg_loss(const ad::Var& seg_logits, const std::vector<int>& voxel_targets) {
    return ad::soft_dice_loss(ad::softmax_axis1(seg_logits), voxel_targets, kDiceEps);
}

}  // namespace mts
