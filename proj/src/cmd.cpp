#include "mts/cmd.hpp"

#include "mts/errors.hpp"

namespace mts {

void CmdConfig::validate() const {
    if (!(gamma > 1.0)) throw ConfigError("cmd: amplification factor gamma must be > 1");
    if (!(min_gate > 0.0 && min_gate <= 1.0)) throw ConfigError("cmd: min_gate must be in (0, 1]");
    if (channels < 1) throw ConfigError("cmd: channels must be >= 1");
}

std::pair<ad::Var, ad::Var> gate_inputs(const ad::Var& t2, const ad::Var& flair,
                                        const ad::Var& tumor_prob, double min_gate) {
    if (!(min_gate > 0.0 && min_gate <= 1.0)) throw ConfigError("gate_inputs: min_gate must be in (0, 1]");
    check_same_shape(t2.value(), flair.value(), "gate_inputs");
    for (double v : tumor_prob.value().data)
        if (!(v >= 0.0 && v <= 1.0))
            throw DomainError("gate_inputs: tumor probability " + std::to_string(v) + " outside [0, 1]");
    const ad::Var gate = ad::affine(tumor_prob, 1.0 - min_gate, min_gate);
    return {ad::mul_channel_broadcast(t2, gate), ad::mul_channel_broadcast(flair, gate)};
}

ad::Var amplify_difference(const ad::Var& f_t2, const ad::Var& f_flair, double gamma) {
    if (!(gamma > 1.0)) throw ConfigError("amplify_difference: gamma must be > 1");
    check_same_shape(f_t2.value(), f_flair.value(), "amplify_difference");
    return ad::scale(ad::sub(f_t2, f_flair), gamma);
}

ad::Var augment_features(const ad::Var& features, const ad::Var& attention) {
    return ad::add(features, ad::mul_channel_broadcast(features, attention));
}

CmdModule::CmdModule(CmdConfig cfg, double dropout, Rng& rng) : cfg_(cfg), dropout_(dropout) {
    cfg_.validate();
    // separate parameters per modality branch, initialized equal so the
    // amplified difference starts as a projection of the raw T2-FLAIR
    // contrast rather than of two unrelated random filters; channel 0 is
    // warm-started as an averaging kernel, making F_diff channel 0 the
    // smoothed raw difference itself
    stem_t2_ = std::make_unique<nn::Conv3d>(1, cfg_.channels, 3, 2, 1, rng);
    stem_flair_ = std::make_unique<nn::Conv3d>(1, cfg_.channels, 3, 2, 1, rng);
    {
        auto src = stem_t2_->parameters();
        auto dst = stem_flair_->parameters();
        for (size_t i = 0; i < src.size(); ++i) {
            if (src[i].name == "weight")
                for (int64_t t = 0; t < 27; ++t) src[i].var.value()[t] = 1.0 / 27.0;
            dst[i].var.value().data = src[i].var.value().data;
        }
    }
    attn_conv_ = std::make_unique<nn::Conv3d>(2, 1, 3, 1, 1, rng);
    // orient the attention at init: positive center taps on the pooled
    // channels make A track the difference magnitude (high where the
    // channel max/mean of F_diff is pronounced), and a positive bias keeps
    // the ReLU ahead of the sigmoid alive and trainable everywhere
    for (auto& p : attn_conv_->parameters()) {
        if (p.name == "bias") p.var.value()[0] = 0.25;
        if (p.name == "weight") {
            for (double& v : p.var.value().data) v *= 0.1;
            const int64_t center = (1 * 3 + 1) * 3 + 1;
            p.var.value()[center] = 1.0;        // channel-max input
            p.var.value()[27 + center] = 0.5;   // channel-mean input
        }
    }
    head_ = std::make_unique<nn::Linear>(2 * cfg_.channels, 2, rng, true);
    register_child("stem_t2", stem_t2_.get());
    register_child("stem_flair", stem_flair_.get());
    register_child("attn_conv", attn_conv_.get());
    register_child("head", head_.get());
}

std::pair<ad::Var, ad::Var> CmdModule::extract_modality_features(const ad::Var& t2_gated,
                                                                 const ad::Var& flair_gated) const {
    check_same_shape(t2_gated.value(), flair_gated.value(), "extract_modality_features");
    if (t2_gated.dim(1) != 1) throw ShapeError("extract_modality_features: inputs must be single-channel");
    return {stem_t2_->forward(t2_gated), stem_flair_->forward(flair_gated)};
}

ad::Var CmdModule::mismatch_attention(const ad::Var& f_diff) const {
    const ad::Var pooled = ad::concat_axis1({ad::channel_max(f_diff), ad::channel_mean(f_diff)});
    return ad::sigmoid(ad::relu(attn_conv_->forward(pooled)));
}

CmdModule::Outputs CmdModule::forward(const ad::Var& t2, const ad::Var& flair,
                                      const ad::Var& tumor_prob, bool training, Rng& rng) const {
    Outputs o;
    auto [t2_gated, flair_gated] = gate_inputs(t2, flair, tumor_prob, cfg_.min_gate);
    std::tie(o.f_t2, o.f_flair) = extract_modality_features(t2_gated, flair_gated);
    o.f_diff = amplify_difference(o.f_t2, o.f_flair, cfg_.gamma);
    o.attention = mismatch_attention(o.f_diff);
    o.f_t2_aug = augment_features(o.f_t2, o.attention);
    o.f_flair_aug = augment_features(o.f_flair, o.attention);
    o.pooled = ad::concat_axis1({ad::gap(o.f_t2_aug), ad::gap(o.f_flair_aug)});
    o.logits = head_->forward(ad::dropout(o.pooled, dropout_, training, rng));
    return o;
}

}  // namespace mts
