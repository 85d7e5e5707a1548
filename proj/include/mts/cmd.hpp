#pragma once

#include <memory>

#include "mts/nn.hpp"

namespace mts {

struct CmdConfig {
    double gamma = 2.0;      // difference amplification, > 1
    double min_gate = 0.1;   // lower bound of the tumor gate
    int64_t channels = 16;   // feature channels per modality stem
    bool detach_gate = true; // stop gradients flowing from the gate into the decoder

    void validate() const;
    bool operator==(const CmdConfig&) const = default;
};

// gated = input * G(P) with G(P) = min_gate + (1 - min_gate) * P, so the gate
// never fully suppresses a voxel. P must lie in [0, 1].
std::pair<ad::Var, ad::Var> gate_inputs(const ad::Var& t2, const ad::Var& flair,
                                        const ad::Var& tumor_prob, double min_gate);

// F_diff = gamma * (F_T2 - F_FLAIR), gamma > 1
ad::Var amplify_difference(const ad::Var& f_t2, const ad::Var& f_flair, double gamma);

// F' = F + A (x) F
ad::Var augment_features(const ad::Var& features, const ad::Var& attention);

// Cross-Modality Differential pipeline: separate stride-2 stems per modality,
// amplified differencing, channel-pooled sigmoid attention, weighted feature
// augmentation, and a pooled classification head.
class CmdModule : public nn::Module {
public:
    CmdModule(CmdConfig cfg, double dropout, Rng& rng);

    struct Outputs {
        ad::Var f_t2, f_flair;      // stem features, (B, k, D/2, H/2, W/2)
        ad::Var f_diff;             // amplified difference
        ad::Var attention;          // (B, 1, D', H', W'), values in (0, 1)
        ad::Var f_t2_aug, f_flair_aug;
        ad::Var pooled;             // (B, 2k)
        ad::Var logits;             // (B, 2)
    };

    // t2/flair: (B, 1, D, H, W); tumor_prob: (B, 1, D, H, W) in [0, 1]
    Outputs forward(const ad::Var& t2, const ad::Var& flair, const ad::Var& tumor_prob,
                    bool training, Rng& rng) const;

    // attention map alone, for tests and explainability
    ad::Var mismatch_attention(const ad::Var& f_diff) const;

    std::pair<ad::Var, ad::Var> extract_modality_features(const ad::Var& t2_gated,
                                                          const ad::Var& flair_gated) const;

    const CmdConfig& config() const { return cfg_; }

private:
    CmdConfig cfg_;
    double dropout_;
    std::unique_ptr<nn::Conv3d> stem_t2_, stem_flair_, attn_conv_;
    std::unique_ptr<nn::Linear> head_;
};

}  // namespace mts
