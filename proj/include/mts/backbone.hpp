#pragma once

#include <array>
#include <memory>
#include <vector>

#include "mts/nn.hpp"
#include "mts/volume.hpp"

namespace mts {

struct BackboneConfig {
    int64_t in_channels = 4;
    int64_t base_channels = 8;  // C; stage i has C * 2^(i-1) channels
    std::array<int64_t, 3> input_size{96, 96, 96};
    double dropout_rate = 0.5;
    int64_t seg_channels = 2;   // 2 = background/tumor, 4 = background+ET/ED/NCR
    int blocks_per_stage = 1;   // extra stride-1 convs per encoder stage

    void validate() const;
    int64_t stage_channels(int stage) const {  // stage in [1, 4]
        return base_channels << (stage - 1);
    }
    bool operator==(const BackboneConfig&) const = default;
};

// Encoder stage outputs x1..x4; x[i] has C*2^i channels at input/2^(i+1).
struct FeaturePyramid {
    std::array<ad::Var, 4> stages;
    const ad::Var& x(int stage) const { return stages.at(size_t(stage - 1)); }  // stage in [1, 4]
};

// Hierarchical convolutional encoder plus U-Net style decoder satisfying the
// stage shape contract. Stage i halves each spatial dim and doubles channels;
// the decoder walks back up through skip connections to full-resolution
// segmentation logits.
class Backbone : public nn::Module {
public:
    Backbone(BackboneConfig cfg, Rng& rng);

    // batch: (B, in_channels, D, H, W), dims divisible by 16
    FeaturePyramid encode(const ad::Var& batch) const;
    // logits (B, seg_channels, D, H, W)
    ad::Var decode(const FeaturePyramid& pyramid) const;

    // binary tumor probability: 1 - softmax background channel
    ad::Var tumor_probability(const ad::Var& seg_logits) const;

    const BackboneConfig& config() const { return cfg_; }

private:
    BackboneConfig cfg_;
    std::vector<std::unique_ptr<nn::Conv3d>> enc_;   // per stage, blocks_per_stage convs each
    std::vector<std::unique_ptr<nn::Conv3d>> dec_;   // skip-merge convs for stages 3, 2, 1
    std::unique_ptr<nn::Conv3d> seg_head_;           // 1x1x1 conv at full resolution
};

// Converts a mask into per-voxel class targets compatible with seg_channels:
// 2-channel mode binarizes, 4-channel mode keeps subregion labels.
std::vector<int> mask_to_targets(const MaskVolume& mask, int64_t seg_channels);

// Soft Dice loss over softmax(logits), averaged across foreground classes
// and batch items; smoothing epsilon 1e-5 in numerator and denominator.
ad::Var seg_loss(const ad::Var& seg_logits, const std::vector<int>& voxel_targets);

constexpr double kDiceEps = 1e-5;

}  // namespace mts
