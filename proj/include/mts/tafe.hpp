#pragma once

#include <memory>
#include <string>
#include <vector>

#include "mts/backbone.hpp"
#include "mts/manifest.hpp"

namespace mts {

// Encoder stages whose pooled features feed classification. Presets follow
// the ablation naming: TAFE-1 = {4}, TAFE-2 = {3,4}, TAFE-3 = {2,3,4},
// TAFE-4 = {1,2,3,4}.
struct StageSet {
    std::vector<int> stages;

    StageSet() : stages{3, 4} {}
    explicit StageSet(std::vector<int> s);
    static StageSet preset(const std::string& name);  // accepts "TAFE-n" / "SwinT-n" / "n"
    std::string name() const;
    void validate() const;
    bool operator==(const StageSet&) const = default;
};

// Multi-scale pooled feature vector: GAP per selected stage, concatenated in
// ascending stage order, then per-task linear heads behind dropout.
class TafeModule : public nn::Module {
public:
    TafeModule(const BackboneConfig& backbone, StageSet stages, double dropout, Rng& rng);

    // z = [gap(x_i1), gap(x_i2), ...], length sum of stage channels
    ad::Var fuse_stages(const FeaturePyramid& pyramid) const;
    ad::Var classify(const ad::Var& fused, Task task, bool training, Rng& rng) const;

    const StageSet& stages() const { return stages_; }
    int64_t fused_dim() const { return fused_dim_; }

private:
    StageSet stages_;
    double dropout_;
    int64_t fused_dim_;
    std::unique_ptr<nn::Linear> head_idh_, head_codel_, head_grade_;
};

}  // namespace mts
