#include "mts/tafe.hpp"

#include <algorithm>

#include "mts/errors.hpp"

namespace mts {

StageSet::StageSet(std::vector<int> s) : stages(std::move(s)) { validate(); }

void StageSet::validate() const {
    if (stages.empty()) throw ConfigError("stage set must be nonempty");
    for (size_t i = 0; i < stages.size(); ++i) {
        if (stages[i] < 1 || stages[i] > 4)
            throw ConfigError("stage index " + std::to_string(stages[i]) + " outside 1..4");
        if (i > 0 && stages[i] <= stages[i - 1]) throw ConfigError("stage set must be strictly ascending");
    }
}

StageSet StageSet::preset(const std::string& name) {
    std::string n = name;
    for (const char* prefix : {"TAFE-", "tafe-", "SwinT-", "swint-"})
        if (n.rfind(prefix, 0) == 0) n = n.substr(std::string(prefix).size());
    if (n.size() == 1 && n[0] >= '1' && n[0] <= '4') {
        const int depth = n[0] - '0';
        std::vector<int> s;
        for (int stage = 5 - depth; stage <= 4; ++stage) s.push_back(stage);
        return StageSet(std::move(s));
    }
    throw ConfigError("unknown stage preset '" + name + "' (expected TAFE-1..TAFE-4)");
}

std::string StageSet::name() const {
    if (stages.back() == 4 && int(stages.size()) == 4 - stages.front() + 1)
        return "TAFE-" + std::to_string(stages.size());
    std::string s = "stages{";
    for (size_t i = 0; i < stages.size(); ++i) s += (i ? "," : "") + std::to_string(stages[i]);
    return s + "}";
}

TafeModule::TafeModule(const BackboneConfig& backbone, StageSet stages, double dropout, Rng& rng)
    : stages_(std::move(stages)), dropout_(dropout) {
    stages_.validate();
    fused_dim_ = 0;
    for (int s : stages_.stages) fused_dim_ += backbone.stage_channels(s);
    head_idh_ = std::make_unique<nn::Linear>(fused_dim_, 2, rng, true);
    head_codel_ = std::make_unique<nn::Linear>(fused_dim_, 2, rng, true);
    head_grade_ = std::make_unique<nn::Linear>(fused_dim_, 2, rng, true);
    register_child("head_idh", head_idh_.get());
    register_child("head_codel", head_codel_.get());
    register_child("head_grade", head_grade_.get());
}

ad::Var TafeModule::fuse_stages(const FeaturePyramid& pyramid) const {
    std::vector<ad::Var> pooled;
    pooled.reserve(stages_.stages.size());
    for (int s : stages_.stages) {
        if (!pyramid.x(s).defined()) throw ConfigError("fuse_stages: stage " + std::to_string(s) + " missing");
        pooled.push_back(ad::gap(pyramid.x(s)));
    }
    return ad::concat_axis1(pooled);
}

ad::Var TafeModule::classify(const ad::Var& fused, Task task, bool training, Rng& rng) const {
    if (fused.shape().size() != 2 || fused.dim(1) != fused_dim_)
        throw ShapeError("classify: fused vector length " + std::to_string(fused.dim(1)) +
                         " != configured " + std::to_string(fused_dim_));
    const ad::Var z = ad::dropout(fused, dropout_, training, rng);
    switch (task) {
        case Task::IDH: return head_idh_->forward(z);
        case Task::Codel: return head_codel_->forward(z);
        case Task::Grade: return head_grade_->forward(z);
        default: throw ConfigError("classify: segmentation task has no classification head");
    }
}

}  // namespace mts
