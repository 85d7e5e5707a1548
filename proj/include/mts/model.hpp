#pragma once

#include <memory>
#include <string>

#include "mts/backbone.hpp"
#include "mts/cmd.hpp"
#include "mts/fusion.hpp"
#include "mts/manifest.hpp"
#include "mts/tafe.hpp"

namespace mts {

struct ModelConfig {
    BackboneConfig backbone;
    std::vector<Modality> modalities{Modality::T1, Modality::T1C, Modality::T2, Modality::FLAIR};
    Task task = Task::IDH;
    bool tafe_enabled = true;
    StageSet tafe_stages;  // default TAFE-2 = {3, 4}
    bool cmd_enabled = true;
    CmdConfig cmd;
    bool dsf_enabled = true;
    DsfConfig dsf;
    LossWeights loss;
    bool freeze_backbone = false;
    uint64_t init_seed = 0;

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    bool operator==(const ModelConfig&) const;
};

// A training/eval batch assembled from cases. The TAFE input stacks the
// configured modalities; the CMD stream always reads the preprocessed T2 and
// FLAIR volumes regardless of the TAFE subset.
struct Batch {
    ad::Var input;              // (B, M, D, H, W)
    ad::Var t2, flair;          // (B, 1, D, H, W); defined when CMD is active
    std::vector<int> seg_targets;  // per-voxel labels; empty when any mask missing
    std::vector<int> labels;       // per-case class labels; empty for segmentation-only
    int64_t size = 0;
};

Batch make_batch(const std::vector<const Case*>& cases, const ModelConfig& cfg);

struct ModelOutput {
    ad::Var seg_logits;    // undefined when the decoder is skipped (alpha=0, CMD off)
    ad::Var tafe_logits;   // (B, 2) when TAFE enabled
    ad::Var cmd_logits;    // (B, 2) when CMD enabled
    ad::Var final_logits;  // (B, 2)
    ad::Var seg_term, cls_term, loss;

    // intermediate activations kept for explainability (cheap handles)
    FeaturePyramid pyramid;
    CmdModule::Outputs cmd_features;

    ClassificationBundle bundle() const;
};

// The full multi-task network: backbone encoder/decoder, TAFE pooled heads,
// CMD differential stream, and DSF fusion for IDH.
class MtsModel : public nn::Module {
public:
    explicit MtsModel(ModelConfig cfg);

    ModelOutput forward(const Batch& batch, bool training, Rng& rng) const;

    const ModelConfig& config() const { return cfg_; }
    const Backbone& backbone() const { return *backbone_; }
    const TafeModule& tafe() const { return *tafe_; }
    const CmdModule& cmd() const { return *cmd_; }
    BundleSource source() const;

    void save_checkpoint(const std::string& path) const;
    // Builds a fresh model from the embedded config.
    static std::unique_ptr<MtsModel> load_checkpoint(const std::string& path);
    // Loads weights into an existing model; configs must match exactly.
    void load_weights(const std::string& path);

private:
    ModelConfig cfg_;
    std::unique_ptr<Backbone> backbone_;
    std::unique_ptr<TafeModule> tafe_;
    std::unique_ptr<CmdModule> cmd_;
    std::unique_ptr<MlpHead> mlp_;
};

constexpr int32_t kCheckpointVersion = 1;

}  // namespace mts
