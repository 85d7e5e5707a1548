#pragma once

#include <memory>
#include <optional>

#include "mts/nn.hpp"

namespace mts {

struct LossWeights {
    double alpha = 1.0;  // segmentation weight
    double beta = 1.0;   // classification weight
    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

enum class FuseLevel { Logits, Features };

struct DsfConfig {
    int64_t hidden_width = 16;
    FuseLevel fuse_level = FuseLevel::Logits;
    void validate() const;
    bool operator==(const DsfConfig&) const = default;
};

enum class BundleSource { TafeOnly, CmdOnly, Dsf };
std::string to_string(BundleSource s);

// Per-case classification result with module provenance.
struct ClassificationBundle {
    Tensor c_tafe;                 // (B, 2) logits; empty when TAFE disabled
    std::optional<Tensor> c_cmd;   // present iff the CMD stream is active
    Tensor c_final;
    Tensor probabilities;          // row-wise softmax of c_final
    BundleSource source = BundleSource::TafeOnly;
};

Tensor softmax_rows(const Tensor& logits);

// C_fused = [C_TAFE, C_CMD]; both streams are required.
ad::Var fuse_dsf(const ad::Var& c_tafe, const ad::Var& c_cmd);

// Lightweight MLP producing the final logits: hidden ReLU layer then linear.
// With average_logits_init (logits-level fusion of two 2-class streams) the
// head is warm-started as the exact mean of the stream logits via +/- ReLU
// pass-through pairs, so fusion begins as a stream ensemble.
class MlpHead : public nn::Module {
public:
    MlpHead(int64_t in_dim, int64_t hidden_width, Rng& rng, bool average_logits_init = false);
    ad::Var forward(const ad::Var& fused) const;
    int64_t in_dim() const { return in_dim_; }

private:
    int64_t in_dim_;
    std::unique_ptr<nn::Linear> hidden_, out_;
};

// alpha * seg_loss + beta * cross_entropy; both zero weights are rejected.
ad::Var joint_loss(const ad::Var& seg_term, const ad::Var& cls_term, const LossWeights& w);

}  // namespace mts
