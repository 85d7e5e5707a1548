#include "mts/fusion.hpp"

#include <cmath>

#include "mts/errors.hpp"

namespace mts {

void LossWeights::validate() const {
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("loss weights must be >= 0");
    if (alpha + beta <= 0.0) throw ConfigError("loss weights alpha and beta cannot both be zero");
}

void DsfConfig::validate() const {
    if (hidden_width < 1) throw ConfigError("dsf: hidden_width must be >= 1");
}

std::string to_string(BundleSource s) {
    switch (s) {
        case BundleSource::TafeOnly: return "TAFE";
        case BundleSource::CmdOnly: return "CMD";
        case BundleSource::Dsf: return "DSF";
    }
    return "?";
}

Tensor softmax_rows(const Tensor& logits) {
    if (logits.rank() != 2) throw ShapeError("softmax_rows: expected (B, K)");
    const int64_t b = logits.dim(0), k = logits.dim(1);
    Tensor out(logits.shape);
    for (int64_t bi = 0; bi < b; ++bi) {
        double mx = logits[bi * k];
        for (int64_t i = 1; i < k; ++i) mx = std::max(mx, logits[bi * k + i]);
        double z = 0.0;
        for (int64_t i = 0; i < k; ++i) z += std::exp(logits[bi * k + i] - mx);
        for (int64_t i = 0; i < k; ++i) out[bi * k + i] = std::exp(logits[bi * k + i] - mx) / z;
    }
    return out;
}

ad::Var fuse_dsf(const ad::Var& c_tafe, const ad::Var& c_cmd) {
    if (!c_tafe.defined() || !c_cmd.defined())
        throw ConfigError("fuse_dsf: DSF requires both the TAFE and CMD streams");
    if (!c_tafe.value().all_finite() || !c_cmd.value().all_finite())
        throw DomainError("fuse_dsf: non-finite stream values");
    return ad::concat_axis1({c_tafe, c_cmd});
}

MlpHead::MlpHead(int64_t in_dim, int64_t hidden_width, Rng& rng, bool average_logits_init)
    : in_dim_(in_dim) {
    hidden_ = std::make_unique<nn::Linear>(in_dim, hidden_width, rng);
    out_ = std::make_unique<nn::Linear>(hidden_width, 2, rng);
    register_child("hidden", hidden_.get());
    register_child("out", out_.get());

    // keep the hidden ReLUs off their zero kink: fused inputs start at
    // exactly zero when the stream heads are zero-initialized, and ReLU(0)
    // passes no gradient at all
    for (auto& p : parameters())
        if (p.name == "hidden.bias")
            for (double& v : p.var.value().data) v = 0.01;

    if (average_logits_init && in_dim == 4 && hidden_width >= 2 * in_dim) {
        // units 2i / 2i+1 carry ReLU(x_i) and ReLU(-x_i); the output layer
        // reconstructs 0.5 * (stream_a + stream_b) per class
        auto params = parameters();
        for (auto& p : params) {
            if (p.name == "hidden.weight") {
                for (double& v : p.var.value().data) v *= 0.05;
                for (int64_t i = 0; i < in_dim; ++i) {
                    p.var.value()[(2 * i) * in_dim + i] = 1.0;
                    p.var.value()[(2 * i + 1) * in_dim + i] = -1.0;
                }
            } else if (p.name == "out.weight") {
                for (double& v : p.var.value().data) v *= 0.05;
                for (int64_t cls = 0; cls < 2; ++cls)
                    for (int64_t stream = 0; stream < 2; ++stream) {
                        const int64_t i = 2 * stream + cls;  // input index of this stream/class
                        p.var.value()[cls * hidden_width + 2 * i] += 0.5;
                        p.var.value()[cls * hidden_width + 2 * i + 1] += -0.5;
                    }
            }
        }
    }
}

ad::Var MlpHead::forward(const ad::Var& fused) const {
    if (fused.shape().size() != 2 || fused.dim(1) != in_dim_)
        throw ShapeError("mlp_head: input length " + std::to_string(fused.dim(1)) + " != configured " +
                         std::to_string(in_dim_));
    return out_->forward(ad::relu(hidden_->forward(fused)));
}

ad::Var joint_loss(const ad::Var& seg_term, const ad::Var& cls_term, const LossWeights& w) {
    w.validate();
    if (seg_term.defined() && cls_term.defined()) return ad::weighted_sum(seg_term, w.alpha, cls_term, w.beta);
    if (seg_term.defined()) return ad::scale(seg_term, w.alpha);
    if (cls_term.defined()) return ad::scale(cls_term, w.beta);
    throw ConfigError("joint_loss: neither loss term present");
}

}  // namespace mts
