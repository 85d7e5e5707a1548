#pragma once

#include <string>
#include <vector>

#include "mts/autodiff.hpp"
#include "mts/rng.hpp"

namespace mts::nn {

struct Parameter {
    std::string name;
    ad::Var var;
};

// Minimal layer base: subclasses register their parameters under a local
// name; collect() walks the tree with dotted prefixes.
class Module {
public:
    virtual ~Module() = default;

    std::vector<Parameter> parameters() {
        std::vector<Parameter> out;
        collect("", out);
        return out;
    }

    virtual void collect(const std::string& prefix, std::vector<Parameter>& out) {
        for (auto& p : params_)
            out.push_back({prefix.empty() ? p.name : prefix + "." + p.name, p.var});
        for (auto& [name, sub] : children_) sub->collect(prefix.empty() ? name : prefix + "." + name, out);
    }

    void set_trainable(bool on) {
        for (auto& p : parameters()) p.var.node_->requires_grad = on;
    }

protected:
    ad::Var register_param(const std::string& name, Tensor init) {
        params_.push_back({name, ad::Var(std::move(init), true)});
        return params_.back().var;
    }
    void register_child(const std::string& name, Module* m) { children_.push_back({name, m}); }

private:
    std::vector<Parameter> params_;
    std::vector<std::pair<std::string, Module*>> children_;
};

Tensor kaiming_init(Shape shape, int64_t fan_in, Rng& rng);

class Conv3d : public Module {
public:
    Conv3d() = default;
    Conv3d(int64_t in_ch, int64_t out_ch, int kernel, int stride, int pad, Rng& rng);
    ad::Var forward(const ad::Var& x) const { return ad::conv3d(x, weight_, bias_, stride_, pad_); }

private:
    ad::Var weight_, bias_;
    int stride_ = 1, pad_ = 1;
};

class Linear : public Module {
public:
    Linear() = default;
    // zero_init suits classification heads: logits start at zero and grow
    // only along learned directions
    Linear(int64_t in_dim, int64_t out_dim, Rng& rng, bool zero_init = false);
    ad::Var forward(const ad::Var& x) const { return ad::linear(x, weight_, bias_); }

private:
    ad::Var weight_, bias_;
};

}  // namespace mts::nn
