#include "mts/optim.hpp"

#include <cmath>

namespace mts::nn {

Adam::Adam(std::vector<Parameter> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto& p : params_) {
        m_.push_back(Tensor::zeros(p.var.shape()));
        v_.push_back(Tensor::zeros(p.var.shape()));
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i].var;
        if (!p.grad().defined()) continue;
        Tensor& val = p.value();
        const Tensor& g = p.grad();
        for (int64_t j = 0; j < val.numel(); ++j) {
            m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * g[j];
            v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * g[j] * g[j];
            val[j] -= lr_ * (m_[i][j] / bc1) / (std::sqrt(v_[i][j] / bc2) + eps_);
        }
    }
}

void Adam::zero_grad() {
    for (auto& p : params_) p.var.zero_grad();
}

}  // namespace mts::nn
