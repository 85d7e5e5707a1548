#pragma once

#include <vector>

#include "mts/nn.hpp"

namespace mts::nn {

class Adam {
public:
    explicit Adam(std::vector<Parameter> params, double lr = 1e-4,
                  double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    void step();
    void zero_grad();
    double lr() const { return lr_; }

private:
    std::vector<Parameter> params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    int64_t t_ = 0;
};

}  // namespace mts::nn
