#include "mts/nn.hpp"

#include <cmath>

namespace mts::nn {

Tensor kaiming_init(Shape shape, int64_t fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double sd = std::sqrt(2.0 / double(fan_in));
    for (double& v : t.data) v = sd * rng.normal();
    return t;
}

Conv3d::Conv3d(int64_t in_ch, int64_t out_ch, int kernel, int stride, int pad, Rng& rng)
    : stride_(stride), pad_(pad) {
    const int64_t k = kernel;
    weight_ = register_param("weight", kaiming_init({out_ch, in_ch, k, k, k}, in_ch * k * k * k, rng));
    bias_ = register_param("bias", Tensor::zeros({out_ch}));
}

Linear::Linear(int64_t in_dim, int64_t out_dim, Rng& rng, bool zero_init) {
    weight_ = register_param("weight", zero_init ? Tensor::zeros({out_dim, in_dim})
                                                 : kaiming_init({out_dim, in_dim}, in_dim, rng));
    bias_ = register_param("bias", Tensor::zeros({out_dim}));
}

}  // namespace mts::nn
