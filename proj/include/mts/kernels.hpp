#pragma once

#include <cstdint>

// Dense compute kernels behind the network layers. Each kernel has an
// OpenMP-parallel implementation (the default path) and a serial reference
// in kernels::serial with identical semantics. Parallel loops run over
// independent output elements with a fixed inner accumulation order, so the
// two variants produce bit-identical results; tests and the mts_bench tool
// compare them.

namespace mts::kernels {

struct Conv3dSpec {
    int64_t batch = 0;
    int64_t in_ch = 0, out_ch = 0;
    int64_t d = 0, h = 0, w = 0;     // input spatial dims
    int64_t od = 0, oh = 0, ow = 0;  // output spatial dims
    int kernel = 3;
    int stride = 1;
    int pad = 1;
};

// Output spatial size for one axis: (n + 2*pad - kernel) / stride + 1.
int64_t conv_out_dim(int64_t n, int kernel, int stride, int pad);
Conv3dSpec make_conv3d_spec(int64_t batch, int64_t in_ch, int64_t out_ch,
                            int64_t d, int64_t h, int64_t w,
                            int kernel, int stride, int pad);

// in:  (B, Ci, D, H, W); weight: (Co, Ci, K, K, K); bias: (Co) or nullptr
// out: (B, Co, Do, Ho, Wo)
void conv3d_forward(const double* in, const double* weight, const double* bias,
                    double* out, const Conv3dSpec& s);
// grad_in  (B, Ci, D, H, W) overwritten
void conv3d_grad_input(const double* grad_out, const double* weight,
                       double* grad_in, const Conv3dSpec& s);
// grad_w (Co, Ci, K, K, K) and grad_b (Co) accumulated into
void conv3d_grad_weight(const double* grad_out, const double* in,
                        double* grad_w, double* grad_b, const Conv3dSpec& s);

// Nearest-neighbour 2x upsampling of (B, C, D, H, W).
void upsample2_forward(const double* in, double* out,
                       int64_t b, int64_t c, int64_t d, int64_t h, int64_t w);
void upsample2_backward(const double* grad_out, double* grad_in,
                        int64_t b, int64_t c, int64_t d, int64_t h, int64_t w);

// Global average pooling (B, C, S) -> (B, C) where S is the flattened
// spatial extent; backward spreads grad_out / S.
void gap_forward(const double* in, double* out, int64_t b, int64_t c, int64_t s);
void gap_backward(const double* grad_out, double* grad_in, int64_t b, int64_t c, int64_t s);

// Resamples a single (D, H, W) volume through an affine index map plus an
// optional per-voxel displacement field (3 * numel, xyz-fastest order):
//   src = A * dst + t + disp(dst)
// affine is a row-major 3x4 matrix acting on (z, y, x) index coordinates.
// Out-of-support samples read `fill`.
void resample_trilinear(const double* in, int64_t d, int64_t h, int64_t w,
                        double* out, int64_t od, int64_t oh, int64_t ow,
                        const double affine[12], const double* disp, double fill);
void resample_nearest(const double* in, int64_t d, int64_t h, int64_t w,
                      double* out, int64_t od, int64_t oh, int64_t ow,
                      const double affine[12], const double* disp, double fill);

namespace serial {
void conv3d_forward(const double* in, const double* weight, const double* bias,
                    double* out, const Conv3dSpec& s);
void conv3d_grad_input(const double* grad_out, const double* weight,
                       double* grad_in, const Conv3dSpec& s);
void conv3d_grad_weight(const double* grad_out, const double* in,
                        double* grad_w, double* grad_b, const Conv3dSpec& s);
void upsample2_forward(const double* in, double* out,
                       int64_t b, int64_t c, int64_t d, int64_t h, int64_t w);
void upsample2_backward(const double* grad_out, double* grad_in,
                        int64_t b, int64_t c, int64_t d, int64_t h, int64_t w);
void gap_forward(const double* in, double* out, int64_t b, int64_t c, int64_t s);
void gap_backward(const double* grad_out, double* grad_in, int64_t b, int64_t c, int64_t s);
void resample_trilinear(const double* in, int64_t d, int64_t h, int64_t w,
                        double* out, int64_t od, int64_t oh, int64_t ow,
                        const double affine[12], const double* disp, double fill);
}  // namespace serial

}  // namespace mts::kernels
