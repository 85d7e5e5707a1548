#include "mts/kernels.hpp"

#include <cmath>
#include <cstring>

#include "mts/errors.hpp"

namespace mts::kernels {

int64_t conv_out_dim(int64_t n, int kernel, int stride, int pad) {
    int64_t out = (n + 2 * pad - kernel) / stride + 1;
    if (out <= 0) throw ShapeError("conv3d: input dim " + std::to_string(n) + " too small for kernel");
    return out;
}

Conv3dSpec make_conv3d_spec(int64_t batch, int64_t in_ch, int64_t out_ch,
                            int64_t d, int64_t h, int64_t w,
                            int kernel, int stride, int pad) {
    Conv3dSpec s;
    s.batch = batch;
    s.in_ch = in_ch;
    s.out_ch = out_ch;
    s.d = d;
    s.h = h;
    s.w = w;
    s.kernel = kernel;
    s.stride = stride;
    s.pad = pad;
    s.od = conv_out_dim(d, kernel, stride, pad);
    s.oh = conv_out_dim(h, kernel, stride, pad);
    s.ow = conv_out_dim(w, kernel, stride, pad);
    return s;
}

// ---------------------------------------------------------------------------
// parallel kernels
// ---------------------------------------------------------------------------

void conv3d_forward(const double* in, const double* weight, const double* bias,
                    double* out, const Conv3dSpec& s) {
    const int64_t in_plane = s.h * s.w;
    const int64_t in_vol = s.d * in_plane;
    const int64_t out_vol = s.od * s.oh * s.ow;
    const int K = s.kernel;

    // valid tap range along one axis, so the inner loops run branch-free
    auto tap_range = [K](int64_t origin, int64_t extent, int& lo, int& hi) {
        lo = origin < 0 ? int(-origin) : 0;
        hi = int(std::min<int64_t>(K - 1, extent - 1 - origin));
    };

#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < s.batch; ++b) {
        for (int64_t co = 0; co < s.out_ch; ++co) {
            const double bias_v = bias ? bias[co] : 0.0;
            double* out_c = out + (b * s.out_ch + co) * out_vol;
            const double* w_c = weight + co * s.in_ch * K * K * K;
            for (int64_t oz = 0; oz < s.od; ++oz) {
                const int64_t z0 = oz * s.stride - s.pad;
                int kz_lo, kz_hi;
                tap_range(z0, s.d, kz_lo, kz_hi);
                for (int64_t oy = 0; oy < s.oh; ++oy) {
                    const int64_t y0 = oy * s.stride - s.pad;
                    int ky_lo, ky_hi;
                    tap_range(y0, s.h, ky_lo, ky_hi);
                    for (int64_t ox = 0; ox < s.ow; ++ox) {
                        const int64_t x0 = ox * s.stride - s.pad;
                        int kx_lo, kx_hi;
                        tap_range(x0, s.w, kx_lo, kx_hi);
                        double acc = bias_v;
                        for (int64_t ci = 0; ci < s.in_ch; ++ci) {
                            const double* in_c = in + (b * s.in_ch + ci) * in_vol;
                            const double* w_ci = w_c + ci * K * K * K;
                            for (int kz = kz_lo; kz <= kz_hi; ++kz) {
                                for (int ky = ky_lo; ky <= ky_hi; ++ky) {
                                    const double* in_row = in_c + (z0 + kz) * in_plane + (y0 + ky) * s.w + x0;
                                    const double* w_row = w_ci + (kz * K + ky) * K;
                                    for (int kx = kx_lo; kx <= kx_hi; ++kx) acc += w_row[kx] * in_row[kx];
                                }
                            }
                        }
                        out_c[(oz * s.oh + oy) * s.ow + ox] = acc;
                    }
                }
            }
        }
    }
}

void conv3d_grad_input(const double* grad_out, const double* weight,
                       double* grad_in, const Conv3dSpec& s) {
    const int64_t in_plane = s.h * s.w;
    const int64_t in_vol = s.d * in_plane;
    const int64_t out_vol = s.od * s.oh * s.ow;
    const int K = s.kernel;

    // scatter form: each thread owns one (batch, in-channel) slice and walks
    // the output positions, so no divisibility checks are needed and the
    // per-element accumulation order matches the serial reference
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t b = 0; b < s.batch; ++b) {
        for (int64_t ci = 0; ci < s.in_ch; ++ci) {
            double* gin_c = grad_in + (b * s.in_ch + ci) * in_vol;
            std::fill(gin_c, gin_c + in_vol, 0.0);
            for (int64_t co = 0; co < s.out_ch; ++co) {
                const double* gout_c = grad_out + (b * s.out_ch + co) * out_vol;
                const double* w_c = weight + (co * s.in_ch + ci) * K * K * K;
                for (int64_t oz = 0; oz < s.od; ++oz) {
                    const int64_t z0 = oz * s.stride - s.pad;
                    for (int64_t oy = 0; oy < s.oh; ++oy) {
                        const int64_t y0 = oy * s.stride - s.pad;
                        const double* gout_row = gout_c + (oz * s.oh + oy) * s.ow;
                        for (int kz = 0; kz < K; ++kz) {
                            const int64_t z = z0 + kz;
                            if (z < 0 || z >= s.d) continue;
                            for (int ky = 0; ky < K; ++ky) {
                                const int64_t y = y0 + ky;
                                if (y < 0 || y >= s.h) continue;
                                double* gin_row = gin_c + z * in_plane + y * s.w;
                                const double* w_row = w_c + (kz * K + ky) * K;
                                for (int64_t ox = 0; ox < s.ow; ++ox) {
                                    const double g = gout_row[ox];
                                    if (g == 0.0) continue;
                                    const int64_t x0 = ox * s.stride - s.pad;
                                    for (int kx = 0; kx < K; ++kx) {
                                        const int64_t x = x0 + kx;
                                        if (x < 0 || x >= s.w) continue;
                                        gin_row[x] += w_row[kx] * g;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv3d_grad_weight(const double* grad_out, const double* in,
                        double* grad_w, double* grad_b, const Conv3dSpec& s) {
    const int64_t in_plane = s.h * s.w;
    const int64_t in_vol = s.d * in_plane;
    const int64_t out_plane = s.oh * s.ow;
    const int64_t out_vol = s.od * out_plane;
    const int K = s.kernel;

    // output-position range whose taps stay inside the input, per kernel
    // offset: oz valid iff 0 <= oz*stride - pad + k < extent
    auto out_range = [&s](int k, int64_t extent, int64_t limit, int64_t& lo, int64_t& hi) {
        const int64_t shift = int64_t(k) - s.pad;
        lo = shift < 0 ? (-shift + s.stride - 1) / s.stride : 0;
        hi = std::min(limit - 1, (extent - 1 - shift) / s.stride);
    };

#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t co = 0; co < s.out_ch; ++co) {
        for (int64_t ci = 0; ci < s.in_ch; ++ci) {
            double* gw_c = grad_w + (co * s.in_ch + ci) * K * K * K;
            for (int kz = 0; kz < K; ++kz) {
                int64_t oz_lo, oz_hi;
                out_range(kz, s.d, s.od, oz_lo, oz_hi);
                for (int ky = 0; ky < K; ++ky) {
                    int64_t oy_lo, oy_hi;
                    out_range(ky, s.h, s.oh, oy_lo, oy_hi);
                    for (int kx = 0; kx < K; ++kx) {
                        int64_t ox_lo, ox_hi;
                        out_range(kx, s.w, s.ow, ox_lo, ox_hi);
                        double acc = 0.0;
                        for (int64_t b = 0; b < s.batch; ++b) {
                            const double* gout_c = grad_out + (b * s.out_ch + co) * out_vol;
                            const double* in_c = in + (b * s.in_ch + ci) * in_vol;
                            for (int64_t oz = oz_lo; oz <= oz_hi; ++oz) {
                                const int64_t z = oz * s.stride - s.pad + kz;
                                for (int64_t oy = oy_lo; oy <= oy_hi; ++oy) {
                                    const int64_t y = oy * s.stride - s.pad + ky;
                                    const double* gout_row = gout_c + (oz * s.oh + oy) * s.ow;
                                    const double* in_row = in_c + z * in_plane + y * s.w - s.pad + kx;
                                    for (int64_t ox = ox_lo; ox <= ox_hi; ++ox)
                                        acc += gout_row[ox] * in_row[ox * s.stride];
                                }
                            }
                        }
                        gw_c[(kz * K + ky) * K + kx] += acc;
                    }
                }
            }
        }
    }

    if (grad_b) {
#pragma omp parallel for schedule(static)
        for (int64_t co = 0; co < s.out_ch; ++co) {
            double acc = 0.0;
            for (int64_t b = 0; b < s.batch; ++b) {
                const double* gout_c = grad_out + (b * s.out_ch + co) * out_vol;
                for (int64_t i = 0; i < out_vol; ++i) acc += gout_c[i];
            }
            grad_b[co] += acc;
        }
    }
}

void upsample2_forward(const double* in, double* out,
                       int64_t b, int64_t c, int64_t d, int64_t h, int64_t w) {
    const int64_t od = 2 * d, oh = 2 * h, ow = 2 * w;
    const int64_t in_vol = d * h * w, out_vol = od * oh * ow;
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t bc = 0; bc < b * c; ++bc) {
        for (int64_t oz = 0; oz < od; ++oz) {
            const double* in_z = in + bc * in_vol + (oz / 2) * h * w;
            double* out_z = out + bc * out_vol + oz * oh * ow;
            for (int64_t oy = 0; oy < oh; ++oy) {
                const double* in_row = in_z + (oy / 2) * w;
                double* out_row = out_z + oy * ow;
                for (int64_t ox = 0; ox < ow; ++ox) out_row[ox] = in_row[ox / 2];
            }
        }
    }
}

void upsample2_backward(const double* grad_out, double* grad_in,
                        int64_t b, int64_t c, int64_t d, int64_t h, int64_t w) {
    const int64_t od = 2 * d, oh = 2 * h, ow = 2 * w;
    const int64_t in_vol = d * h * w, out_vol = od * oh * ow;
#pragma omp parallel for collapse(2) schedule(static)
    for (int64_t bc = 0; bc < b * c; ++bc) {
        for (int64_t z = 0; z < d; ++z) {
            const double* gout_c = grad_out + bc * out_vol;
            double* gin_z = grad_in + bc * in_vol + z * h * w;
            for (int64_t y = 0; y < h; ++y) {
                for (int64_t x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx)
                                acc += gout_c[((2 * z + dz) * oh + (2 * y + dy)) * ow + (2 * x + dx)];
                    gin_z[y * w + x] += acc;
                }
            }
        }
    }
}

void gap_forward(const double* in, double* out, int64_t b, int64_t c, int64_t s) {
#pragma omp parallel for schedule(static)
    for (int64_t bc = 0; bc < b * c; ++bc) {
        const double* p = in + bc * s;
        double acc = 0.0;
        for (int64_t i = 0; i < s; ++i) acc += p[i];
        out[bc] = acc / double(s);
    }
}

void gap_backward(const double* grad_out, double* grad_in, int64_t b, int64_t c, int64_t s) {
#pragma omp parallel for schedule(static)
    for (int64_t bc = 0; bc < b * c; ++bc) {
        const double g = grad_out[bc] / double(s);
        double* p = grad_in + bc * s;
        for (int64_t i = 0; i < s; ++i) p[i] += g;
    }
}

namespace {

inline double sample_at(const double* in, int64_t d, int64_t h, int64_t w,
                        int64_t z, int64_t y, int64_t x, double fill) {
    if (z < 0 || z >= d || y < 0 || y >= h || x < 0 || x >= w) return fill;
    return in[(z * h + y) * w + x];
}

inline void map_coords(const double affine[12], const double* disp, int64_t idx, int64_t n,
                       double z, double y, double x, double& sz, double& sy, double& sx) {
    sz = affine[0] * z + affine[1] * y + affine[2] * x + affine[3];
    sy = affine[4] * z + affine[5] * y + affine[6] * x + affine[7];
    sx = affine[8] * z + affine[9] * y + affine[10] * x + affine[11];
    if (disp) {
        sz += disp[idx];
        sy += disp[n + idx];
        sx += disp[2 * n + idx];
    }
}

inline double trilinear_at(const double* in, int64_t d, int64_t h, int64_t w,
                           double sz, double sy, double sx, double fill) {
    const double fz = std::floor(sz), fy = std::floor(sy), fx = std::floor(sx);
    const int64_t z0 = int64_t(fz), y0 = int64_t(fy), x0 = int64_t(fx);
    const double tz = sz - fz, ty = sy - fy, tx = sx - fx;
    double acc = 0.0;
    for (int dz = 0; dz < 2; ++dz) {
        const double wz = dz ? tz : 1.0 - tz;
        if (wz == 0.0) continue;
        for (int dy = 0; dy < 2; ++dy) {
            const double wy = dy ? ty : 1.0 - ty;
            if (wy == 0.0) continue;
            for (int dx = 0; dx < 2; ++dx) {
                const double wx = dx ? tx : 1.0 - tx;
                if (wx == 0.0) continue;
                acc += wz * wy * wx * sample_at(in, d, h, w, z0 + dz, y0 + dy, x0 + dx, fill);
            }
        }
    }
    return acc;
}

}  // namespace

void resample_trilinear(const double* in, int64_t d, int64_t h, int64_t w,
                        double* out, int64_t od, int64_t oh, int64_t ow,
                        const double affine[12], const double* disp, double fill) {
    const int64_t n = od * oh * ow;
#pragma omp parallel for schedule(static)
    for (int64_t z = 0; z < od; ++z) {
        for (int64_t y = 0; y < oh; ++y) {
            for (int64_t x = 0; x < ow; ++x) {
                const int64_t idx = (z * oh + y) * ow + x;
                double sz, sy, sx;
                map_coords(affine, disp, idx, n, double(z), double(y), double(x), sz, sy, sx);
                out[idx] = trilinear_at(in, d, h, w, sz, sy, sx, fill);
            }
        }
    }
}

void resample_nearest(const double* in, int64_t d, int64_t h, int64_t w,
                      double* out, int64_t od, int64_t oh, int64_t ow,
                      const double affine[12], const double* disp, double fill) {
    const int64_t n = od * oh * ow;
#pragma omp parallel for schedule(static)
    for (int64_t z = 0; z < od; ++z) {
        for (int64_t y = 0; y < oh; ++y) {
            for (int64_t x = 0; x < ow; ++x) {
                const int64_t idx = (z * oh + y) * ow + x;
                double sz, sy, sx;
                map_coords(affine, disp, idx, n, double(z), double(y), double(x), sz, sy, sx);
                out[idx] = sample_at(in, d, h, w, int64_t(std::llround(sz)), int64_t(std::llround(sy)),
                                     int64_t(std::llround(sx)), fill);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// serial reference implementations
// ---------------------------------------------------------------------------

namespace serial {

void conv3d_forward(const double* in, const double* weight, const double* bias,
                    double* out, const Conv3dSpec& s) {
    const int K = s.kernel;
    const int64_t in_vol = s.d * s.h * s.w;
    const int64_t out_vol = s.od * s.oh * s.ow;
    for (int64_t b = 0; b < s.batch; ++b)
        for (int64_t co = 0; co < s.out_ch; ++co)
            for (int64_t oz = 0; oz < s.od; ++oz)
                for (int64_t oy = 0; oy < s.oh; ++oy)
                    for (int64_t ox = 0; ox < s.ow; ++ox) {
                        double acc = bias ? bias[co] : 0.0;
                        for (int64_t ci = 0; ci < s.in_ch; ++ci)
                            for (int kz = 0; kz < K; ++kz)
                                for (int ky = 0; ky < K; ++ky)
                                    for (int kx = 0; kx < K; ++kx) {
                                        const int64_t z = oz * s.stride - s.pad + kz;
                                        const int64_t y = oy * s.stride - s.pad + ky;
                                        const int64_t x = ox * s.stride - s.pad + kx;
                                        if (z < 0 || z >= s.d || y < 0 || y >= s.h || x < 0 || x >= s.w)
                                            continue;
                                        acc += weight[(((co * s.in_ch + ci) * K + kz) * K + ky) * K + kx] *
                                               in[(b * s.in_ch + ci) * in_vol + (z * s.h + y) * s.w + x];
                                    }
                        out[(b * s.out_ch + co) * out_vol + (oz * s.oh + oy) * s.ow + ox] = acc;
                    }
}

void conv3d_grad_input(const double* grad_out, const double* weight,
                       double* grad_in, const Conv3dSpec& s) {
    const int K = s.kernel;
    const int64_t in_plane = s.h * s.w;
    const int64_t in_vol = s.d * in_plane;
    const int64_t out_vol = s.od * s.oh * s.ow;
    for (int64_t b = 0; b < s.batch; ++b)
        for (int64_t ci = 0; ci < s.in_ch; ++ci) {
            double* gin_c = grad_in + (b * s.in_ch + ci) * in_vol;
            std::fill(gin_c, gin_c + in_vol, 0.0);
            for (int64_t co = 0; co < s.out_ch; ++co)
                for (int64_t oz = 0; oz < s.od; ++oz)
                    for (int64_t oy = 0; oy < s.oh; ++oy)
                        for (int kz = 0; kz < K; ++kz)
                            for (int ky = 0; ky < K; ++ky) {
                                const int64_t z = oz * s.stride - s.pad + kz;
                                const int64_t y = oy * s.stride - s.pad + ky;
                                if (z < 0 || z >= s.d || y < 0 || y >= s.h) continue;
                                for (int64_t ox = 0; ox < s.ow; ++ox)
                                    for (int kx = 0; kx < K; ++kx) {
                                        const int64_t x = ox * s.stride - s.pad + kx;
                                        if (x < 0 || x >= s.w) continue;
                                        gin_c[z * in_plane + y * s.w + x] +=
                                            weight[(((co * s.in_ch + ci) * K + kz) * K + ky) * K + kx] *
                                            grad_out[(b * s.out_ch + co) * out_vol + (oz * s.oh + oy) * s.ow + ox];
                                    }
                            }
        }
}

void conv3d_grad_weight(const double* grad_out, const double* in,
                        double* grad_w, double* grad_b, const Conv3dSpec& s) {
    const int K = s.kernel;
    const int64_t in_vol = s.d * s.h * s.w;
    const int64_t out_vol = s.od * s.oh * s.ow;
    for (int64_t co = 0; co < s.out_ch; ++co)
        for (int64_t ci = 0; ci < s.in_ch; ++ci)
            for (int kz = 0; kz < K; ++kz)
                for (int ky = 0; ky < K; ++ky)
                    for (int kx = 0; kx < K; ++kx) {
                        double acc = 0.0;
                        for (int64_t b = 0; b < s.batch; ++b)
                            for (int64_t oz = 0; oz < s.od; ++oz)
                                for (int64_t oy = 0; oy < s.oh; ++oy)
                                    for (int64_t ox = 0; ox < s.ow; ++ox) {
                                        const int64_t z = oz * s.stride - s.pad + kz;
                                        const int64_t y = oy * s.stride - s.pad + ky;
                                        const int64_t x = ox * s.stride - s.pad + kx;
                                        if (z < 0 || z >= s.d || y < 0 || y >= s.h || x < 0 || x >= s.w)
                                            continue;
                                        acc += grad_out[(b * s.out_ch + co) * out_vol + (oz * s.oh + oy) * s.ow + ox] *
                                               in[(b * s.in_ch + ci) * in_vol + (z * s.h + y) * s.w + x];
                                    }
                        grad_w[(((co * s.in_ch + ci) * K + kz) * K + ky) * K + kx] += acc;
                    }
    if (grad_b)
        for (int64_t co = 0; co < s.out_ch; ++co) {
            double acc = 0.0;
            for (int64_t b = 0; b < s.batch; ++b)
                for (int64_t i = 0; i < out_vol; ++i)
                    acc += grad_out[(b * s.out_ch + co) * out_vol + i];
            grad_b[co] += acc;
        }
}

void upsample2_forward(const double* in, double* out,
                       int64_t b, int64_t c, int64_t d, int64_t h, int64_t w) {
    const int64_t od = 2 * d, oh = 2 * h, ow = 2 * w;
    for (int64_t bc = 0; bc < b * c; ++bc)
        for (int64_t oz = 0; oz < od; ++oz)
            for (int64_t oy = 0; oy < oh; ++oy)
                for (int64_t ox = 0; ox < ow; ++ox)
                    out[bc * od * oh * ow + (oz * oh + oy) * ow + ox] =
                        in[bc * d * h * w + ((oz / 2) * h + (oy / 2)) * w + (ox / 2)];
}

void upsample2_backward(const double* grad_out, double* grad_in,
                        int64_t b, int64_t c, int64_t d, int64_t h, int64_t w) {
    const int64_t od = 2 * d, oh = 2 * h, ow = 2 * w;
    for (int64_t bc = 0; bc < b * c; ++bc)
        for (int64_t z = 0; z < d; ++z)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    double acc = 0.0;
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx)
                                acc += grad_out[bc * od * oh * ow +
                                                ((2 * z + dz) * oh + (2 * y + dy)) * ow + (2 * x + dx)];
                    grad_in[bc * d * h * w + (z * h + y) * w + x] += acc;
                }
}

void gap_forward(const double* in, double* out, int64_t b, int64_t c, int64_t s) {
    for (int64_t bc = 0; bc < b * c; ++bc) {
        double acc = 0.0;
        for (int64_t i = 0; i < s; ++i) acc += in[bc * s + i];
        out[bc] = acc / double(s);
    }
}

void gap_backward(const double* grad_out, double* grad_in, int64_t b, int64_t c, int64_t s) {
    for (int64_t bc = 0; bc < b * c; ++bc)
        for (int64_t i = 0; i < s; ++i)
            grad_in[bc * s + i] += grad_out[bc] / double(s);
}

void resample_trilinear(const double* in, int64_t d, int64_t h, int64_t w,
                        double* out, int64_t od, int64_t oh, int64_t ow,
                        const double affine[12], const double* disp, double fill) {
    const int64_t n = od * oh * ow;
    for (int64_t z = 0; z < od; ++z)
        for (int64_t y = 0; y < oh; ++y)
            for (int64_t x = 0; x < ow; ++x) {
                const int64_t idx = (z * oh + y) * ow + x;
                double sz, sy, sx;
                map_coords(affine, disp, idx, n, double(z), double(y), double(x), sz, sy, sx);
                out[idx] = trilinear_at(in, d, h, w, sz, sy, sx, fill);
            }
}

}  // namespace serial

}  // namespace mts::kernels
