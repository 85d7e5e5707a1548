#include "mts/augment.hpp"

#include <cmath>

#include "mts/errors.hpp"
#include "mts/kernels.hpp"
#include "mts/rng.hpp"

namespace mts {

namespace {

struct Affine {
    // row-major 3x4, dst (z,y,x) -> src
    double m[12];
};

Affine identity_affine() {
    return {{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0}};
}

// rotation by theta in the plane of axes (a, b), 3x3
void plane_rotation(double r[9], int a, int b, double theta) {
    for (int i = 0; i < 9; ++i) r[i] = i % 4 == 0 ? 1.0 : 0.0;
    const double c = std::cos(theta), s = std::sin(theta);
    r[a * 3 + a] = c;
    r[a * 3 + b] = -s;
    r[b * 3 + a] = s;
    r[b * 3 + b] = c;
}

void matmul3(const double a[9], const double b[9], double out[9]) {
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 3; ++k) acc += a[i * 3 + k] * b[k * 3 + j];
            out[i * 3 + j] = acc;
        }
}

// dst -> src affine for rotating the image by the given angles about the
// volume center, optionally composed with per-axis flips applied in dst space
Affine rotation_affine(const Shape& shape, const std::array<double, 3>& angles_deg,
                       const std::array<bool, 3>& flips) {
    double r01[9], r02[9], r12[9], tmp[9], rot[9];
    const double d2r = M_PI / 180.0;
    plane_rotation(r12, 1, 2, angles_deg[0] * d2r);  // about axis 0
    plane_rotation(r02, 0, 2, angles_deg[1] * d2r);  // about axis 1
    plane_rotation(r01, 0, 1, angles_deg[2] * d2r);  // about axis 2
    matmul3(r01, r02, tmp);
    matmul3(tmp, r12, rot);

    // inverse rotation = transpose; fold flips in as sign/offset on dst coords
    Affine a{};
    const double c[3] = {double(shape[0] - 1) / 2.0, double(shape[1] - 1) / 2.0, double(shape[2] - 1) / 2.0};
    for (int i = 0; i < 3; ++i) {
        double t = c[i];
        for (int j = 0; j < 3; ++j) {
            const double rij = rot[j * 3 + i];  // transpose
            const double sign = flips[size_t(j)] ? -1.0 : 1.0;
            const double off = flips[size_t(j)] ? double(shape[size_t(j)] - 1) : 0.0;
            a.m[i * 4 + j] = rij * sign;
            t += rij * (off - c[j]);
        }
        a.m[i * 4 + 3] = t;
    }
    return a;
}

bool is_identity(const Affine& a) {
    const Affine id = identity_affine();
    for (int i = 0; i < 12; ++i)
        if (a.m[i] != id.m[i]) return false;
    return true;
}

void gaussian_blur_axis(std::vector<double>& field, const Shape& s, int axis, double sigma) {
    const int radius = int(std::ceil(3.0 * sigma));
    std::vector<double> kernel(size_t(2 * radius + 1));
    double norm = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[size_t(i + radius)] = std::exp(-0.5 * double(i) * double(i) / (sigma * sigma));
        norm += kernel[size_t(i + radius)];
    }
    for (double& k : kernel) k /= norm;

    const int64_t d = s[0], h = s[1], w = s[2];
    const int64_t stride = axis == 0 ? h * w : (axis == 1 ? w : 1);
    const int64_t extent = s[size_t(axis)];
    std::vector<double> out(field.size());
#pragma omp parallel for schedule(static)
    for (int64_t z = 0; z < d; ++z)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const int64_t pos[3] = {z, y, x};
                const int64_t idx = (z * h + y) * w + x;
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) {
                    int64_t p = pos[axis] + k;
                    p = std::clamp<int64_t>(p, 0, extent - 1);
                    acc += kernel[size_t(k + radius)] * field[size_t(idx + (p - pos[axis]) * stride)];
                }
                out[size_t(idx)] = acc;
            }
    field.swap(out);
}

// smooth random displacement field, peak magnitude capped at `magnitude`
std::vector<double> elastic_field(const Shape& s, double sigma, double magnitude, Rng& rng) {
    const int64_t n = shape_numel(s);
    std::vector<double> field(size_t(3 * n));
    for (double& v : field) v = rng.normal();
    for (int comp = 0; comp < 3; ++comp) {
        std::vector<double> one(field.begin() + comp * n, field.begin() + (comp + 1) * n);
        for (int axis = 0; axis < 3; ++axis) gaussian_blur_axis(one, s, axis, sigma);
        std::copy(one.begin(), one.end(), field.begin() + comp * n);
    }
    double max_mag = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double dz = field[size_t(i)], dy = field[size_t(n + i)], dx = field[size_t(2 * n + i)];
        max_mag = std::max(max_mag, std::sqrt(dz * dz + dy * dy + dx * dx));
    }
    if (max_mag > 0.0) {
        const double scale = magnitude / max_mag;
        for (double& v : field) v *= scale;
    }
    return field;
}

}  // namespace

Volume3D flip_volume(const Volume3D& v, int axis) {
    if (axis < 0 || axis > 2) throw ConfigError("flip axis must be 0, 1 or 2");
    Volume3D out(Tensor(v.data.shape), v.spacing, v.modality);
    const int64_t d = v.shape()[0], h = v.shape()[1], w = v.shape()[2];
    for (int64_t z = 0; z < d; ++z)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                const int64_t sz = axis == 0 ? d - 1 - z : z;
                const int64_t sy = axis == 1 ? h - 1 - y : y;
                const int64_t sx = axis == 2 ? w - 1 - x : x;
                out.at(z, y, x) = v.at(sz, sy, sx);
            }
    return out;
}

MaskVolume flip_mask(const MaskVolume& m, int axis) {
    if (axis < 0 || axis > 2) throw ConfigError("flip axis must be 0, 1 or 2");
    MaskVolume out(m.shape, m.spacing);
    const int64_t d = m.shape[0], h = m.shape[1], w = m.shape[2];
    for (int64_t z = 0; z < d; ++z)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x)
                out.at(z, y, x) = m.at(axis == 0 ? d - 1 - z : z, axis == 1 ? h - 1 - y : y,
                                       axis == 2 ? w - 1 - x : x);
    return out;
}

Volume3D rotate_volume(const Volume3D& v, const std::array<double, 3>& angles_deg) {
    const Affine a = rotation_affine(v.shape(), angles_deg, {false, false, false});
    Volume3D out(Tensor(v.data.shape), v.spacing, v.modality);
    kernels::resample_trilinear(v.data.ptr(), v.shape()[0], v.shape()[1], v.shape()[2], out.data.ptr(),
                                v.shape()[0], v.shape()[1], v.shape()[2], a.m, nullptr, 0.0);
    return out;
}

MaskVolume rotate_mask(const MaskVolume& m, const std::array<double, 3>& angles_deg) {
    const Affine a = rotation_affine(m.shape, angles_deg, {false, false, false});
    Tensor grid(m.shape);
    for (size_t i = 0; i < m.labels.size(); ++i) grid[int64_t(i)] = double(m.labels[i]);
    Tensor out_grid(m.shape);
    kernels::resample_nearest(grid.ptr(), m.shape[0], m.shape[1], m.shape[2], out_grid.ptr(), m.shape[0],
                              m.shape[1], m.shape[2], a.m, nullptr, 0.0);
    MaskVolume out(m.shape, m.spacing);
    for (size_t i = 0; i < out.labels.size(); ++i) out.labels[i] = int32_t(out_grid[int64_t(i)]);
    return out;
}

Case augment(const Case& c, uint64_t seed, const AugmentParams& params) {
    if (c.volumes.empty()) throw CaseError("augment: case has no volumes");
    Rng rng(seed);
    const Shape shape = c.volumes.begin()->second.shape();

    std::array<bool, 3> flips{false, false, false};
    if (params.enable_flip)
        for (auto& f : flips) f = rng.bernoulli(params.flip_prob);
    std::array<double, 3> angles{0.0, 0.0, 0.0};
    if (params.enable_rotation)
        for (auto& a : angles) a = rng.uniform(-params.max_rotation_deg, params.max_rotation_deg);
    const double intensity =
        params.enable_intensity ? rng.uniform(params.intensity_lo, params.intensity_hi) : 1.0;
    std::vector<double> disp;
    if (params.enable_elastic && params.elastic_magnitude > 0.0)
        disp = elastic_field(shape, params.elastic_sigma, params.elastic_magnitude, rng);

    const Affine a = rotation_affine(shape, angles, flips);
    const bool spatial = !is_identity(a) || !disp.empty();

    Case out;
    out.id = c.id;
    out.idh = c.idh;
    out.codel = c.codel;
    out.grade = c.grade;

    for (const auto& [mod, vol] : c.volumes) {
        Volume3D v(Tensor(vol.data.shape), vol.spacing, mod);
        if (spatial)
            kernels::resample_trilinear(vol.data.ptr(), shape[0], shape[1], shape[2], v.data.ptr(),
                                        shape[0], shape[1], shape[2], a.m,
                                        disp.empty() ? nullptr : disp.data(), 0.0);
        else
            v.data = vol.data;
        if (intensity != 1.0)
            for (double& x : v.data.data) x *= intensity;
        out.volumes[mod] = std::move(v);
    }

    if (c.mask) {
        if (spatial) {
            Tensor grid(c.mask->shape);
            for (size_t i = 0; i < c.mask->labels.size(); ++i) grid[int64_t(i)] = double(c.mask->labels[i]);
            Tensor warped(c.mask->shape);
            kernels::resample_nearest(grid.ptr(), shape[0], shape[1], shape[2], warped.ptr(), shape[0],
                                      shape[1], shape[2], a.m, disp.empty() ? nullptr : disp.data(), 0.0);
            MaskVolume m(c.mask->shape, c.mask->spacing);
            for (size_t i = 0; i < m.labels.size(); ++i) m.labels[i] = int32_t(warped[int64_t(i)]);
            out.mask = std::move(m);
        } else {
            out.mask = c.mask;
        }
    }
    return out;
}

}  // namespace mts
