#pragma once

#include <array>

#include "mts/volume.hpp"

namespace mts {

struct AugmentParams {
    double flip_prob = 0.5;            // per axis
    double max_rotation_deg = 15.0;    // per axis, uniform in +/- range
    double intensity_lo = 0.9;
    double intensity_hi = 1.1;
    double elastic_sigma = 4.0;        // Gaussian smoothing of the field, voxels
    double elastic_magnitude = 2.0;    // max displacement, voxels
    bool enable_flip = true;
    bool enable_rotation = true;
    bool enable_intensity = true;
    bool enable_elastic = true;
};

// Random flips, small rotations, intensity scaling, and elastic deformation.
// The same spatial transform is applied to every modality and (with nearest-
// neighbour sampling) to the mask; intensity scaling leaves the mask alone
// and labels are never touched. Deterministic per (case, seed).
Case augment(const Case& c, uint64_t seed, const AugmentParams& params = {});

// building blocks, used directly by tests
Volume3D flip_volume(const Volume3D& v, int axis);
MaskVolume flip_mask(const MaskVolume& m, int axis);
Volume3D rotate_volume(const Volume3D& v, const std::array<double, 3>& angles_deg);  // trilinear
MaskVolume rotate_mask(const MaskVolume& m, const std::array<double, 3>& angles_deg);  // nearest

}  // namespace mts
