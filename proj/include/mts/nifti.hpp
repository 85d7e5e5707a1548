#pragma once

#include <string>

#include "mts/volume.hpp"

// Minimal NIfTI-1 reader/writer (.nii and .nii.gz). Single 3-D image per
// file; uint8/int16/int32/float32/float64 on read, float32 (volumes) and
// uint8 (masks) on write. scl_slope/scl_inter honored on read.

namespace mts {

Volume3D read_volume_nifti(const std::string& path, Modality modality);
MaskVolume read_mask_nifti(const std::string& path);

void write_nifti(const Volume3D& v, const std::string& path);
void write_nifti(const MaskVolume& m, const std::string& path);

// Raw float volume write used for heatmaps: data in (D, H, W) order.
void write_nifti_raw(const Tensor& grid, const std::array<double, 3>& spacing, const std::string& path);

}  // namespace mts
