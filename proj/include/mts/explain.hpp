#pragma once

#include <string>

#include "mts/model.hpp"

namespace mts {

struct Heatmap {
    Tensor values;           // (D, H, W), aligned to the input voxel grid
    std::string method;      // "occlusion" or "gradcam"
    std::string layer;       // gradcam source layer tag
    int target_class = 0;
    double baseline = 0.0;   // occlusion: unoccluded target-class probability
};

// Probability drop when a patch is replaced by `fill`, evaluated on the
// stride grid and nearest-neighbour upsampled to voxel space. target_class -1
// means the model's own prediction.
Heatmap occlusion_map(const MtsModel& model, const Case& c, const std::array<int64_t, 3>& patch,
                      const std::array<int64_t, 3>& stride, double fill, int target_class = -1);

// Gradient-weighted activation map at a chosen layer (x1..x4, cmd_t2,
// cmd_flair), ReLU'd, trilinearly upsampled and max-normalized to [0, 1].
// A layer that the target score does not depend on yields an all-zero map.
Heatmap gradcam(const MtsModel& model, const Case& c, const std::string& layer, int target_class = -1);

// every voxel is covered by at least one occlusion window when stride <= patch
int64_t occlusion_positions(int64_t extent, int64_t stride);

}  // namespace mts
