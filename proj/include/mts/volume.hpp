#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mts/tensor.hpp"

namespace mts {

// warning sink, replaceable by tests
void log_warn(const std::string& msg);
void set_warning_handler(std::function<void(const std::string&)> fn);

enum class Modality { T1, T1C, T2, FLAIR };
enum class Idh { Mutant, Wildtype, Unknown };
enum class Codel { Codeleted, Intact, Unknown };
enum class Grade { LGG, HGG, Unknown };

std::string to_string(Modality m);
std::string to_string(Idh v);
std::string to_string(Codel v);
std::string to_string(Grade v);
Modality modality_from_string(const std::string& s);
Idh idh_from_string(const std::string& s);
Codel codel_from_string(const std::string& s);
Grade grade_from_string(const std::string& s);

constexpr std::array<Modality, 4> kAllModalities{Modality::T1, Modality::T1C, Modality::T2, Modality::FLAIR};

// Intensity volume on a regular grid, shape (D, H, W), x fastest.
struct Volume3D {
    Tensor data;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm, same axis order as shape
    Modality modality = Modality::T1;

    Volume3D() = default;
    Volume3D(Tensor t, std::array<double, 3> sp, Modality m);

    const Shape& shape() const { return data.shape; }
    int64_t numel() const { return data.numel(); }
    double& at(int64_t z, int64_t y, int64_t x) {
        return data[(z * data.shape[1] + y) * data.shape[2] + x];
    }
    double at(int64_t z, int64_t y, int64_t x) const {
        return data[(z * data.shape[1] + y) * data.shape[2] + x];
    }
    void validate() const;  // dims > 0, spacing > 0, finite
};

// Integer label volume. Binary masks use {0, 1}; subregion masks use
// {0=background, 1=NCR/NET, 2=ED, 3=ET}.
struct MaskVolume {
    Shape shape;
    std::vector<int32_t> labels;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};

    MaskVolume() = default;
    MaskVolume(Shape s, std::array<double, 3> sp);

    int64_t numel() const { return int64_t(labels.size()); }
    int32_t& at(int64_t z, int64_t y, int64_t x) {
        return labels[size_t((z * shape[1] + y) * shape[2] + x)];
    }
    int32_t at(int64_t z, int64_t y, int64_t x) const {
        return labels[size_t((z * shape[1] + y) * shape[2] + x)];
    }
    int32_t max_label() const;
    int64_t count(int32_t label) const;
    MaskVolume binarized() const;  // any nonzero label -> 1
    void validate(int32_t max_allowed = 3) const;
};

// One patient: aligned multi-modal volumes, optional mask, labels.
struct Case {
    std::string id;
    std::map<Modality, Volume3D> volumes;
    std::optional<MaskVolume> mask;
    Idh idh = Idh::Unknown;
    Codel codel = Codel::Unknown;
    Grade grade = Grade::Unknown;

    bool has(Modality m) const { return volumes.count(m) != 0; }
    const Volume3D& volume(Modality m) const;
    void validate() const;  // shape/spacing agreement across modalities and mask
};

// z-score standardization over the full grid. Constant input (std <= 1e-8)
// returns all zeros and emits a warning.
Volume3D znormalize(const Volume3D& v);

// Center crop/pad to target; padding fills 0 (post-z-score background).
Volume3D crop_or_pad(const Volume3D& v, const std::array<int64_t, 3>& target);
MaskVolume crop_or_pad(const MaskVolume& m, const std::array<int64_t, 3>& target);

}  // namespace mts
