#pragma once

#include <cstdint>
#include <string>

#include "mts/manifest.hpp"
#include "mts/volume.hpp"

namespace mts {

// Synthetic spherical-lesion phantom with a controllable T2-FLAIR mismatch
// pattern: the core is hyperintense on T2; with the mismatch flag set the
// FLAIR core is suppressed below background while the rim stays bright,
// otherwise the FLAIR core is bright like the T2 core.
struct PhantomSpec {
    int64_t grid = 32;            // cubic grid edge, voxels
    int64_t core_radius = 5;      // voxels
    int64_t rim_thickness = 2;    // voxels
    bool mismatch = false;
    double noise_sigma = 0.05;    // intensity units
    double contrast = 0.4;        // core/rim elevation above background
    int64_t center_jitter = 3;    // max |offset| of lesion center per axis
    bool subregion_mask = false;  // emit {1=NCR/NET, 2=ED, 3=ET} instead of binary

    // label assignment rule; defaults follow the ledger:
    // mismatch => IDH-mutant, grade LGG, 1p/19q intact
    Idh idh_if_mismatch = Idh::Mutant;
    Idh idh_otherwise = Idh::Wildtype;
    Grade grade_if_mismatch = Grade::LGG;
    Grade grade_otherwise = Grade::HGG;
    Codel codel_if_mismatch = Codel::Intact;
    Codel codel_otherwise = Codel::Codeleted;

    void validate() const;
};

// Deterministic in (spec, seed): two calls yield bit-identical cases.
Case generate_phantom(const PhantomSpec& spec, uint64_t seed);

// Lesion geometry of a generated phantom, reproduced from (spec, seed)
// without regenerating the volumes. Used by evaluation helpers.
struct PhantomGeometry {
    std::array<int64_t, 3> center;
    int64_t core_radius;
    int64_t rim_outer;  // core_radius + rim_thickness
};
PhantomGeometry phantom_geometry(const PhantomSpec& spec, uint64_t seed);

// Writes n cases under out_dir (one directory per case, NIfTI volumes +
// mask) plus a manifest.csv; cases alternate non-mismatch/mismatch so any
// prefix is roughly balanced. Returns the manifest.
Manifest write_phantom_dataset(const PhantomSpec& spec, int n, uint64_t seed, const std::string& out_dir);

}  // namespace mts
