#include "mts/phantom.hpp"

#include <cmath>
#include <filesystem>

#include "mts/errors.hpp"
#include "mts/nifti.hpp"
#include "mts/rng.hpp"

namespace fs = std::filesystem;

namespace mts {

void PhantomSpec::validate() const {
    if (grid <= 0) throw PhantomSpecError("phantom grid must be > 0");
    if (core_radius <= 0) throw PhantomSpecError("phantom core radius must be > 0");
    if (rim_thickness < 0) throw PhantomSpecError("phantom rim thickness must be >= 0");
    if (noise_sigma < 0.0) throw PhantomSpecError("phantom noise sigma must be >= 0");
    if (core_radius + rim_thickness + center_jitter >= grid / 2)
        throw PhantomSpecError("phantom lesion (radius " + std::to_string(core_radius) + " + rim " +
                               std::to_string(rim_thickness) + " + jitter " + std::to_string(center_jitter) +
                               ") does not fit inside grid " + std::to_string(grid));
}

namespace {

struct Regions {
    std::array<int64_t, 3> center;
    double core_r, rim_r;
};

Regions lesion_regions(const PhantomSpec& spec, Rng& rng) {
    Regions r;
    const int64_t mid = spec.grid / 2;
    for (int i = 0; i < 3; ++i)
        r.center[size_t(i)] = mid + (spec.center_jitter > 0 ? rng.uniform_int(2 * spec.center_jitter + 1) -
                                                                  spec.center_jitter
                                                            : 0);
    r.core_r = double(spec.core_radius);
    r.rim_r = double(spec.core_radius + spec.rim_thickness);
    return r;
}

enum Region { Background = 0, Core = 1, Rim = 2, RimOuterShell = 3 };

Region region_of(const Regions& r, int64_t z, int64_t y, int64_t x) {
    const double dz = double(z - r.center[0]), dy = double(y - r.center[1]), dx = double(x - r.center[2]);
    const double dist = std::sqrt(dz * dz + dy * dy + dx * dx);
    if (dist <= r.core_r) return Core;
    if (dist <= r.rim_r) return dist > r.rim_r - 1.0 ? RimOuterShell : Rim;
    return Background;
}

}  // namespace

PhantomGeometry phantom_geometry(const PhantomSpec& spec, uint64_t seed) {
    spec.validate();
    Rng rng = Rng(seed).fork(0);
    const Regions r = lesion_regions(spec, rng);
    return {r.center, spec.core_radius, spec.core_radius + spec.rim_thickness};
}

Case generate_phantom(const PhantomSpec& spec, uint64_t seed) {
    spec.validate();
    Rng geometry_rng = Rng(seed).fork(0);
    const Regions reg = lesion_regions(spec, geometry_rng);
    const int64_t n = spec.grid;
    const double c = spec.contrast;

    Case out;
    out.id = "phantom_" + std::to_string(seed);
    out.idh = spec.mismatch ? spec.idh_if_mismatch : spec.idh_otherwise;
    out.grade = spec.mismatch ? spec.grade_if_mismatch : spec.grade_otherwise;
    out.codel = spec.mismatch ? spec.codel_if_mismatch : spec.codel_otherwise;

    // per-region intensity offsets above the background level 1.0
    auto offsets = [&](Modality m) -> std::array<double, 3> {  // {core, rim, outer shell}
        switch (m) {
            case Modality::T1: return {-0.50 * c, -0.25 * c, -0.25 * c};
            case Modality::T1C: return {-0.25 * c, 0.50 * c, 1.00 * c};
            case Modality::T2: return {1.00 * c, 0.50 * c, 0.50 * c};
            case Modality::FLAIR:
                return spec.mismatch ? std::array<double, 3>{-0.75 * c, 1.00 * c, 1.00 * c}
                                     : std::array<double, 3>{1.00 * c, 1.00 * c, 1.00 * c};
        }
        return {0, 0, 0};
    };

    uint64_t stream = 1;
    for (Modality m : kAllModalities) {
        Rng rng = Rng(seed).fork(stream++);
        const auto off = offsets(m);
        Volume3D v(Tensor(Shape{n, n, n}), {1.0, 1.0, 1.0}, m);
        for (int64_t z = 0; z < n; ++z)
            for (int64_t y = 0; y < n; ++y)
                for (int64_t x = 0; x < n; ++x) {
                    double val = 1.0;
                    switch (region_of(reg, z, y, x)) {
                        case Core: val += off[0]; break;
                        case Rim: val += off[1]; break;
                        case RimOuterShell: val += off[2]; break;
                        default: break;
                    }
                    v.at(z, y, x) = val + spec.noise_sigma * rng.normal();
                }
        out.volumes[m] = std::move(v);
    }

    MaskVolume mask(Shape{n, n, n}, {1.0, 1.0, 1.0});
    for (int64_t z = 0; z < n; ++z)
        for (int64_t y = 0; y < n; ++y)
            for (int64_t x = 0; x < n; ++x) {
                const Region r = region_of(reg, z, y, x);
                int32_t label = 0;
                if (spec.subregion_mask) {
                    if (r == Core) label = 1;        // NCR/NET
                    else if (r == Rim) label = 2;    // ED
                    else if (r == RimOuterShell) label = 3;  // ET
                } else if (r != Background) {
                    label = 1;
                }
                mask.at(z, y, x) = label;
            }
    out.mask = std::move(mask);
    out.validate();
    return out;
}

Manifest write_phantom_dataset(const PhantomSpec& spec, int n, uint64_t seed, const std::string& out_dir) {
    spec.validate();
    if (n <= 0) throw PhantomSpecError("nothing to generate: n must be > 0");
    fs::create_directories(out_dir);

    Manifest manifest;
    manifest.dir = out_dir;
    manifest.path = (fs::path(out_dir) / "manifest.csv").string();

    for (int i = 0; i < n; ++i) {
        PhantomSpec s = spec;
        s.mismatch = (i % 2) == 1;
        const uint64_t case_seed = Rng(seed).fork(uint64_t(i + 1)).next_u64();
        Case c = generate_phantom(s, case_seed);

        char name[32];
        std::snprintf(name, sizeof(name), "phantom_%04d", i);
        c.id = name;
        const fs::path dir = fs::path(out_dir) / name;
        fs::create_directories(dir);

        ManifestEntry e;
        e.row = i + 1;
        e.case_id = c.id;
        for (const auto& [m, v] : c.volumes) {
            const std::string p = (dir / (to_string(m) + ".nii.gz")).string();
            write_nifti(v, p);
            e.volume_paths[m] = p;
        }
        e.mask_path = (dir / "mask.nii.gz").string();
        write_nifti(*c.mask, e.mask_path);
        e.idh = c.idh;
        e.codel = c.codel;
        e.grade = c.grade;
        manifest.entries.push_back(std::move(e));
    }
    write_manifest_csv(manifest, manifest.path);
    return manifest;
}

}  // namespace mts
