#pragma once

#include <string>
#include <vector>

#include "mts/volume.hpp"

namespace mts {

enum class Task { Segmentation, IDH, Codel, Grade };
std::string to_string(Task t);
Task task_from_string(const std::string& s);

struct ManifestEntry {
    int row = 0;  // 1-based data row in the CSV, for error messages
    std::string case_id;
    std::map<Modality, std::string> volume_paths;
    std::string mask_path;  // empty when absent
    Idh idh = Idh::Unknown;
    Codel codel = Codel::Unknown;
    Grade grade = Grade::Unknown;
    std::string split;

    bool has(Modality m) const { return volume_paths.count(m) != 0; }
    bool has_mask() const { return !mask_path.empty(); }
    bool label_known(Task t) const;
    int class_label(Task t) const;  // 1 = positive class (mutant/codeleted/HGG)

    // Inclusion rules per task: classification needs a known label plus the
    // required modalities; segmentation needs a mask.
    bool eligible(Task t, const std::vector<Modality>& required) const;
    bool eligible(Task t) const;  // task-default modality requirements
};

struct Manifest {
    std::string path;
    std::string dir;
    std::vector<ManifestEntry> entries;

    std::vector<ManifestEntry> eligible_entries(Task t, const std::vector<Modality>& required) const;
};

// Parses and validates a manifest CSV:
//   case_id,t1,t1c,t2,flair,mask,idh,codel,grade,split
// Empty cells mean "absent"/"unknown". Referenced paths (relative to the
// manifest directory) must exist. Throws ManifestError naming the row.
Manifest validate_manifest(const std::string& path);

void write_manifest_csv(const Manifest& m, const std::string& path);

// Loads all modalities of an entry, cross-checks shapes, then preprocesses
// each volume with znormalize followed by a centered crop_or_pad. The mask is
// crop/padded with the same target. Honors the MTSUNET_CACHE directory.
Case load_case(const ManifestEntry& entry, const std::array<int64_t, 3>& target = {96, 96, 96});

std::vector<Modality> default_modalities(Task t);

}  // namespace mts
