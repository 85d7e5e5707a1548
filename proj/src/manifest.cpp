#include "mts/manifest.hpp"

#include <sys/stat.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "mts/errors.hpp"
#include "mts/nifti.hpp"

namespace fs = std::filesystem;

namespace mts {

std::string to_string(Task t) {
    switch (t) {
        case Task::Segmentation: return "segmentation";
        case Task::IDH: return "idh";
        case Task::Codel: return "codel";
        case Task::Grade: return "grade";
    }
    return "?";
}

Task task_from_string(const std::string& s) {
    if (s == "segmentation" || s == "seg") return Task::Segmentation;
    if (s == "idh") return Task::IDH;
    if (s == "codel" || s == "1p19q") return Task::Codel;
    if (s == "grade") return Task::Grade;
    throw ConfigError("unknown task '" + s + "' (expected segmentation|idh|codel|grade)");
}

bool ManifestEntry::label_known(Task t) const {
    switch (t) {
        case Task::IDH: return idh != Idh::Unknown;
        case Task::Codel: return codel != Codel::Unknown;
        case Task::Grade: return grade != Grade::Unknown;
        case Task::Segmentation: return has_mask();
    }
    return false;
}

int ManifestEntry::class_label(Task t) const {
    switch (t) {
        case Task::IDH:
            if (idh == Idh::Unknown) throw DataError("case " + case_id + ": IDH label unknown");
            return idh == Idh::Mutant ? 1 : 0;
        case Task::Codel:
            if (codel == Codel::Unknown) throw DataError("case " + case_id + ": 1p/19q label unknown");
            return codel == Codel::Codeleted ? 1 : 0;
        case Task::Grade:
            if (grade == Grade::Unknown) throw DataError("case " + case_id + ": grade label unknown");
            return grade == Grade::HGG ? 1 : 0;
        case Task::Segmentation: throw DataError("segmentation has no class label");
    }
    return 0;
}

bool ManifestEntry::eligible(Task t, const std::vector<Modality>& required) const {
    for (Modality m : required)
        if (!has(m)) return false;
    if (t == Task::Segmentation) return has_mask();
    return label_known(t);
}

std::vector<Modality> default_modalities(Task t) {
    switch (t) {
        case Task::IDH:
        case Task::Segmentation:
            return {Modality::T1, Modality::T1C, Modality::T2, Modality::FLAIR};
        case Task::Codel:
        case Task::Grade:
            return {Modality::T1C, Modality::T2};
    }
    return {};
}

bool ManifestEntry::eligible(Task t) const { return eligible(t, default_modalities(t)); }

std::vector<ManifestEntry> Manifest::eligible_entries(Task t, const std::vector<Modality>& required) const {
    std::vector<ManifestEntry> out;
    for (const auto& e : entries)
        if (e.eligible(t, required)) out.push_back(e);
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream is(line);
    while (std::getline(is, cell, ',')) {
        if (!cell.empty() && cell.back() == '\r') cell.pop_back();
        cells.push_back(cell);
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

const std::vector<std::string> kColumns = {"case_id", "t1", "t1c", "t2", "flair",
                                           "mask",    "idh", "codel", "grade", "split"};

std::string resolve(const std::string& dir, const std::string& p) {
    fs::path path(p);
    if (path.is_absolute()) return p;
    return (fs::path(dir) / path).string();
}

}  // namespace

Manifest validate_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ManifestError("manifest not readable: " + path);

    Manifest m;
    m.path = path;
    m.dir = fs::path(path).parent_path().string();

    std::string line;
    if (!std::getline(in, line)) throw ManifestError(path + ": empty manifest");
    auto header = split_csv_line(line);
    if (header != kColumns) {
        std::string want;
        for (size_t i = 0; i < kColumns.size(); ++i) want += (i ? "," : "") + kColumns[i];
        throw ManifestError(path + ": bad header, expected '" + want + "'");
    }

    std::set<std::string> seen_ids;
    int row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty() || line == "\r") continue;
        auto cells = split_csv_line(line);
        if (cells.size() != kColumns.size())
            throw ManifestError(path + " row " + std::to_string(row) + ": expected " +
                                std::to_string(kColumns.size()) + " columns, got " + std::to_string(cells.size()));
        ManifestEntry e;
        e.row = row;
        e.case_id = cells[0];
        if (e.case_id.empty()) throw ManifestError(path + " row " + std::to_string(row) + ": empty case_id");
        if (!seen_ids.insert(e.case_id).second)
            throw ManifestError(path + " row " + std::to_string(row) + ": duplicate case_id '" + e.case_id + "'");

        const Modality mods[4] = {Modality::T1, Modality::T1C, Modality::T2, Modality::FLAIR};
        for (int i = 0; i < 4; ++i) {
            if (cells[size_t(1 + i)].empty()) continue;
            std::string p = resolve(m.dir, cells[size_t(1 + i)]);
            if (!fs::exists(p))
                throw ManifestError(path + " row " + std::to_string(row) + ": missing " + to_string(mods[i]) +
                                    " file " + p);
            e.volume_paths[mods[i]] = p;
        }
        if (e.volume_paths.empty())
            throw ManifestError(path + " row " + std::to_string(row) + ": no modalities listed");
        if (!cells[5].empty()) {
            e.mask_path = resolve(m.dir, cells[5]);
            if (!fs::exists(e.mask_path))
                throw ManifestError(path + " row " + std::to_string(row) + ": missing mask file " + e.mask_path);
        }
        try {
            e.idh = idh_from_string(cells[6]);
            e.codel = codel_from_string(cells[7]);
            e.grade = grade_from_string(cells[8]);
        } catch (const LabelError& err) {
            throw ManifestError(path + " row " + std::to_string(row) + ": " + err.what());
        }
        e.split = cells[9];
        m.entries.push_back(std::move(e));
    }
    return m;
}

void write_manifest_csv(const Manifest& m, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    for (size_t i = 0; i < kColumns.size(); ++i) out << (i ? "," : "") << kColumns[i];
    out << "\n";
    const fs::path base = fs::path(path).parent_path();
    auto rel = [&](const std::string& p) {
        if (p.empty()) return std::string();
        std::error_code ec;
        const fs::path r = fs::relative(p, base, ec);
        return ec ? p : r.string();
    };
    for (const auto& e : m.entries) {
        const Modality mods[4] = {Modality::T1, Modality::T1C, Modality::T2, Modality::FLAIR};
        out << e.case_id;
        for (Modality mod : mods)
            out << "," << (e.has(mod) ? rel(e.volume_paths.at(mod)) : "");
        out << "," << rel(e.mask_path);
        out << "," << (e.idh == Idh::Unknown ? "" : to_string(e.idh));
        out << "," << (e.codel == Codel::Unknown ? "" : to_string(e.codel));
        out << "," << (e.grade == Grade::Unknown ? "" : to_string(e.grade));
        out << "," << e.split << "\n";
    }
    if (!out) throw IoError("write failed for " + path);
}

// ---------------------------------------------------------------------------
// case loading with optional preprocessed-case cache
// ---------------------------------------------------------------------------

namespace {

uint64_t fnv1a(const std::string& s, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string cache_key(const ManifestEntry& e, const std::array<int64_t, 3>& target) {
    std::ostringstream os;
    os << e.case_id << '|' << target[0] << 'x' << target[1] << 'x' << target[2];
    auto stamp = [&](const std::string& p) {
        struct stat st {};
        if (p.empty() || stat(p.c_str(), &st) != 0) return;
        os << '|' << p << ':' << st.st_size << ':' << st.st_mtime;
    };
    for (const auto& [m, p] : e.volume_paths) stamp(p);
    stamp(e.mask_path);
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)fnv1a(os.str()));
    return buf;
}

bool load_cached_case(const std::string& file, Case& c) {
    std::ifstream in(file, std::ios::binary);
    if (!in) return false;
    auto rd = [&](void* p, size_t n) { in.read(reinterpret_cast<char*>(p), std::streamsize(n)); };
    uint32_t magic = 0, n_vols = 0, has_mask = 0;
    rd(&magic, 4);
    if (magic != 0x4d545343u) return false;  // "MTSC"
    rd(&n_vols, 4);
    rd(&has_mask, 4);
    for (uint32_t i = 0; i < n_vols; ++i) {
        int32_t mod = 0;
        int64_t dims[3];
        double sp[3];
        rd(&mod, 4);
        rd(dims, sizeof(dims));
        rd(sp, sizeof(sp));
        Volume3D v(Tensor(Shape{dims[0], dims[1], dims[2]}), {sp[0], sp[1], sp[2]}, Modality(mod));
        rd(v.data.ptr(), size_t(v.numel()) * 8);
        c.volumes[Modality(mod)] = std::move(v);
    }
    if (has_mask) {
        int64_t dims[3];
        double sp[3];
        rd(dims, sizeof(dims));
        rd(sp, sizeof(sp));
        MaskVolume mv(Shape{dims[0], dims[1], dims[2]}, {sp[0], sp[1], sp[2]});
        rd(mv.labels.data(), mv.labels.size() * 4);
        c.mask = std::move(mv);
    }
    return bool(in);
}

void store_cached_case(const std::string& file, const Case& c) {
    std::ofstream out(file + ".tmp", std::ios::binary);
    if (!out) return;
    auto wr = [&](const void* p, size_t n) { out.write(reinterpret_cast<const char*>(p), std::streamsize(n)); };
    const uint32_t magic = 0x4d545343u, n_vols = uint32_t(c.volumes.size()), has_mask = c.mask ? 1 : 0;
    wr(&magic, 4);
    wr(&n_vols, 4);
    wr(&has_mask, 4);
    for (const auto& [m, v] : c.volumes) {
        const int32_t mod = int32_t(m);
        wr(&mod, 4);
        wr(v.shape().data(), 24);
        wr(v.spacing.data(), 24);
        wr(v.data.ptr(), size_t(v.numel()) * 8);
    }
    if (c.mask) {
        wr(c.mask->shape.data(), 24);
        wr(c.mask->spacing.data(), 24);
        wr(c.mask->labels.data(), c.mask->labels.size() * 4);
    }
    out.close();
    std::error_code ec;
    fs::rename(file + ".tmp", file, ec);
}

}  // namespace

Case load_case(const ManifestEntry& entry, const std::array<int64_t, 3>& target) {
    Case c;
    c.id = entry.case_id;
    c.idh = entry.idh;
    c.codel = entry.codel;
    c.grade = entry.grade;

    const char* cache_dir = std::getenv("MTSUNET_CACHE");
    std::string cache_file;
    if (cache_dir && *cache_dir) {
        std::error_code ec;
        fs::create_directories(cache_dir, ec);
        cache_file = (fs::path(cache_dir) / (cache_key(entry, target) + ".case")).string();
        if (load_cached_case(cache_file, c)) return c;
        c.volumes.clear();
        c.mask.reset();
    }

    Shape ref_shape;
    Modality ref_mod = Modality::T1;
    for (const auto& [mod, path] : entry.volume_paths) {
        Volume3D v = read_volume_nifti(path, mod);
        if (ref_shape.empty()) {
            ref_shape = v.shape();
            ref_mod = mod;
        } else if (v.shape() != ref_shape) {
            throw CaseError("case " + entry.case_id + ": " + to_string(mod) + " shape " + shape_str(v.shape()) +
                            " != " + to_string(ref_mod) + " shape " + shape_str(ref_shape));
        }
        c.volumes[mod] = crop_or_pad(znormalize(v), target);
    }
    if (entry.has_mask()) {
        MaskVolume mv = read_mask_nifti(entry.mask_path);
        if (mv.shape != ref_shape)
            throw CaseError("case " + entry.case_id + ": mask shape " + shape_str(mv.shape) +
                            " != volume shape " + shape_str(ref_shape));
        c.mask = crop_or_pad(mv, target);
    }
    c.validate();
    if (!cache_file.empty()) store_cached_case(cache_file, c);
    return c;
}

}  // namespace mts
