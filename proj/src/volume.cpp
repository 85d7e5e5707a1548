#include "mts/volume.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "mts/errors.hpp"

namespace mts {

namespace {
std::function<void(const std::string&)>& warning_handler() {
    static std::function<void(const std::string&)> handler = [](const std::string& msg) {
        std::cerr << "[warn] " << msg << "\n";
    };
    return handler;
}
}  // namespace

void log_warn(const std::string& msg) { warning_handler()(msg); }

// an empty handler restores the default stderr sink
void set_warning_handler(std::function<void(const std::string&)> fn) {
    if (fn)
        warning_handler() = std::move(fn);
    else
        warning_handler() = [](const std::string& msg) { std::cerr << "[warn] " << msg << "\n"; };
}

std::string to_string(Modality m) {
    switch (m) {
        case Modality::T1: return "t1";
        case Modality::T1C: return "t1c";
        case Modality::T2: return "t2";
        case Modality::FLAIR: return "flair";
    }
    return "?";
}

std::string to_string(Idh v) {
    switch (v) {
        case Idh::Mutant: return "mutant";
        case Idh::Wildtype: return "wildtype";
        default: return "unknown";
    }
}

std::string to_string(Codel v) {
    switch (v) {
        case Codel::Codeleted: return "codeleted";
        case Codel::Intact: return "intact";
        default: return "unknown";
    }
}

std::string to_string(Grade v) {
    switch (v) {
        case Grade::LGG: return "LGG";
        case Grade::HGG: return "HGG";
        default: return "unknown";
    }
}

namespace {
std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return s;
}
}  // namespace

Modality modality_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "t1") return Modality::T1;
    if (v == "t1c" || v == "t1ce") return Modality::T1C;
    if (v == "t2") return Modality::T2;
    if (v == "flair") return Modality::FLAIR;
    throw LabelError("unknown modality '" + s + "'");
}

Idh idh_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "mutant" || v == "mt") return Idh::Mutant;
    if (v == "wildtype" || v == "wt") return Idh::Wildtype;
    if (v == "unknown" || v.empty()) return Idh::Unknown;
    throw LabelError("unparseable IDH label '" + s + "'");
}

Codel codel_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "codeleted") return Codel::Codeleted;
    if (v == "intact") return Codel::Intact;
    if (v == "unknown" || v.empty()) return Codel::Unknown;
    throw LabelError("unparseable 1p/19q label '" + s + "'");
}

Grade grade_from_string(const std::string& s) {
    const std::string v = lower(s);
    if (v == "lgg") return Grade::LGG;
    if (v == "hgg") return Grade::HGG;
    if (v == "unknown" || v.empty()) return Grade::Unknown;
    throw LabelError("unparseable grade label '" + s + "'");
}

Volume3D::Volume3D(Tensor t, std::array<double, 3> sp, Modality m)
    : data(std::move(t)), spacing(sp), modality(m) {
    if (data.rank() != 3) throw ShapeError("Volume3D expects rank-3 data, got " + shape_str(data.shape));
}

void Volume3D::validate() const {
    if (data.rank() != 3) throw ShapeError("Volume3D: rank-3 data required");
    for (int64_t d : data.shape)
        if (d <= 0) throw ShapeError("Volume3D: non-positive dimension");
    for (double s : spacing)
        if (!(s > 0.0)) throw DomainError("Volume3D: spacing components must be > 0");
    if (!data.all_finite()) throw DomainError("Volume3D: NaN/Inf in data");
}

MaskVolume::MaskVolume(Shape s, std::array<double, 3> sp)
    : shape(std::move(s)), labels(size_t(shape_numel(shape)), 0), spacing(sp) {
    if (shape.size() != 3) throw ShapeError("MaskVolume expects rank-3 shape");
}

int32_t MaskVolume::max_label() const {
    int32_t mx = 0;
    for (int32_t v : labels) mx = std::max(mx, v);
    return mx;
}

int64_t MaskVolume::count(int32_t label) const {
    return std::count(labels.begin(), labels.end(), label);
}

MaskVolume MaskVolume::binarized() const {
    MaskVolume out(shape, spacing);
    for (size_t i = 0; i < labels.size(); ++i) out.labels[i] = labels[i] != 0 ? 1 : 0;
    return out;
}

void MaskVolume::validate(int32_t max_allowed) const {
    for (int32_t v : labels)
        if (v < 0 || v > max_allowed)
            throw LabelError("mask label " + std::to_string(v) + " outside declared set [0," +
                             std::to_string(max_allowed) + "]");
}

const Volume3D& Case::volume(Modality m) const {
    auto it = volumes.find(m);
    if (it == volumes.end()) throw CaseError("case " + id + ": modality " + to_string(m) + " absent");
    return it->second;
}

void Case::validate() const {
    if (volumes.empty()) throw CaseError("case " + id + ": no modalities present");
    const Volume3D* first = nullptr;
    for (const auto& [m, v] : volumes) {
        v.validate();
        if (!first) {
            first = &v;
            continue;
        }
        if (v.shape() != first->shape())
            throw CaseError("case " + id + ": " + to_string(m) + " shape " + shape_str(v.shape()) +
                            " != " + to_string(first->modality) + " shape " + shape_str(first->shape()));
        if (v.spacing != first->spacing) throw CaseError("case " + id + ": spacing mismatch across modalities");
    }
    if (mask) {
        if (mask->shape != first->shape())
            throw CaseError("case " + id + ": mask shape " + shape_str(mask->shape) +
                            " != volume shape " + shape_str(first->shape()));
        mask->validate();
    }
}

Volume3D znormalize(const Volume3D& v) {
    if (!v.data.all_finite()) throw DomainError("znormalize: input contains NaN/Inf");
    const int64_t n = v.numel();
    const double mean = v.data.sum() / double(n);
    double var = 0.0;
    for (double x : v.data.data) var += (x - mean) * (x - mean);
    const double sd = std::sqrt(var / double(n));

    Volume3D out = v;
    if (sd <= 1e-8) {
        log_warn("znormalize: constant volume (" + to_string(v.modality) + "), returning zeros");
        std::fill(out.data.data.begin(), out.data.data.end(), 0.0);
        return out;
    }
    for (double& x : out.data.data) x = (x - mean) / sd;
    return out;
}

namespace {

// Source index range copied into the destination, per axis: a centered
// crop/pad places source voxel (in-t)/2 .. at destination 0 (crop) or source
// 0 at destination (t-in)/2 (pad).
struct AxisMap {
    int64_t src_begin, dst_begin, count;
};

AxisMap axis_map(int64_t in, int64_t target) {
    if (in >= target) return {(in - target) / 2, 0, target};
    return {0, (target - in) / 2, in};
}

}  // namespace

Volume3D crop_or_pad(const Volume3D& v, const std::array<int64_t, 3>& target) {
    for (int64_t t : target)
        if (t <= 0) throw ShapeError("crop_or_pad: target dims must be > 0");
    const Shape& s = v.shape();
    if (s[0] == target[0] && s[1] == target[1] && s[2] == target[2]) return v;

    Volume3D out(Tensor(Shape{target[0], target[1], target[2]}), v.spacing, v.modality);
    const AxisMap mz = axis_map(s[0], target[0]), my = axis_map(s[1], target[1]), mx = axis_map(s[2], target[2]);
    for (int64_t z = 0; z < mz.count; ++z)
        for (int64_t y = 0; y < my.count; ++y) {
            const double* src = v.data.ptr() + ((mz.src_begin + z) * s[1] + (my.src_begin + y)) * s[2] + mx.src_begin;
            double* dst = out.data.ptr() +
                          ((mz.dst_begin + z) * target[1] + (my.dst_begin + y)) * target[2] + mx.dst_begin;
            std::copy_n(src, mx.count, dst);
        }
    return out;
}

MaskVolume crop_or_pad(const MaskVolume& m, const std::array<int64_t, 3>& target) {
    for (int64_t t : target)
        if (t <= 0) throw ShapeError("crop_or_pad: target dims must be > 0");
    if (m.shape[0] == target[0] && m.shape[1] == target[1] && m.shape[2] == target[2]) return m;

    MaskVolume out(Shape{target[0], target[1], target[2]}, m.spacing);
    const AxisMap mz = axis_map(m.shape[0], target[0]), my = axis_map(m.shape[1], target[1]),
                  mx = axis_map(m.shape[2], target[2]);
    for (int64_t z = 0; z < mz.count; ++z)
        for (int64_t y = 0; y < my.count; ++y) {
            const int32_t* src =
                m.labels.data() + ((mz.src_begin + z) * m.shape[1] + (my.src_begin + y)) * m.shape[2] + mx.src_begin;
            int32_t* dst = out.labels.data() +
                           ((mz.dst_begin + z) * target[1] + (my.dst_begin + y)) * target[2] + mx.dst_begin;
            std::copy_n(src, mx.count, dst);
        }
    return out;
}

}  // namespace mts
