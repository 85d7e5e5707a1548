#include "mts/nifti.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "mts/errors.hpp"

namespace mts {

namespace {

constexpr int kHeaderSize = 348;
constexpr int kVoxOffset = 352;

enum NiftiType : int16_t {
    DT_UINT8 = 2,
    DT_INT16 = 4,
    DT_INT32 = 8,
    DT_FLOAT32 = 16,
    DT_FLOAT64 = 64,
};

struct Header {
    int16_t dim[8] = {0};
    int16_t datatype = 0;
    int16_t bitpix = 0;
    float pixdim[8] = {0};
    float scl_slope = 0;
    float scl_inter = 0;
};

template <typename T>
void put(std::vector<unsigned char>& buf, size_t offset, T value) {
    std::memcpy(buf.data() + offset, &value, sizeof(T));
}

template <typename T>
T get(const unsigned char* buf, size_t offset) {
    T value;
    std::memcpy(&value, buf + offset, sizeof(T));
    return value;
}

class GzReader {
public:
    explicit GzReader(const std::string& path) : path_(path), f_(gzopen(path.c_str(), "rb")) {
        if (!f_) throw IoError("cannot open " + path);
    }
    ~GzReader() {
        if (f_) gzclose(f_);
    }
    void read(void* dst, size_t n) {
        if (gzread(f_, dst, unsigned(n)) != int(n)) throw IoError("short read from " + path_);
    }

private:
    std::string path_;
    gzFile f_ = nullptr;
};

Header read_header(GzReader& in, const std::string& path) {
    std::vector<unsigned char> raw(kHeaderSize);
    in.read(raw.data(), raw.size());
    if (get<int32_t>(raw.data(), 0) != kHeaderSize)
        throw IoError(path + ": not a NIfTI-1 file (bad sizeof_hdr)");
    const char* magic = reinterpret_cast<const char*>(raw.data() + 344);
    if (std::strncmp(magic, "n+1", 3) != 0 && std::strncmp(magic, "ni1", 3) != 0)
        throw IoError(path + ": not a NIfTI-1 file (bad magic)");

    Header h;
    for (int i = 0; i < 8; ++i) h.dim[i] = get<int16_t>(raw.data(), 40 + 2 * size_t(i));
    h.datatype = get<int16_t>(raw.data(), 70);
    h.bitpix = get<int16_t>(raw.data(), 72);
    for (int i = 0; i < 8; ++i) h.pixdim[i] = get<float>(raw.data(), 76 + 4 * size_t(i));
    h.scl_slope = get<float>(raw.data(), 112);
    h.scl_inter = get<float>(raw.data(), 116);

    const float vox_offset = get<float>(raw.data(), 108);
    if (vox_offset < float(kHeaderSize)) throw IoError(path + ": bad vox_offset");
    std::vector<unsigned char> skip(size_t(vox_offset) - kHeaderSize);
    if (!skip.empty()) in.read(skip.data(), skip.size());

    int ndim = h.dim[0];
    if (ndim == 4 && h.dim[4] == 1) ndim = 3;
    if (ndim != 3) throw IoError(path + ": expected a 3-D image, dim[0]=" + std::to_string(h.dim[0]));
    for (int i = 1; i <= 3; ++i)
        if (h.dim[i] <= 0) throw IoError(path + ": non-positive dimension");
    return h;
}

std::vector<double> read_data(GzReader& in, const Header& h, const std::string& path) {
    const int64_t n = int64_t(h.dim[1]) * h.dim[2] * h.dim[3];
    std::vector<double> out(static_cast<size_t>(n));
    auto convert = [&](auto tag) {
        using T = decltype(tag);
        std::vector<T> raw(static_cast<size_t>(n));
        in.read(raw.data(), raw.size() * sizeof(T));
        for (int64_t i = 0; i < n; ++i) out[size_t(i)] = double(raw[size_t(i)]);
    };
    switch (h.datatype) {
        case DT_UINT8: convert(uint8_t{}); break;
        case DT_INT16: convert(int16_t{}); break;
        case DT_INT32: convert(int32_t{}); break;
        case DT_FLOAT32: convert(float{}); break;
        case DT_FLOAT64: convert(double{}); break;
        default: throw IoError(path + ": unsupported datatype " + std::to_string(h.datatype));
    }
    if (h.scl_slope != 0.0f && (h.scl_slope != 1.0f || h.scl_inter != 0.0f))
        for (double& v : out) v = double(h.scl_slope) * v + double(h.scl_inter);
    return out;
}

std::array<double, 3> spacing_from(const Header& h) {
    // pixdim is (x, y, z); internal spacing follows the (D, H, W) data order
    auto fix = [](float v) { return v > 0.0f ? double(v) : 1.0; };
    return {fix(h.pixdim[3]), fix(h.pixdim[2]), fix(h.pixdim[1])};
}

std::vector<unsigned char> make_header(const Shape& shape, const std::array<double, 3>& spacing,
                                       int16_t datatype, int16_t bitpix) {
    std::vector<unsigned char> raw(kHeaderSize, 0);
    put<int32_t>(raw, 0, kHeaderSize);
    put<int16_t>(raw, 40, 3);
    put<int16_t>(raw, 42, int16_t(shape[2]));  // nx = W
    put<int16_t>(raw, 44, int16_t(shape[1]));  // ny = H
    put<int16_t>(raw, 46, int16_t(shape[0]));  // nz = D
    for (int i = 4; i < 8; ++i) put<int16_t>(raw, 40 + 2 * size_t(i), 1);
    put<int16_t>(raw, 70, datatype);
    put<int16_t>(raw, 72, bitpix);
    put<float>(raw, 76, 1.0f);
    put<float>(raw, 80, float(spacing[2]));
    put<float>(raw, 84, float(spacing[1]));
    put<float>(raw, 88, float(spacing[0]));
    put<float>(raw, 108, float(kVoxOffset));
    put<float>(raw, 112, 1.0f);  // scl_slope
    raw[344] = 'n';
    raw[345] = '+';
    raw[346] = '1';
    return raw;
}

bool has_gz_suffix(const std::string& path) {
    return path.size() > 3 && path.compare(path.size() - 3, 3, ".gz") == 0;
}

void write_blob(const std::string& path, const std::vector<unsigned char>& header,
                const void* data, size_t bytes) {
    const unsigned char pad[kVoxOffset - kHeaderSize] = {0};
    if (has_gz_suffix(path)) {
        gzFile f = gzopen(path.c_str(), "wb");
        if (!f) throw IoError("cannot write " + path);
        bool ok = gzwrite(f, header.data(), unsigned(header.size())) == int(header.size()) &&
                  gzwrite(f, pad, sizeof(pad)) == int(sizeof(pad)) &&
                  gzwrite(f, data, unsigned(bytes)) == int(bytes);
        gzclose(f);
        if (!ok) throw IoError("write failed for " + path);
    } else {
        FILE* f = std::fopen(path.c_str(), "wb");
        if (!f) throw IoError("cannot write " + path);
        bool ok = std::fwrite(header.data(), 1, header.size(), f) == header.size() &&
                  std::fwrite(pad, 1, sizeof(pad), f) == sizeof(pad) &&
                  std::fwrite(data, 1, bytes, f) == bytes;
        std::fclose(f);
        if (!ok) throw IoError("write failed for " + path);
    }
}

}  // namespace

Volume3D read_volume_nifti(const std::string& path, Modality modality) {
    GzReader in(path);
    const Header h = read_header(in, path);
    std::vector<double> data = read_data(in, h, path);
    Tensor t(Shape{h.dim[3], h.dim[2], h.dim[1]}, std::move(data));
    Volume3D v(std::move(t), spacing_from(h), modality);
    if (!v.data.all_finite()) throw IoError(path + ": NaN/Inf voxels");
    return v;
}

MaskVolume read_mask_nifti(const std::string& path) {
    GzReader in(path);
    const Header h = read_header(in, path);
    if (h.datatype != DT_UINT8 && h.datatype != DT_INT16 && h.datatype != DT_INT32)
        throw IoError(path + ": masks must be integer-typed, got datatype " + std::to_string(h.datatype));
    std::vector<double> data = read_data(in, h, path);
    MaskVolume m(Shape{h.dim[3], h.dim[2], h.dim[1]}, spacing_from(h));
    for (size_t i = 0; i < data.size(); ++i) {
        const double v = data[i];
        if (v != std::floor(v)) throw IoError(path + ": non-integer mask value");
        m.labels[i] = int32_t(v);
    }
    return m;
}

void write_nifti(const Volume3D& v, const std::string& path) {
    std::vector<float> data(size_t(v.numel()));
    for (int64_t i = 0; i < v.numel(); ++i) data[size_t(i)] = float(v.data[i]);
    write_blob(path, make_header(v.shape(), v.spacing, DT_FLOAT32, 32), data.data(),
               data.size() * sizeof(float));
}

void write_nifti(const MaskVolume& m, const std::string& path) {
    std::vector<uint8_t> data(size_t(m.numel()));
    for (size_t i = 0; i < data.size(); ++i) {
        if (m.labels[i] < 0 || m.labels[i] > 255) throw IoError("mask label out of uint8 range");
        data[i] = uint8_t(m.labels[i]);
    }
    write_blob(path, make_header(m.shape, m.spacing, DT_UINT8, 8), data.data(), data.size());
}

void write_nifti_raw(const Tensor& grid, const std::array<double, 3>& spacing, const std::string& path) {
    if (grid.rank() != 3) throw ShapeError("write_nifti_raw expects rank-3 data");
    std::vector<float> data(size_t(grid.numel()));
    for (int64_t i = 0; i < grid.numel(); ++i) data[size_t(i)] = float(grid[i]);
    write_blob(path, make_header(grid.shape, spacing, DT_FLOAT32, 32), data.data(),
               data.size() * sizeof(float));
}

}  // namespace mts
