#include "mts/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace mts {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) {
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
        n *= d;
    }
    return s.empty() ? 0 : n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '(';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ')';
    return os.str();
}

Tensor::Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (int64_t(data.size()) != shape_numel(shape))
        throw ShapeError("value count " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
}

double Tensor::min() const { return *std::min_element(data.begin(), data.end()); }
double Tensor::max() const { return *std::max_element(data.begin(), data.end()); }
double Tensor::sum() const { return std::accumulate(data.begin(), data.end(), 0.0); }
double Tensor::mean() const { return data.empty() ? 0.0 : sum() / double(data.size()); }

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

}  // namespace mts
