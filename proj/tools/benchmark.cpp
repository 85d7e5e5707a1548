// Benchmark comparing the OpenMP kernels against the serial references, with
// a bit-equality check on every result. `--quick` runs small sizes only (used
// as a ctest smoke test).

#include <chrono>
#include <cstring>
#include <iostream>
#include <vector>

#include "mts/kernels.hpp"
#include "mts/rng.hpp"
#include "mts/tensor.hpp"

using namespace mts;
namespace k = mts::kernels;
using clk = std::chrono::steady_clock;

namespace {

double seconds_since(clk::time_point t0) {
    return std::chrono::duration<double>(clk::now() - t0).count();
}

Tensor random_tensor(Shape s, Rng& rng) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = rng.normal();
    return t;
}

struct Timing {
    double parallel = 0.0, serial = 0.0;
    bool equal = true;
};

template <typename Par, typename Ser>
Timing time_pair(int reps, Tensor& out_par, Tensor& out_ser, Par par, Ser ser) {
    Timing t;
    auto t0 = clk::now();
    for (int r = 0; r < reps; ++r) par();
    t.parallel = seconds_since(t0) / reps;
    t0 = clk::now();
    for (int r = 0; r < reps; ++r) ser();
    t.serial = seconds_since(t0) / reps;
    t.equal = std::memcmp(out_par.ptr(), out_ser.ptr(), size_t(out_par.numel()) * 8) == 0;
    return t;
}

void report(const std::string& name, const Timing& t) {
    std::cout << name << ": serial " << t.serial * 1e3 << " ms, parallel " << t.parallel * 1e3
              << " ms, speedup " << t.serial / t.parallel << "x, bit-equal: " << (t.equal ? "yes" : "NO")
              << "\n";
    if (!t.equal) std::exit(1);
}

void bench_conv(int64_t n, int64_t ci, int64_t co, int stride, int reps) {
    Rng rng(1);
    const auto spec = k::make_conv3d_spec(1, ci, co, n, n, n, 3, stride, 1);
    Tensor in = random_tensor({1, ci, n, n, n}, rng);
    Tensor w = random_tensor({co, ci, 3, 3, 3}, rng);
    Tensor b = random_tensor({co}, rng);
    Tensor out_par({1, co, spec.od, spec.oh, spec.ow}), out_ser(out_par.shape);
    Tensor gout = random_tensor(out_par.shape, rng);

    auto t = time_pair(reps, out_par, out_ser,
                       [&] { k::conv3d_forward(in.ptr(), w.ptr(), b.ptr(), out_par.ptr(), spec); },
                       [&] { k::serial::conv3d_forward(in.ptr(), w.ptr(), b.ptr(), out_ser.ptr(), spec); });
    report("conv3d_forward " + std::to_string(n) + "^3 c" + std::to_string(ci) + "->" + std::to_string(co) +
               " s" + std::to_string(stride),
           t);

    Tensor gin_par(in.shape), gin_ser(in.shape);
    t = time_pair(reps, gin_par, gin_ser,
                  [&] { k::conv3d_grad_input(gout.ptr(), w.ptr(), gin_par.ptr(), spec); },
                  [&] { k::serial::conv3d_grad_input(gout.ptr(), w.ptr(), gin_ser.ptr(), spec); });
    report("conv3d_grad_input", t);

    Tensor gw_par(w.shape), gw_ser(w.shape), gb_par(b.shape), gb_ser(b.shape);
    t = time_pair(reps, gw_par, gw_ser,
                  [&] {
                      std::fill(gw_par.data.begin(), gw_par.data.end(), 0.0);
                      std::fill(gb_par.data.begin(), gb_par.data.end(), 0.0);
                      k::conv3d_grad_weight(gout.ptr(), in.ptr(), gw_par.ptr(), gb_par.ptr(), spec);
                  },
                  [&] {
                      std::fill(gw_ser.data.begin(), gw_ser.data.end(), 0.0);
                      std::fill(gb_ser.data.begin(), gb_ser.data.end(), 0.0);
                      k::serial::conv3d_grad_weight(gout.ptr(), in.ptr(), gw_ser.ptr(), gb_ser.ptr(), spec);
                  });
    report("conv3d_grad_weight", t);
}

void bench_resample(int64_t n, int reps) {
    Rng rng(2);
    Tensor in = random_tensor({n, n, n}, rng);
    Tensor out_par(in.shape), out_ser(in.shape);
    const double c = double(n - 1) / 2.0;
    // a mild rotation in the (y, x) plane about the center
    const double cs = 0.96, sn = 0.28;
    const double affine[12] = {1, 0, 0, 0, 0, cs, -sn, c * (1 - cs) + c * sn, 0, sn, cs, c * (1 - cs) - c * sn};
    auto t = time_pair(reps, out_par, out_ser,
                       [&] { k::resample_trilinear(in.ptr(), n, n, n, out_par.ptr(), n, n, n, affine, nullptr, 0.0); },
                       [&] {
                           k::serial::resample_trilinear(in.ptr(), n, n, n, out_ser.ptr(), n, n, n, affine,
                                                         nullptr, 0.0);
                       });
    report("resample_trilinear " + std::to_string(n) + "^3", t);
}

}  // namespace

int main(int argc, char** argv) {
    const bool quick = argc > 1 && std::string(argv[1]) == "--quick";
    std::cout << "kernel benchmark (" << (quick ? "quick" : "full") << ")\n";
    if (quick) {
        bench_conv(12, 2, 4, 1, 3);
        bench_resample(16, 3);
        return 0;
    }
    bench_conv(32, 4, 8, 1, 5);
    bench_conv(32, 4, 8, 2, 5);
    bench_conv(48, 8, 16, 2, 3);
    bench_resample(64, 5);
    return 0;
}
