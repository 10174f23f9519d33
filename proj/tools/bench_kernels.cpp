// Times the OpenMP compute kernels against their serial reference
// implementations on identical inputs and verifies the outputs match
// bit for bit.

#include <chrono>
#include <cstdio>
#include <functional>
#include <string>

#include "syscade/deep/kernels.hpp"
#include "syscade/deep/tensor.hpp"
#include "syscade/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using syscade::Rng;
using syscade::deep::Tensor;

Tensor random_tensor(std::vector<long> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& v : t.data) v = rng.uniform() * 2.0 - 1.0;
    return t;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm up
    const auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = std::chrono::steady_clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

bool bit_equal(const Tensor& a, const Tensor& b) { return a.data == b.data; }

struct Row {
    std::string name;
    double serial_ms;
    double parallel_ms;
    bool identical;
};

void print(const Row& r) {
    std::printf("%-18s serial %9.3f ms   parallel %9.3f ms   speedup %5.2fx   %s\n",
                r.name.c_str(), r.serial_ms, r.parallel_ms, r.serial_ms / r.parallel_ms,
                r.identical ? "bit-identical" : "MISMATCH");
}

} // namespace

int main() {
    constexpr int B = 16, T = 256, Cin = 32, Cout = 32, K = 7, R = 4;
    constexpr int N = 512, In = 256, Out = 256;
    constexpr int reps = 20;
    Rng rng(42);

#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("built without OpenMP; both columns run serially\n");
#endif

    int mismatches = 0;
    auto check = [&](Row r) {
        print(r);
        if (!r.identical) ++mismatches;
    };

    {
        const Tensor X = random_tensor({B, T, Cin}, rng);
        const Tensor W = random_tensor({Cout, Cin, K}, rng);
        Tensor Ys({B, T, Cout}), Yp({B, T, Cout});
        const double s =
            time_ms([&] { syscade::deep::serial::conv1d_forward(X, W, Ys); }, reps);
        const double p =
            time_ms([&] { syscade::deep::kernels::conv1d_forward(X, W, Yp); }, reps);
        check({"conv forward", s, p, bit_equal(Ys, Yp)});

        const Tensor dY = random_tensor({B, T, Cout}, rng);
        Tensor dXs({B, T, Cin}), dWs({Cout, Cin, K});
        Tensor dXp({B, T, Cin}), dWp({Cout, Cin, K});
        const double sb =
            time_ms([&] { syscade::deep::serial::conv1d_backward(X, W, dY, dXs, dWs); }, reps);
        const double pb =
            time_ms([&] { syscade::deep::kernels::conv1d_backward(X, W, dY, dXp, dWp); }, reps);
        check({"conv backward", sb, pb, bit_equal(dXs, dXp) && bit_equal(dWs, dWp)});
    }
    {
        const Tensor X = random_tensor({B, T, Cin}, rng);
        const Tensor W = random_tensor({Cout, Cin, K}, rng);
        Tensor Ys({B, T, Cout}), Yp({B, T, Cout});
        const double s =
            time_ms([&] { syscade::deep::serial::atrous_forward(X, W, R, Ys); }, reps);
        const double p =
            time_ms([&] { syscade::deep::kernels::atrous_forward(X, W, R, Yp); }, reps);
        check({"atrous forward", s, p, bit_equal(Ys, Yp)});

        const Tensor dY = random_tensor({B, T, Cout}, rng);
        Tensor dXs({B, T, Cin}), dWs({Cout, Cin, K});
        Tensor dXp({B, T, Cin}), dWp({Cout, Cin, K});
        const double sb = time_ms(
            [&] { syscade::deep::serial::atrous_backward(X, W, R, dY, dXs, dWs); }, reps);
        const double pb = time_ms(
            [&] { syscade::deep::kernels::atrous_backward(X, W, R, dY, dXp, dWp); }, reps);
        check({"atrous backward", sb, pb, bit_equal(dXs, dXp) && bit_equal(dWs, dWp)});
    }
    {
        const Tensor X = random_tensor({N, In}, rng);
        const Tensor W = random_tensor({Out, In}, rng);
        const Tensor b = random_tensor({Out}, rng);
        Tensor Ys({N, Out}), Yp({N, Out});
        const double s =
            time_ms([&] { syscade::deep::serial::dense_forward(X, W, b, Ys); }, reps);
        const double p =
            time_ms([&] { syscade::deep::kernels::dense_forward(X, W, b, Yp); }, reps);
        check({"dense forward", s, p, bit_equal(Ys, Yp)});

        const Tensor dY = random_tensor({N, Out}, rng);
        Tensor dXs({N, In}), dWs({Out, In}), dbs({Out});
        Tensor dXp({N, In}), dWp({Out, In}), dbp({Out});
        const double sb = time_ms(
            [&] { syscade::deep::serial::dense_backward(X, W, dY, dXs, dWs, dbs); }, reps);
        const double pb = time_ms(
            [&] { syscade::deep::kernels::dense_backward(X, W, dY, dXp, dWp, dbp); }, reps);
        check({"dense backward", sb, pb,
               bit_equal(dXs, dXp) && bit_equal(dWs, dWp) && bit_equal(dbs, dbp)});
    }

    if (mismatches != 0) {
        std::printf("%d kernel(s) diverged from the reference\n", mismatches);
        return 1;
    }
    return 0;
}
