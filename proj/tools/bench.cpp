// Times the OpenMP kernels against their serial reference implementations.

#include <chrono>
#include <cstdio>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "treecrown/delineate.hpp"
#include "treecrown/eval.hpp"
#include "treecrown/raster.hpp"
#include "treecrown/reference.hpp"
#include "treecrown/synth.hpp"

using namespace treecrown;

namespace {

template <class F>
double time_ms(F&& fn, int reps = 3) {
    double best = 1e300;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        fn();
        const auto t1 = std::chrono::steady_clock::now();
        best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    return best;
}

} // namespace

int main() {
#ifdef _OPENMP
    std::printf("threads: %d\n", omp_get_max_threads());
#else
    std::printf("threads: 1 (no OpenMP)\n");
#endif

    synth::Rng rng(12345);
    const auto bumps = synth::random_bumps(rng, 512, 512, 40, 20.0);
    const Raster chm = synth::make_bump_chm(512, 512, 0.5, bumps);

    {
        const double par = time_ms([&] { gaussian_smooth(chm, 2.0); });
        const double ser = time_ms([&] { ref::gaussian_smooth_dense(chm, 2.0); }, 1);
        std::printf("gaussian_smooth 512x512 sigma=2   parallel %8.2f ms   serial dense %8.2f ms\n",
                    par, ser);
    }
    const Raster smoothed = gaussian_smooth(chm, 1.0);
    {
        const double par = time_ms([&] { local_maxima(smoothed, 2.0, 1.0, 0.05); });
        const double ser =
            time_ms([&] { ref::variable_window_maxima(smoothed, 2.0, 1.0, 0.05); }, 1);
        std::printf("local_maxima    512x512           parallel %8.2f ms   serial scan  %8.2f ms\n",
                    par, ser);
    }
    {
        const auto tops = local_maxima(smoothed, 2.0, 1.0, 0.05);
        const double heap = time_ms([&] { marker_watershed(smoothed, tops, 2.0); });
        const double ser = time_ms([&] { ref::priority_flood(smoothed, tops, 2.0); }, 1);
        std::printf("watershed       512x512 %3zu seeds heap     %8.2f ms   serial set   %8.2f ms\n",
                    tops.size(), heap, ser);
    }
    {
        std::vector<double> per_tree(500);
        for (auto& v : per_tree) v = rng.uniform();
        double lo, hi;
        const double par =
            time_ms([&] { bootstrap_ci(per_tree, 10000, 0.95, 42, lo, hi); });
        std::printf("bootstrap       n=10000, k=500    parallel %8.2f ms\n", par);
    }
    return 0;
}
