#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <unistd.h>
#include <vector>

#include "pindic/grid.hpp"
#include "pindic/rng.hpp"

namespace testutil {

// Fresh scratch directory under the system temp root; removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        static int counter = 0;
        path = std::filesystem::temp_directory_path() /
               ("pindic_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    std::filesystem::path file(const std::string& name) const { return path / name; }
};

inline pindic::ScalarField random_field(int w, int h, std::uint64_t seed, double lo = 0.0,
                                        double hi = 255.0) {
    pindic::ScalarField f(w, h);
    pindic::Rng rng(seed);
    for (double& v : f.values) v = rng.uniform(lo, hi);
    return f;
}

inline pindic::VectorField2 random_vector_field(int w, int h, std::uint64_t seed, double lo,
                                                double hi) {
    pindic::VectorField2 f(w, h);
    pindic::Rng rng(seed);
    for (double& v : f.u) v = rng.uniform(lo, hi);
    for (double& v : f.v) v = rng.uniform(lo, hi);
    return f;
}

}  // namespace testutil
