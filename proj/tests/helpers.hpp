#pragma once

// Shared fixtures for the test suites.

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "bbcast/model.hpp"

namespace testing {

// Mirrors data/xeon_e5_2695.json: three-level hierarchy 64K/256K/46080K with
// associativities 8/8/20 at 2.1 GHz, pipeline timings per instruction class.
inline bbcast::HardwareConfig e5_2695() {
    using bbcast::PipelineSpec;
    bbcast::HardwareConfig hw;
    hw.name = "xeon_e5_2695";
    hw.clock_hz = 2.1e9;
    hw.pipelines = {
        {"iadd", PipelineSpec{3, 1.04e-9, 0.25e-9}},
        {"fadd", PipelineSpec{1, 1.3e-9, 0.38e-9}},
        {"idiv", PipelineSpec{1, 9.46e-9, 3.46e-9}},
        {"fdiv", PipelineSpec{1, 15.46e-9, 3.07e-9}},
        {"imul", PipelineSpec{1, 1.54e-9, 0.5e-9}},
        {"fmul", PipelineSpec{2, 2.31e-9, 0.36e-9}},
        {"load", PipelineSpec{2, 0.38e-9, 0.38e-9}},
        {"store", PipelineSpec{1, 0.38e-9, 0.38e-9}},
        {"alu", PipelineSpec{2, 0.38e-9, 0.38e-9}},
        {"br", PipelineSpec{1, 0.38e-9, 0.38e-9}},
        {"unknown", PipelineSpec{1, 0.38e-9, 0.38e-9}},
    };
    hw.cache_levels = {
        {64 * 1024, 64, 8, 1.9e-9, 4.76e-10},
        {256 * 1024, 64, 8, 5.71e-9, 9.52e-10},
        {46080ull * 1024, 64, 20, 1.62e-8, 2.86e-9},
    };
    hw.ram = {9.0e-8, 5.7e-9, 68719476736ull};
    return hw;
}

// splitmix64, good enough for reproducible test data
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t below(std::uint64_t bound) { return next() % bound; }

    double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
};

inline bbcast::MemoryTrace random_trace(Rng& rng, std::size_t accesses,
                                        std::uint64_t alphabet, int blocks = 4) {
    bbcast::MemoryTrace trace;
    trace.records.push_back(bbcast::TraceRecord::block(0));
    for (std::size_t i = 0; i < accesses; ++i) {
        if (rng.below(8) == 0)
            trace.records.push_back(
                bbcast::TraceRecord::block(static_cast<int>(rng.below(blocks))));
        trace.records.push_back(bbcast::TraceRecord::access(
            0x1000 + rng.below(alphabet) * 64, rng.below(4) == 0));
    }
    return trace;
}

}  // namespace testing
