#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "forestgen/dataset.hpp"

namespace forestgen {

// Closed-form byte arithmetic for the pipeline's memory scenarios.
enum class MemScenario {
    NaiveXt,         // n_t * n*K*p * w: all-timestep regression inputs at once
    NaiveShared,     // n_t * p copies of one timestep slice in shared memory
    ModelStoreBytes, // n_t * n_y * p ensembles retained in memory, 53 B/node
    MainBuffers,     // the three duplicated training buffers
    BoolMasks,       // one byte per (row, class) boolean mask
    IteratorSaving,  // per-worker input copies avoided by batched construction
};

struct MemParams {
    std::uint64_t n = 0;
    std::uint64_t p = 0;
    std::uint64_t n_y = 1;
    std::uint64_t n_t = 1;
    std::uint64_t k = 1;
    std::uint64_t n_jobs = 1;
    std::uint64_t n_tree = 100;
    std::uint64_t depth = 7;
    std::uint64_t width = 8;  // bytes per element, 4 or 8
};

struct MemEstimate {
    std::string scenario;
    std::uint64_t bytes = 0;
    std::string iec;  // e.g. "2.34 TiB"
};

MemEstimate estimate(MemScenario scenario, const MemParams& params);
std::vector<MemEstimate> estimate_all(const MemParams& params);

std::string iec_string(std::uint64_t bytes);
// Inverse of iec_string within its two-decimal rounding.
double parse_iec(const std::string& text);

// Peak-memory and wall-time accounting for one monitored run: resident-set
// size sampled at 1 Hz (10 s cadence past one hour), peak reported with the
// lowest sample subtracted as baseline. Falls back to allocation-tracker
// figures where RSS is unavailable.
struct ResourceReport {
    double wall_seconds = 0.0;
    bool rss_supported = false;
    std::int64_t baseline_rss = 0;
    std::int64_t peak_rss = 0;
    std::int64_t peak_minus_baseline = 0;
    std::vector<std::int64_t> rss_samples;
    std::int64_t tracked_peak = 0;
    std::int64_t tracked_largest_block = 0;
    std::int64_t tracked_worker_peak = 0;

    // The headline figure: RSS peak minus baseline, or the tracker peak when
    // RSS sampling is unsupported.
    std::int64_t peak_bytes() const {
        return rss_supported ? peak_minus_baseline : tracked_peak;
    }

    std::string to_json_text() const;
};

ResourceReport monitor_run(const std::function<void()>& fn);

// Current resident-set size in bytes, or -1 where unsupported.
std::int64_t read_rss_bytes();

// Identity-covariance Gaussian features with uniform labels over [0, n_y);
// deterministic in seed. Every class id occurs at least once.
Dataset synth_dataset(std::size_t n, std::size_t p, std::size_t n_y, std::uint64_t seed);

}  // namespace forestgen
