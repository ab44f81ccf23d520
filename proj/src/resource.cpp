#include "forestgen/resource.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "forestgen/alloc_stats.hpp"
#include "forestgen/errors.hpp"
#include "forestgen/rng.hpp"

namespace forestgen {

// ============================================================================
// Closed-form estimators
// ============================================================================

namespace {

using u128 = unsigned __int128;

std::uint64_t to_u64(u128 v) {
    if (v > static_cast<u128>(UINT64_MAX)) throw errors::bad_param("estimate overflows 64 bits");
    return static_cast<std::uint64_t>(v);
}

void require_width(const MemParams& pm) {
    if (pm.width != 4 && pm.width != 8) throw errors::bad_param("width must be 4 or 8 bytes");
}

void require_positive(std::uint64_t v, const char* name) {
    if (v == 0) throw errors::bad_param(std::string(name) + " must be positive");
}

}  // namespace

MemEstimate estimate(MemScenario scenario, const MemParams& pm) {
    MemEstimate out;
    u128 bytes = 0;
    switch (scenario) {
        case MemScenario::NaiveXt:
            out.scenario = "naive_xt";
            require_positive(pm.n, "n");
            require_positive(pm.p, "p");
            require_positive(pm.n_t, "n_t");
            require_width(pm);
            bytes = u128(pm.n_t) * pm.n * pm.k * pm.p * pm.width;
            break;
        case MemScenario::NaiveShared:
            out.scenario = "naive_shared";
            require_positive(pm.n, "n");
            require_positive(pm.p, "p");
            require_positive(pm.n_t, "n_t");
            require_width(pm);
            bytes = u128(pm.n_t) * pm.p * (u128(pm.n) * pm.k * pm.p * pm.width);
            break;
        case MemScenario::ModelStoreBytes: {
            out.scenario = "model_store";
            require_positive(pm.n_t, "n_t");
            require_positive(pm.n_y, "n_y");
            require_positive(pm.p, "p");
            require_positive(pm.n_tree, "n_tree");
            const u128 nodes = (u128(1) << (pm.depth + 1)) - 1;
            bytes = u128(pm.n_t) * pm.n_y * pm.p * pm.n_tree * nodes * 53;
            break;
        }
        case MemScenario::MainBuffers:
            out.scenario = "main_buffers";
            require_positive(pm.n, "n");
            require_positive(pm.p, "p");
            require_width(pm);
            bytes = u128(3) * pm.n * pm.k * pm.p * pm.width;
            break;
        case MemScenario::BoolMasks:
            out.scenario = "bool_masks";
            require_positive(pm.n, "n");
            require_positive(pm.n_y, "n_y");
            bytes = u128(pm.n) * pm.k * pm.n_y;
            break;
        case MemScenario::IteratorSaving: {
            out.scenario = "iterator_saving";
            require_positive(pm.n, "n");
            require_positive(pm.n_y, "n_y");
            require_positive(pm.n_jobs, "n_jobs");
            require_width(pm);
            // n_jobs * (n / n_y) * K * p * w with the class size as a ratio,
            // rounded to the nearest byte.
            const u128 numer = u128(pm.n_jobs) * pm.n * pm.k * pm.p * pm.width;
            bytes = (numer + pm.n_y / 2) / pm.n_y;
            break;
        }
    }
    out.bytes = to_u64(bytes);
    out.iec = iec_string(out.bytes);
    return out;
}

std::vector<MemEstimate> estimate_all(const MemParams& pm) {
    return {estimate(MemScenario::NaiveXt, pm),      estimate(MemScenario::NaiveShared, pm),
            estimate(MemScenario::ModelStoreBytes, pm), estimate(MemScenario::MainBuffers, pm),
            estimate(MemScenario::BoolMasks, pm),    estimate(MemScenario::IteratorSaving, pm)};
}

std::string iec_string(std::uint64_t bytes) {
    static const char* kUnits[] = {"B", "KiB", "MiB", "GiB", "TiB", "PiB", "EiB"};
    int unit = 0;
    long double v = static_cast<long double>(bytes);
    while (v >= 1024.0L && unit < 6) {
        v /= 1024.0L;
        ++unit;
    }
    char buf[64];
    if (unit == 0) {
        std::snprintf(buf, sizeof(buf), "%llu B", static_cast<unsigned long long>(bytes));
    } else {
        std::snprintf(buf, sizeof(buf), "%.2Lf %s", v, kUnits[unit]);
    }
    return buf;
}

double parse_iec(const std::string& text) {
    std::istringstream in(text);
    double value = 0.0;
    std::string unit;
    in >> value >> unit;
    if (!in || unit.empty()) throw errors::bad_param("cannot parse IEC string '" + text + "'");
    static const char* kUnits[] = {"B", "KiB", "MiB", "GiB", "TiB", "PiB", "EiB"};
    for (int u = 0; u < 7; ++u) {
        if (unit == kUnits[u]) return value * std::pow(1024.0, u);
    }
    throw errors::bad_param("unknown IEC unit '" + unit + "'");
}

// ============================================================================
// Resident-set monitoring
// ============================================================================

std::int64_t read_rss_bytes() {
    std::ifstream status("/proc/self/status");
    if (!status) return -1;
    std::string line;
    while (std::getline(status, line)) {
        if (line.rfind("VmRSS:", 0) == 0) {
            long long kb = 0;
            if (std::sscanf(line.c_str(), "VmRSS: %lld kB", &kb) == 1) return kb * 1024;
            return -1;
        }
    }
    return -1;
}

ResourceReport monitor_run(const std::function<void()>& fn) {
    ResourceReport report;
    alloc::reset_peaks();

    report.rss_supported = read_rss_bytes() >= 0;

    std::mutex mutex;
    std::condition_variable cv;
    bool done = false;
    std::vector<std::int64_t> samples;

    std::thread sampler;
    if (report.rss_supported) {
        samples.push_back(read_rss_bytes());
        sampler = std::thread([&] {
            const auto start = std::chrono::steady_clock::now();
            std::unique_lock<std::mutex> lock(mutex);
            while (!done) {
                const auto elapsed = std::chrono::steady_clock::now() - start;
                const auto cadence = elapsed > std::chrono::hours(1)
                                         ? std::chrono::seconds(10)
                                         : std::chrono::seconds(1);
                cv.wait_for(lock, cadence, [&] { return done; });
                samples.push_back(read_rss_bytes());
            }
        });
    }

    const auto start = std::chrono::steady_clock::now();
    try {
        fn();
    } catch (...) {
        if (sampler.joinable()) {
            {
                std::lock_guard<std::mutex> lock(mutex);
                done = true;
            }
            cv.notify_all();
            sampler.join();
        }
        throw;
    }
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    if (sampler.joinable()) {
        {
            std::lock_guard<std::mutex> lock(mutex);
            done = true;
            samples.push_back(read_rss_bytes());
        }
        cv.notify_all();
        sampler.join();
    }

    report.tracked_peak = alloc::peak_bytes();
    report.tracked_largest_block = alloc::largest_block_bytes();
    report.tracked_worker_peak = alloc::worker_transient_peak_bytes();

    if (report.rss_supported) {
        report.rss_samples = std::move(samples);
        std::int64_t lo = report.rss_samples.front(), hi = report.rss_samples.front();
        for (auto s : report.rss_samples) {
            lo = std::min(lo, s);
            hi = std::max(hi, s);
        }
        report.baseline_rss = lo;
        report.peak_rss = hi;
        report.peak_minus_baseline = hi - lo;
    }
    return report;
}

std::string ResourceReport::to_json_text() const {
    nlohmann::json j;
    j["wall_seconds"] = wall_seconds;
    j["rss_supported"] = rss_supported;
    j["baseline_rss_bytes"] = baseline_rss;
    j["peak_rss_bytes"] = peak_rss;
    j["peak_minus_baseline_bytes"] = peak_minus_baseline;
    j["peak_bytes"] = peak_bytes();
    j["peak_iec"] = iec_string(static_cast<std::uint64_t>(std::max<std::int64_t>(0, peak_bytes())));
    j["rss_samples"] = rss_samples;
    j["tracked"] = {{"peak_bytes", tracked_peak},
                    {"largest_block_bytes", tracked_largest_block},
                    {"worker_transient_peak_bytes", tracked_worker_peak}};
    return j.dump(2);
}

// ============================================================================
// Synthetic datasets
// ============================================================================

Dataset synth_dataset(std::size_t n, std::size_t p, std::size_t n_y, std::uint64_t seed) {
    if (n == 0 || p == 0 || n_y == 0) throw errors::bad_param("synth sizes must be positive");
    if (n < n_y) throw errors::bad_param("need n >= n_y so every class occurs");

    Dataset ds;
    ds.n = n;
    ds.p = p;
    ds.n_y = n_y;
    ds.features = Matrix(n, p);

    Rng feature_rng = job_rng(seed, 0, 0, "synth_features");
    for (std::size_t i = 0; i < n * p; ++i) ds.features.data()[i] = feature_rng.normal_at(i);

    // Uniform labels; the leading block guarantees class coverage before the
    // shuffle.
    Rng label_rng = job_rng(seed, 0, 0, "synth_labels");
    ds.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.labels[i] = static_cast<std::int32_t>(i < n_y ? i : label_rng.next_below(n_y));
    }
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = label_rng.next_below(i + 1);
        std::swap(ds.labels[i], ds.labels[j]);
    }

    for (std::size_t j = 0; j < p; ++j) ds.feature_names.push_back("f" + std::to_string(j));
    ds.label_name = "y";
    for (std::size_t c = 0; c < n_y; ++c) ds.class_names.push_back(std::to_string(c));
    ds.validate();
    return ds;
}

}  // namespace forestgen
