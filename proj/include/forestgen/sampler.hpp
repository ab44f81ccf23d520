#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "forestgen/config.hpp"
#include "forestgen/dataset.hpp"
#include "forestgen/rng.hpp"
#include "forestgen/store.hpp"

namespace forestgen {

struct GenConfig {
    std::size_t n_samples = 1;
    std::size_t n_t_gen = 0;  // 0 = the training grid; anything else must match it
    LabelMode label_mode = LabelMode::Empirical;
    std::uint64_t seed = 0;
    std::size_t n_jobs = 0;
    // The published generation loop takes n_t Euler steps of size 1/(n_t-1),
    // including one at t = 0. strict_time drops that final step.
    bool strict_time = false;

    void validate() const {
        if (n_samples < 1) throw errors::bad_param("n_samples must be >= 1");
        if (n_t_gen == 1) throw errors::bad_param("n_t_gen must be >= 2");
    }
};

struct GenStats {
    std::vector<std::size_t> predict_calls_per_class;
    std::size_t booster_loads = 0;
};

// Conditioning labels: multinomial draws with the training class frequencies,
// or the exact empirical distribution via largest-remainder apportionment.
// Output is sorted ascending so class blocks are contiguous.
std::vector<std::int32_t> sample_labels(const std::vector<std::size_t>& class_counts,
                                        std::size_t n, LabelMode mode, Rng& rng);

// Draws Gaussian noise per class block and solves the sampling ODE with Euler
// steps, iterating classes in the outer loop and streaming boosters from
// disk one (t, y) at a time. The result is inverse-scaled and carries sorted
// labels.
Dataset generate(const ModelStore& store, const GenConfig& cfg, GenStats* stats = nullptr);

// Same semantics, emitting class-aligned blocks of at most batch_size rows;
// the concatenation of blocks equals a single generate() with the same seed.
void generate_batched(const ModelStore& store, const GenConfig& cfg, std::size_t batch_size,
                      const std::function<void(const Dataset&)>& sink);

}  // namespace forestgen
