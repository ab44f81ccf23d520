#pragma once

#include <string>

#include "forestgen/config.hpp"
#include "forestgen/dataset.hpp"
#include "forestgen/matrix.hpp"
#include "forestgen/store.hpp"

namespace forestgen {

// Immutable fp32 buffer shared read-only by all workers, either in-memory or
// backed by a memory-mapped file on disk.
class FrozenMatrix {
  public:
    FrozenMatrix() = default;
    FrozenMatrix(FrozenMatrix&&) noexcept;
    FrozenMatrix& operator=(FrozenMatrix&&) noexcept;
    FrozenMatrix(const FrozenMatrix&) = delete;
    FrozenMatrix& operator=(const FrozenMatrix&) = delete;
    ~FrozenMatrix();

    static FrozenMatrix in_memory(Matrix m);
    // Writes the matrix to scratch_dir and maps it read-only; the in-memory
    // copy is released so only page cache holds the data.
    static FrozenMatrix file_backed(Matrix m, const std::string& scratch_dir,
                                    const std::string& name);

    MatrixView view() const;
    bool file_backed_storage() const { return mapped_ != nullptr; }

  private:
    Matrix owned_;
    float* mapped_ = nullptr;
    std::size_t mapped_bytes_ = 0;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
};

// The duplicated training buffers of the optimized pipeline, built once and
// shared read-only across every (t, y) job. No per-timestep materialization
// of X_t across all t ever exists; jobs build their own slice on the fly.
struct TrainingBuffers {
    FrozenMatrix x0dup;   // [n*K, p], row r equals sorted row floor(r/K)
    FrozenMatrix noise;   // [n*K, p] standard Gaussian
    FrozenMatrix z_flow;  // [n*K, p] noise - x0dup; empty for diffusion
    std::size_t rows = 0;
    std::size_t cols = 0;
};

TrainingBuffers build_training_buffers(const Dataset& scaled_sorted, const HyperParams& hp,
                                       const std::string& scratch_dir);

// x_t for one job's class slice: flow t*x1 + (1-t)*x0, diffusion
// alpha_t*x0 + sigma_t*x1.
Matrix make_xt(MatrixView x0, MatrixView x1, double t, Method method, const VpSchedule& sched);

// Regression target: flow x1 - x0 (constant in t), diffusion the Gaussian
// conditional score -x1/sigma_t. Diffusion requires t >= min_time so that
// sigma_t > 0.
Matrix make_targets(MatrixView x0, MatrixView x1, double t, Method method,
                    const VpSchedule& sched, double min_time);

// Trains the full n_t x n_y grid of boosters into store_path and writes the
// manifest last. Jobs whose booster file already exists are skipped, so an
// interrupted run resumes from its checkpoints. naive_mode runs the serial
// reference pipeline instead (all timesteps materialized, boosters retained
// in memory until the end).
Manifest train_all(const Dataset& ds, const HyperParams& hp, const std::string& store_path);

}  // namespace forestgen
