#include "forestgen/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <mutex>

#ifdef _OPENMP
#include <omp.h>
#endif

#if defined(__unix__) || defined(__APPLE__)
#include <fcntl.h>
#include <sys/mman.h>
#include <sys/stat.h>
#include <unistd.h>
#define FORESTGEN_HAVE_MMAP 1
#endif

#include "forestgen/rng.hpp"

namespace forestgen {

namespace fs = std::filesystem;

// ============================================================================
// FrozenMatrix
// ============================================================================

FrozenMatrix::FrozenMatrix(FrozenMatrix&& other) noexcept { *this = std::move(other); }

FrozenMatrix& FrozenMatrix::operator=(FrozenMatrix&& other) noexcept {
    if (this != &other) {
        this->~FrozenMatrix();
        owned_ = std::move(other.owned_);
        mapped_ = other.mapped_;
        mapped_bytes_ = other.mapped_bytes_;
        rows_ = other.rows_;
        cols_ = other.cols_;
        other.mapped_ = nullptr;
        other.mapped_bytes_ = 0;
        other.rows_ = other.cols_ = 0;
    }
    return *this;
}

FrozenMatrix::~FrozenMatrix() {
#ifdef FORESTGEN_HAVE_MMAP
    if (mapped_) {
        ::munmap(mapped_, mapped_bytes_);
        mapped_ = nullptr;
    }
#endif
}

FrozenMatrix FrozenMatrix::in_memory(Matrix m) {
    FrozenMatrix f;
    f.rows_ = m.rows();
    f.cols_ = m.cols();
    f.owned_ = std::move(m);
    return f;
}

FrozenMatrix FrozenMatrix::file_backed(Matrix m, const std::string& scratch_dir,
                                       const std::string& name) {
#ifdef FORESTGEN_HAVE_MMAP
    FrozenMatrix f;
    f.rows_ = m.rows();
    f.cols_ = m.cols();
    f.mapped_bytes_ = m.size() * sizeof(float);

    std::error_code ec;
    fs::create_directories(scratch_dir, ec);
    const std::string path = (fs::path(scratch_dir) / (name + ".mmap")).string();
    {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw errors::io_error("cannot create " + path);
        out.write(reinterpret_cast<const char*>(m.data()),
                  static_cast<std::streamsize>(f.mapped_bytes_));
        if (!out) throw errors::io_error("write failed for " + path);
    }
    m.release();

    const int fd = ::open(path.c_str(), O_RDONLY);
    if (fd < 0) throw errors::io_error("cannot reopen " + path);
    void* addr = ::mmap(nullptr, f.mapped_bytes_, PROT_READ, MAP_SHARED, fd, 0);
    ::close(fd);
    // The mapping outlives the directory entry.
    ::unlink(path.c_str());
    if (addr == MAP_FAILED) throw errors::io_error("mmap failed for " + path);
    f.mapped_ = static_cast<float*>(addr);
    return f;
#else
    (void)scratch_dir;
    (void)name;
    return in_memory(std::move(m));
#endif
}

MatrixView FrozenMatrix::view() const {
    if (mapped_) return MatrixView{mapped_, rows_, cols_};
    return MatrixView{owned_.data(), rows_, cols_};
}

// ============================================================================
// Buffers and per-job tensors
// ============================================================================

namespace {

constexpr const char* kTrainNoiseTag = "train_noise";
constexpr const char* kValidNoiseTag = "valid_noise";

Matrix duplicate_rows(const Matrix& src, std::size_t k) {
    Matrix out(src.rows() * k, src.cols());
    for (std::size_t r = 0; r < src.rows(); ++r) {
        const float* row = src.row(r);
        for (std::size_t copy = 0; copy < k; ++copy) {
            std::copy_n(row, src.cols(), out.row(r * k + copy));
        }
    }
    return out;
}

// Counter-addressed standard normal fill; identical for any thread count.
void fill_gaussian(Matrix& m, const Rng& rng, std::uint64_t index_offset = 0) {
    float* data = m.data();
    const std::size_t total = m.size();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::size_t i = 0; i < total; ++i) {
        data[i] = rng.normal_at(index_offset + i);
    }
}

}  // namespace

TrainingBuffers build_training_buffers(const Dataset& scaled_sorted, const HyperParams& hp,
                                       const std::string& scratch_dir) {
    TrainingBuffers buffers;
    buffers.rows = scaled_sorted.n * hp.duplication;
    buffers.cols = scaled_sorted.p;

    auto freeze = [&](Matrix m, const char* name) {
        return hp.mmap_buffers ? FrozenMatrix::file_backed(std::move(m), scratch_dir, name)
                               : FrozenMatrix::in_memory(std::move(m));
    };

    Matrix x0dup = duplicate_rows(scaled_sorted.features, hp.duplication);

    Matrix noise(buffers.rows, buffers.cols);
    fill_gaussian(noise, job_rng(hp.seed, 0, 0, kTrainNoiseTag));

    if (hp.method == Method::Flow) {
        Matrix z(buffers.rows, buffers.cols);
        const float* x0 = x0dup.data();
        const float* x1 = noise.data();
        float* zp = z.data();
        const std::size_t total = z.size();
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
        for (std::size_t i = 0; i < total; ++i) zp[i] = x1[i] - x0[i];
        buffers.z_flow = freeze(std::move(z), "z_flow");
    }

    buffers.x0dup = freeze(std::move(x0dup), "x0dup");
    buffers.noise = freeze(std::move(noise), "x1");
    return buffers;
}

Matrix make_xt(MatrixView x0, MatrixView x1, double t, Method method, const VpSchedule& sched) {
    if (x0.rows != x1.rows || x0.cols != x1.cols) {
        throw errors::shape_mismatch("x0/x1 slices differ in shape");
    }
    Matrix xt(x0.rows, x0.cols);
    float* out = xt.data();
    const float* a = x0.data;
    const float* b = x1.data;
    const std::size_t total = x0.size();
    if (method == Method::Flow) {
        const float tf = static_cast<float>(t);
        const float cf = 1.0f - tf;
        for (std::size_t i = 0; i < total; ++i) out[i] = tf * b[i] + cf * a[i];
    } else {
        const float alpha = static_cast<float>(sched.alpha(t));
        const float sigma = static_cast<float>(sched.sigma(t));
        for (std::size_t i = 0; i < total; ++i) out[i] = alpha * a[i] + sigma * b[i];
    }
    return xt;
}

Matrix make_targets(MatrixView x0, MatrixView x1, double t, Method method,
                    const VpSchedule& sched, double min_time) {
    if (x0.rows != x1.rows || x0.cols != x1.cols) {
        throw errors::shape_mismatch("x0/x1 slices differ in shape");
    }
    Matrix z(x0.rows, x0.cols);
    float* out = z.data();
    const float* a = x0.data;
    const float* b = x1.data;
    const std::size_t total = x0.size();
    if (method == Method::Flow) {
        for (std::size_t i = 0; i < total; ++i) out[i] = b[i] - a[i];
    } else {
        if (t < min_time) throw errors::degenerate_time(t);
        const float sigma = static_cast<float>(sched.sigma(std::max(t, min_time)));
        if (!(sigma > 0.0f)) throw errors::degenerate_time(t);
        for (std::size_t i = 0; i < total; ++i) out[i] = -b[i] / sigma;
    }
    return z;
}

// ============================================================================
// Training
// ============================================================================

namespace {

struct JobSpec {
    std::size_t t_index;
    std::size_t y_index;
};

// One (t, y) training job. All inputs are shared read-only views; everything
// allocated here is job-transient and freed before returning.
JobRecord run_job(const JobSpec& spec, const TrainingBuffers& buffers,
                  const std::vector<RowRange>& dup_slices, const std::vector<double>& grid,
                  const HyperParams& hp, const ModelStore& store) {
    const auto start = std::chrono::steady_clock::now();
    const double t = grid[spec.t_index];
    const RowRange slice = dup_slices[spec.y_index];

    const MatrixView x0 = buffers.x0dup.view().slice_rows(slice.begin, slice.end);
    const MatrixView x1 = buffers.noise.view().slice_rows(slice.begin, slice.end);

    Matrix xt = make_xt(x0, x1, t, hp.method, hp.schedule);

    // Flow targets are a view into the shared Z buffer; diffusion targets are
    // built per job from the slice.
    Matrix z_local;
    MatrixView targets;
    if (hp.method == Method::Flow) {
        targets = buffers.z_flow.view().slice_rows(slice.begin, slice.end);
    } else {
        z_local = make_targets(x0, x1, t, hp.method, hp.schedule, hp.min_time);
        targets = z_local.view();
    }

    auto [mapper, binned] = build_bins(xt.view(), hp.gbdt.max_bins);
    xt.release();  // training touches bins only

    // Early-stopping validation: the same rows re-noised with an independent
    // draw, rebuilt with the job's validation stream.
    Booster booster;
    if (hp.gbdt.early_stop_rounds > 0) {
        Matrix x1v(x0.rows, x0.cols);
        fill_gaussian(x1v, job_rng(hp.seed, spec.t_index, spec.y_index, kValidNoiseTag));
        Matrix xtv = make_xt(x0, x1v.view(), t, hp.method, hp.schedule);
        Matrix ztv = make_targets(x0, x1v.view(), t, hp.method, hp.schedule, hp.min_time);
        x1v.release();
        BinnedMatrix binned_valid(mapper, xtv.view());
        xtv.release();
        ValidationSet valid{&binned_valid, ztv.view()};
        booster = train_booster(binned, targets, hp.tree_mode, hp.gbdt, &valid);
    } else {
        booster = train_booster(binned, targets, hp.tree_mode, hp.gbdt, nullptr);
    }

    JobRecord record;
    record.t_index = spec.t_index;
    record.y_index = spec.y_index;
    record.file = ModelStore::booster_filename(spec.t_index, spec.y_index);
    record.best_iterations = booster.best_iterations();
    save_booster(booster, store.booster_path(spec.t_index, spec.y_index));
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return record;
}

// Serial reference pipeline: materializes the regression inputs for every
// timestep at once and keeps all trained boosters in memory until the end.
// Kept for benchmarking against the optimized path; produces the same models.
std::vector<JobRecord> train_naive(const Dataset& scaled, const ClassIndex& idx,
                                   const std::vector<double>& grid, const HyperParams& hp,
                                   const ModelStore& store) {
    const std::size_t rows = scaled.n * hp.duplication;
    const std::size_t p = scaled.p;
    const auto dup_slices = idx.dup_slices(hp.duplication);

    Matrix x0dup = duplicate_rows(scaled.features, hp.duplication);
    Matrix noise(rows, p);
    fill_gaussian(noise, job_rng(hp.seed, 0, 0, kTrainNoiseTag));

    // The [n_t, n*K, p] tensor of Issue 1, flattened over the first axis.
    Matrix xt_all(hp.n_t * rows, p);
    for (std::size_t ti = 0; ti < hp.n_t; ++ti) {
        Matrix xt = make_xt(x0dup.view(), noise.view(), grid[ti], hp.method, hp.schedule);
        std::copy_n(xt.data(), xt.size(), xt_all.row(ti * rows));
    }

    Matrix z_flow;
    if (hp.method == Method::Flow) {
        z_flow = make_targets(x0dup.view(), noise.view(), 0.0, hp.method, hp.schedule,
                              hp.min_time);
    }

    std::vector<JobRecord> records;
    std::vector<Booster> retained;  // boosters pile up until training completes
    std::vector<JobSpec> pending;
    for (std::size_t ti = 0; ti < hp.n_t; ++ti) {
        for (std::size_t yi = 0; yi < scaled.n_y; ++yi) {
            if (!store.has_booster(ti, yi)) pending.push_back({ti, yi});
        }
    }

    for (const JobSpec& spec : pending) {
        const auto start = std::chrono::steady_clock::now();
        const RowRange slice = dup_slices[spec.y_index];
        const MatrixView xt = xt_all.view()
                                  .slice_rows(spec.t_index * rows, (spec.t_index + 1) * rows)
                                  .slice_rows(slice.begin, slice.end);
        MatrixView targets;
        Matrix z_local;
        if (hp.method == Method::Flow) {
            targets = z_flow.slice_rows(slice.begin, slice.end);
        } else {
            z_local = make_targets(x0dup.slice_rows(slice.begin, slice.end),
                                   noise.slice_rows(slice.begin, slice.end), grid[spec.t_index],
                                   hp.method, hp.schedule, hp.min_time);
            targets = z_local.view();
        }

        auto [mapper, binned] = build_bins(xt, hp.gbdt.max_bins);
        Booster booster;
        if (hp.gbdt.early_stop_rounds > 0) {
            Matrix x1v(xt.rows, p);
            fill_gaussian(x1v, job_rng(hp.seed, spec.t_index, spec.y_index, kValidNoiseTag));
            const MatrixView x0s = x0dup.slice_rows(slice.begin, slice.end);
            Matrix xtv = make_xt(x0s, x1v.view(), grid[spec.t_index], hp.method, hp.schedule);
            Matrix ztv = make_targets(x0s, x1v.view(), grid[spec.t_index], hp.method,
                                      hp.schedule, hp.min_time);
            BinnedMatrix binned_valid(mapper, xtv.view());
            ValidationSet valid{&binned_valid, ztv.view()};
            booster = train_booster(binned, targets, hp.tree_mode, hp.gbdt, &valid);
        } else {
            booster = train_booster(binned, targets, hp.tree_mode, hp.gbdt, nullptr);
        }

        JobRecord record;
        record.t_index = spec.t_index;
        record.y_index = spec.y_index;
        record.file = ModelStore::booster_filename(spec.t_index, spec.y_index);
        record.best_iterations = booster.best_iterations();
        record.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        retained.push_back(std::move(booster));
        records.push_back(std::move(record));
    }

    // Only now are the retained models flushed to disk.
    for (std::size_t i = 0; i < retained.size(); ++i) {
        save_booster(retained[i], store.booster_path(records[i].t_index, records[i].y_index));
    }
    return records;
}

}  // namespace

Manifest train_all(const Dataset& ds, const HyperParams& hp, const std::string& store_path) {
    hp.validate();
    ds.validate();
    if (hp.method == Method::Diffusion && hp.min_time <= 0.0) {
        throw errors::bad_param("diffusion requires eps > 0");
    }

    ModelStore store(store_path);
    store.ensure_dir();

    auto [sorted, idx] = sort_by_class(ds);
    PerClassScaler scaler = PerClassScaler::fit(sorted, idx, hp.scaler_mode);
    Dataset scaled = scaler.apply(sorted);
    sorted.features.release();

    const std::vector<double> grid = time_grid(hp.method, hp.n_t, hp.min_time);

    Manifest manifest;
    manifest.hp = hp;
    manifest.n = ds.n;
    manifest.p = ds.p;
    manifest.n_y = ds.n_y;
    manifest.feature_names = ds.feature_names;
    manifest.label_name = ds.label_name;
    manifest.class_names = ds.class_names;
    manifest.class_counts = idx.class_counts();
    manifest.grid = grid;
    manifest.scaler_mode = hp.scaler_mode;
    manifest.scaler_min = scaler.mins();
    manifest.scaler_max = scaler.maxs();

    if (hp.naive_mode) {
        manifest.jobs = train_naive(scaled, idx, grid, hp, store);
        store.write_manifest(manifest);
        return manifest;
    }

    const auto dup_slices = idx.dup_slices(hp.duplication);
    const std::string scratch = (fs::path(store_path) / "buffers").string();
    TrainingBuffers buffers = build_training_buffers(scaled, hp, scratch);
    scaled.features.release();

    // Jobs with an existing booster file are checkpoints from a previous run.
    std::vector<JobSpec> pending;
    std::vector<JobRecord> done;
    for (std::size_t ti = 0; ti < hp.n_t; ++ti) {
        for (std::size_t yi = 0; yi < ds.n_y; ++yi) {
            if (store.has_booster(ti, yi)) {
                JobRecord rec;
                rec.t_index = ti;
                rec.y_index = yi;
                rec.file = ModelStore::booster_filename(ti, yi);
                rec.seconds = 0.0;
                done.push_back(std::move(rec));
            } else {
                pending.push_back({ti, yi});
            }
        }
    }

    std::vector<JobRecord> records(pending.size());
    std::atomic<bool> failed{false};
    std::string failure_what;
    std::size_t failure_t = 0, failure_y = 0;
    std::mutex failure_mutex;

    int n_workers = 1;
#ifdef _OPENMP
    n_workers = hp.n_jobs == 0 ? omp_get_max_threads() : static_cast<int>(hp.n_jobs);
#pragma omp parallel for schedule(dynamic, 1) num_threads(n_workers)
#endif
    for (std::size_t i = 0; i < pending.size(); ++i) {
        if (failed.load(std::memory_order_relaxed)) continue;
        alloc::begin_job();
        try {
            records[i] = run_job(pending[i], buffers, dup_slices, grid, hp, store);
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failed.exchange(true)) {
                failure_what = e.what();
                failure_t = pending[i].t_index;
                failure_y = pending[i].y_index;
            }
        }
        alloc::end_job();
    }
    (void)n_workers;

    if (failed.load()) throw errors::training_failed(failure_t, failure_y, failure_what);

    // Retrieve best iterations for resumed jobs from their checkpoint files.
    for (auto& rec : done) {
        rec.best_iterations = store.load(rec.t_index, rec.y_index).best_iterations();
    }
    manifest.jobs = std::move(done);
    manifest.jobs.insert(manifest.jobs.end(), std::make_move_iterator(records.begin()),
                         std::make_move_iterator(records.end()));
    std::sort(manifest.jobs.begin(), manifest.jobs.end(),
              [](const JobRecord& a, const JobRecord& b) {
                  return a.t_index != b.t_index ? a.t_index < b.t_index : a.y_index < b.y_index;
              });

    store.write_manifest(manifest);
    return manifest;
}

}  // namespace forestgen
