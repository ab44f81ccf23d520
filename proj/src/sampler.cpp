#include "forestgen/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace forestgen {

namespace {
constexpr const char* kLabelTag = "gen_labels";
constexpr const char* kNoiseTag = "gen_noise";
}  // namespace

std::vector<std::int32_t> sample_labels(const std::vector<std::size_t>& class_counts,
                                        std::size_t n, LabelMode mode, Rng& rng) {
    const std::size_t n_y = class_counts.size();
    std::size_t total = 0;
    for (std::size_t c = 0; c < n_y; ++c) {
        if (class_counts[c] == 0) throw errors::bad_param("class count must be positive");
        total += class_counts[c];
    }

    std::vector<std::size_t> out_counts(n_y, 0);
    if (mode == LabelMode::Multinomial) {
        for (std::size_t i = 0; i < n; ++i) {
            const double u = rng.next_unit() * static_cast<double>(total);
            double csum = 0.0;
            std::size_t pick = n_y - 1;
            for (std::size_t c = 0; c < n_y; ++c) {
                csum += static_cast<double>(class_counts[c]);
                if (u <= csum) {
                    pick = c;
                    break;
                }
            }
            out_counts[pick]++;
        }
    } else {
        // Largest-remainder apportionment of n over the empirical frequencies.
        std::vector<double> remainders(n_y);
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < n_y; ++c) {
            const double quota = static_cast<double>(n) * static_cast<double>(class_counts[c]) /
                                 static_cast<double>(total);
            out_counts[c] = static_cast<std::size_t>(quota);
            remainders[c] = quota - static_cast<double>(out_counts[c]);
            assigned += out_counts[c];
        }
        std::vector<std::size_t> by_remainder(n_y);
        std::iota(by_remainder.begin(), by_remainder.end(), std::size_t{0});
        std::stable_sort(by_remainder.begin(), by_remainder.end(),
                         [&](std::size_t a, std::size_t b) { return remainders[a] > remainders[b]; });
        for (std::size_t i = 0; assigned < n; ++i) {
            out_counts[by_remainder[i % n_y]]++;
            assigned++;
        }
    }

    std::vector<std::int32_t> labels;
    labels.reserve(n);
    for (std::size_t c = 0; c < n_y; ++c) {
        labels.insert(labels.end(), out_counts[c], static_cast<std::int32_t>(c));
    }
    return labels;
}

namespace {

struct ClassBlock {
    std::size_t cls = 0;
    std::size_t begin = 0;  // within-class row offset (for noise addressing)
    std::size_t rows = 0;
};

// Euler walk for one block of rows of a single class, visiting timesteps from
// t = 1 downward and loading each booster from disk exactly once.
void solve_block(const ModelStore& store, const Manifest& manifest, const GenConfig& cfg,
                 const ClassBlock& block, float* x, std::size_t* predict_calls,
                 std::size_t* loads) {
    const std::size_t p = manifest.p;
    const std::size_t n_t = manifest.grid.size();
    const bool flow = manifest.hp.method == Method::Flow;
    const double lo = flow ? 0.0 : manifest.hp.min_time;
    const float h = static_cast<float>((1.0 - lo) / static_cast<double>(n_t - 1));
    const std::size_t steps = cfg.strict_time ? n_t - 1 : n_t;

    Matrix field(block.rows, p);
    for (std::size_t step = 0; step < steps; ++step) {
        const std::size_t ti = n_t - 1 - step;
        const Booster booster = store.load(ti, block.cls);
        if (booster.n_features() != p) {
            throw errors::shape_mismatch("booster feature count != store p");
        }
        booster.predict_into(MatrixView{x, block.rows, p}, field.data());
        ++*predict_calls;
        ++*loads;

        if (flow) {
            for (std::size_t i = 0; i < block.rows * p; ++i) x[i] -= h * field.data()[i];
        } else {
            // Probability-flow ODE dx = -beta(t)/2 (x + score) dt, backwards.
            const float half_hb =
                0.5f * h * static_cast<float>(manifest.hp.schedule.beta(manifest.grid[ti]));
            for (std::size_t i = 0; i < block.rows * p; ++i) {
                x[i] += half_hb * (x[i] + field.data()[i]);
            }
        }
    }
}

void fill_block_noise(const Manifest& manifest, const GenConfig& cfg, const ClassBlock& block,
                      float* x) {
    const Rng rng = job_rng(cfg.seed, 0, block.cls, kNoiseTag);
    const std::size_t p = manifest.p;
    const std::uint64_t base = static_cast<std::uint64_t>(block.begin) * p;
    for (std::size_t i = 0; i < block.rows * p; ++i) {
        x[i] = rng.normal_at(base + i);
    }
}

struct GenPlan {
    Manifest manifest;
    std::vector<std::int32_t> labels;
    std::vector<std::size_t> class_rows;  // sampled rows per class
};

GenPlan plan_generation(const ModelStore& store, const GenConfig& cfg) {
    GenPlan plan;
    plan.manifest = store.read_manifest();
    const auto missing = store.missing_files(plan.manifest);
    if (!missing.empty()) {
        throw errors::store_incomplete(std::to_string(missing.size()) +
                                       " booster files missing, first: " + missing.front());
    }
    if (cfg.n_t_gen != 0 && cfg.n_t_gen != plan.manifest.grid.size()) {
        throw errors::nt_grid_mismatch(cfg.n_t_gen, plan.manifest.grid.size());
    }

    Rng label_rng = job_rng(cfg.seed, 0, 0, kLabelTag);
    plan.labels =
        sample_labels(plan.manifest.class_counts, cfg.n_samples, cfg.label_mode, label_rng);
    plan.class_rows.assign(plan.manifest.n_y, 0);
    for (auto y : plan.labels) plan.class_rows[static_cast<std::size_t>(y)]++;
    return plan;
}

Dataset finalize_dataset(const Manifest& manifest, Matrix features,
                         std::vector<std::int32_t> labels) {
    Dataset out;
    out.n = features.rows();
    out.p = manifest.p;
    out.n_y = manifest.n_y;
    out.features = std::move(features);
    out.labels = std::move(labels);
    out.feature_names = manifest.feature_names;
    out.label_name = manifest.label_name;
    out.class_names = manifest.class_names;
    return out;
}

}  // namespace

Dataset generate(const ModelStore& store, const GenConfig& cfg, GenStats* stats) {
    cfg.validate();
    GenPlan plan = plan_generation(store, cfg);
    const Manifest& manifest = plan.manifest;
    const std::size_t p = manifest.p;
    const PerClassScaler scaler = manifest.scaler();

    Matrix features(cfg.n_samples, p);
    std::vector<std::size_t> offsets(manifest.n_y + 1, 0);
    for (std::size_t c = 0; c < manifest.n_y; ++c) {
        offsets[c + 1] = offsets[c] + plan.class_rows[c];
    }

    std::vector<std::size_t> calls(manifest.n_y, 0);
    std::vector<std::size_t> loads(manifest.n_y, 0);
    std::atomic<bool> failed{false};
    std::string failure;
    std::mutex failure_mutex;

    int n_workers = 1;
#ifdef _OPENMP
    n_workers = cfg.n_jobs == 0 ? omp_get_max_threads() : static_cast<int>(cfg.n_jobs);
#pragma omp parallel for schedule(dynamic, 1) num_threads(n_workers)
#endif
    for (std::size_t c = 0; c < manifest.n_y; ++c) {
        if (plan.class_rows[c] == 0 || failed.load(std::memory_order_relaxed)) continue;
        try {
            ClassBlock block{c, 0, plan.class_rows[c]};
            float* x = features.row(offsets[c]);
            fill_block_noise(manifest, cfg, block, x);
            solve_block(store, manifest, cfg, block, x, &calls[c], &loads[c]);
            scaler.invert_rows(c, x, block.rows, p);
        } catch (const std::exception& e) {
            std::lock_guard<std::mutex> lock(failure_mutex);
            if (!failed.exchange(true)) failure = e.what();
        }
    }
    (void)n_workers;
    if (failed.load()) throw Error("GenerationFailed", failure);

    if (stats) {
        stats->predict_calls_per_class = calls;
        stats->booster_loads = std::accumulate(loads.begin(), loads.end(), std::size_t{0});
    }
    return finalize_dataset(manifest, std::move(features), std::move(plan.labels));
}

void generate_batched(const ModelStore& store, const GenConfig& cfg, std::size_t batch_size,
                      const std::function<void(const Dataset&)>& sink) {
    cfg.validate();
    if (batch_size < 1) throw errors::bad_param("batch_size must be >= 1");
    GenPlan plan = plan_generation(store, cfg);
    const Manifest& manifest = plan.manifest;
    const std::size_t p = manifest.p;
    const PerClassScaler scaler = manifest.scaler();

    std::size_t calls = 0, loads = 0;
    for (std::size_t c = 0; c < manifest.n_y; ++c) {
        std::size_t done = 0;
        while (done < plan.class_rows[c]) {
            const std::size_t rows = std::min(batch_size, plan.class_rows[c] - done);
            ClassBlock block{c, done, rows};
            Matrix features(rows, p);
            fill_block_noise(manifest, cfg, block, features.data());
            solve_block(store, manifest, cfg, block, features.data(), &calls, &loads);
            scaler.invert_rows(c, features.data(), rows, p);
            sink(finalize_dataset(
                manifest, std::move(features),
                std::vector<std::int32_t>(rows, static_cast<std::int32_t>(c))));
            done += rows;
        }
    }
}

}  // namespace forestgen
