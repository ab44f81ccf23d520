#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <map>
#include <set>
#include <thread>

#include "forestgen/resource.hpp"
#include "forestgen/rng.hpp"
#include "forestgen/sampler.hpp"
#include "forestgen/trainer.hpp"
#include "testutil.hpp"

using namespace forestgen;
namespace fs = std::filesystem;

namespace {

HyperParams small_hp(Method method = Method::Flow, TreeMode mode = TreeMode::SingleOutput) {
    HyperParams hp;
    hp.method = method;
    hp.tree_mode = mode;
    hp.n_t = 5;
    hp.duplication = 10;
    hp.min_time = method == Method::Diffusion ? 0.001 : 0.0;
    hp.gbdt.n_tree = 4;
    hp.gbdt.max_depth = 3;
    hp.seed = 42;
    hp.n_jobs = 2;
    return hp;
}

std::vector<std::string> booster_files(const std::string& dir) {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".fgb") files.push_back(entry.path().filename());
    }
    std::sort(files.begin(), files.end());
    return files;
}

bool same_file_bytes(const fs::path& a, const fs::path& b) {
    return testutil::read_bytes(a.string()) == testutil::read_bytes(b.string());
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("vp schedule endpoints and identity") {
    VpSchedule sched;
    CHECK(sched.alpha(0.0) == doctest::Approx(1.0));
    CHECK(sched.sigma(0.0) == doctest::Approx(0.0));
    double prev = 1.0;
    for (double t = 0.05; t <= 1.0; t += 0.05) {
        const double a = sched.alpha(t);
        const double s = sched.sigma(t);
        CHECK(a < prev);  // strictly decreasing on (0, 1]
        CHECK(a * a + s * s == doctest::Approx(1.0).epsilon(1e-12));
        prev = a;
    }
}

TEST_CASE("make_xt endpoints and midpoint") {
    Matrix x0(1, 2), x1(1, 2);
    x0.at(0, 0) = 0.0f;
    x0.at(0, 1) = 0.0f;
    x1.at(0, 0) = 2.0f;
    x1.at(0, 1) = -2.0f;
    VpSchedule sched;

    const Matrix at0 = make_xt(x0.view(), x1.view(), 0.0, Method::Flow, sched);
    CHECK(at0.at(0, 0) == 0.0f);
    CHECK(at0.at(0, 1) == 0.0f);
    const Matrix at1 = make_xt(x0.view(), x1.view(), 1.0, Method::Flow, sched);
    CHECK(at1.at(0, 0) == 2.0f);
    CHECK(at1.at(0, 1) == -2.0f);
    const Matrix mid = make_xt(x0.view(), x1.view(), 0.5, Method::Flow, sched);
    CHECK(mid.at(0, 0) == 1.0f);
    CHECK(mid.at(0, 1) == -1.0f);

    // Diffusion at t=0: alpha=1, sigma=0 gives x0 exactly.
    const Matrix d0 = make_xt(x0.view(), x1.view(), 0.0, Method::Diffusion, sched);
    CHECK(d0.at(0, 0) == 0.0f);
    CHECK(d0.at(0, 1) == 0.0f);
}

TEST_CASE("make_targets flow and diffusion") {
    Matrix x0(1, 2), x1(1, 2);
    x0.at(0, 0) = 1.0f;
    x0.at(0, 1) = 0.0f;
    x1.at(0, 0) = 0.0f;
    x1.at(0, 1) = 1.0f;
    VpSchedule sched;

    for (double t : {0.0, 0.3, 1.0}) {
        const Matrix z = make_targets(x0.view(), x1.view(), t, Method::Flow, sched, 0.0);
        CHECK(z.at(0, 0) == -1.0f);
        CHECK(z.at(0, 1) == 1.0f);
    }

    // Score target -x1/sigma at a hand-picked sigma = 0.5.
    double t_half = 0.0;
    for (double t = 0.0; t <= 1.0; t += 1e-5) {
        if (sched.sigma(t) >= 0.5) {
            t_half = t;
            break;
        }
    }
    Matrix x1b(1, 2);
    x1b.at(0, 0) = 0.8f;
    x1b.at(0, 1) = -0.4f;
    const Matrix z = make_targets(x0.view(), x1b.view(), t_half, Method::Diffusion, sched, 1e-4);
    const float sigma = static_cast<float>(sched.sigma(t_half));
    CHECK(z.at(0, 0) == doctest::Approx(-0.8f / sigma).epsilon(1e-4));
    CHECK(z.at(0, 1) == doctest::Approx(0.4f / sigma).epsilon(1e-4));
    CHECK(z.at(0, 0) == doctest::Approx(-1.6).epsilon(2e-2));

    CHECK_THROWS_WITH_AS(
        make_targets(x0.view(), x1b.view(), 1e-5, Method::Diffusion, sched, 0.001),
        doctest::Contains("DegenerateTime"), Error);
}

TEST_CASE("job_rng streams are deterministic and keyed") {
    Rng a = job_rng(7, 3, 1, "valid_noise");
    Rng b = job_rng(7, 3, 1, "valid_noise");
    for (int i = 0; i < 1000; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng c = job_rng(7, 4, 1, "valid_noise");
    Rng d = job_rng(7, 3, 2, "valid_noise");
    Rng e = job_rng(7, 3, 1, "train_noise");
    bool all_equal_c = true, all_equal_d = true, all_equal_e = true;
    Rng a2 = job_rng(7, 3, 1, "valid_noise");
    for (int i = 0; i < 64; ++i) {
        const auto ref = a2.next_u64();
        all_equal_c &= (c.next_u64() == ref);
        all_equal_d &= (d.next_u64() == ref);
        all_equal_e &= (e.next_u64() == ref);
    }
    CHECK_FALSE(all_equal_c);
    CHECK_FALSE(all_equal_d);
    CHECK_FALSE(all_equal_e);
}

TEST_CASE("gaussian stream moments are sane") {
    Rng rng = job_rng(1, 0, 0, "train_noise");
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = rng.normal_at(i);
        sum += v;
        sq += v * v;
    }
    CHECK(sum / n == doctest::Approx(0.0).epsilon(0.02));
    CHECK(sq / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("duplicated buffer layout: row r is sorted row floor(r/K)") {
    Dataset ds = synth_dataset(20, 3, 2, 9);
    auto [sorted, idx] = sort_by_class(ds);
    HyperParams hp = small_hp();
    hp.duplication = 7;
    testutil::TempDir dir("buf");
    const TrainingBuffers buffers = build_training_buffers(sorted, hp, dir.str());
    const MatrixView x0 = buffers.x0dup.view();
    REQUIRE(x0.rows == 20 * 7);
    for (std::size_t r = 0; r < x0.rows; ++r) {
        for (std::size_t j = 0; j < 3; ++j) {
            CHECK(x0.at(r, j) == sorted.features.at(r / 7, j));
        }
    }
    // Flow target buffer is exactly noise - x0dup.
    const MatrixView x1 = buffers.noise.view();
    const MatrixView z = buffers.z_flow.view();
    for (std::size_t i = 0; i < x0.size(); ++i) {
        CHECK(z.data[i] == x1.data[i] - x0.data[i]);
    }
}

TEST_CASE("train_all writes the n_t x n_y grid with m = p targets") {
    testutil::TempDir dir("store");
    const Dataset ds = synth_dataset(100, 4, 2, 3);

    SUBCASE("single-output") {
        const Manifest manifest = train_all(ds, small_hp(), dir.str());
        CHECK(manifest.jobs.size() == 5 * 2);
        CHECK(booster_files(dir.str()).size() == 10);
        const Booster b = ModelStore(dir.str()).load(2, 1);
        CHECK(b.n_outputs() == 4);
        CHECK(b.sequences().size() == 4);
        CHECK(b.mode() == TreeMode::SingleOutput);
    }
    SUBCASE("multi-output") {
        const Manifest manifest = train_all(ds, small_hp(Method::Flow, TreeMode::MultiOutput),
                                            dir.str());
        CHECK(manifest.jobs.size() == 10);
        const Booster b = ModelStore(dir.str()).load(0, 0);
        CHECK(b.n_outputs() == 4);
        CHECK(b.sequences().size() == 1);
        CHECK(b.mode() == TreeMode::MultiOutput);
    }
    SUBCASE("diffusion grid starts at eps") {
        const Manifest manifest =
            train_all(ds, small_hp(Method::Diffusion), dir.str());
        CHECK(manifest.grid.front() == doctest::Approx(0.001));
        CHECK(manifest.grid.back() == 1.0);
        CHECK(manifest.jobs.size() == 10);
    }
}

TEST_CASE("manifest json round-trips") {
    testutil::TempDir dir("store");
    const Dataset ds = synth_dataset(60, 3, 3, 5);
    const Manifest manifest = train_all(ds, small_hp(), dir.str());
    const Manifest back = ModelStore(dir.str()).read_manifest();
    CHECK(back.n == manifest.n);
    CHECK(back.p == manifest.p);
    CHECK(back.n_y == manifest.n_y);
    CHECK(back.class_counts == manifest.class_counts);
    CHECK(back.grid == manifest.grid);
    CHECK(back.scaler_min == manifest.scaler_min);
    CHECK(back.scaler_max == manifest.scaler_max);
    CHECK(back.jobs.size() == manifest.jobs.size());
    CHECK(back.hp.seed == manifest.hp.seed);
    CHECK(back.feature_names == manifest.feature_names);
}

TEST_CASE("resume retrains only the missing jobs") {
    testutil::TempDir dir("store");
    const Dataset ds = synth_dataset(80, 3, 2, 11);
    const HyperParams hp = small_hp();
    train_all(ds, hp, dir.str());

    // Drop the manifest and three booster files.
    fs::remove(fs::path(dir.str()) / "manifest.json");
    const std::set<std::string> dropped = {"model_t0000_y0000.fgb", "model_t0002_y0001.fgb",
                                           "model_t0004_y0000.fgb"};
    for (const auto& f : dropped) fs::remove(fs::path(dir.str()) / f);

    std::map<std::string, fs::file_time_type> mtimes;
    for (const auto& f : booster_files(dir.str())) {
        mtimes[f] = fs::last_write_time(fs::path(dir.str()) / f);
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(30));

    const Manifest manifest = train_all(ds, hp, dir.str());
    CHECK(manifest.jobs.size() == 10);
    CHECK(booster_files(dir.str()).size() == 10);
    std::size_t rerun = 0;
    for (const auto& f : booster_files(dir.str())) {
        const auto now = fs::last_write_time(fs::path(dir.str()) / f);
        if (mtimes.count(f)) {
            CHECK(now == mtimes[f]);  // kept checkpoints untouched
        } else {
            CHECK(dropped.count(f) == 1);
            ++rerun;
        }
    }
    CHECK(rerun == 3);
}

TEST_CASE("same seed and different worker counts give identical stores") {
    testutil::TempDir dir_a("store");
    testutil::TempDir dir_b("store");
    const Dataset ds = synth_dataset(60, 3, 3, 21);
    HyperParams hp = small_hp();
    hp.gbdt.early_stop_rounds = 2;
    hp.gbdt.n_tree = 6;

    hp.n_jobs = 1;
    train_all(ds, hp, dir_a.str());
    hp.n_jobs = 2;
    train_all(ds, hp, dir_b.str());

    const auto files = booster_files(dir_a.str());
    CHECK(files == booster_files(dir_b.str()));
    for (const auto& f : files) {
        CHECK(same_file_bytes(fs::path(dir_a.str()) / f, fs::path(dir_b.str()) / f));
    }
}

TEST_CASE("file-backed buffers produce the identical store") {
    testutil::TempDir dir_a("store");
    testutil::TempDir dir_b("store");
    const Dataset ds = synth_dataset(50, 2, 2, 31);
    HyperParams hp = small_hp();
    train_all(ds, hp, dir_a.str());
    hp.mmap_buffers = true;
    train_all(ds, hp, dir_b.str());
    for (const auto& f : booster_files(dir_a.str())) {
        CHECK(same_file_bytes(fs::path(dir_a.str()) / f, fs::path(dir_b.str()) / f));
    }
}

TEST_CASE("naive reference pipeline produces the identical store") {
    testutil::TempDir dir_a("store");
    testutil::TempDir dir_b("store");
    const Dataset ds = synth_dataset(50, 3, 2, 41);
    HyperParams hp = small_hp();
    hp.gbdt.early_stop_rounds = 2;
    train_all(ds, hp, dir_a.str());
    hp.naive_mode = true;
    train_all(ds, hp, dir_b.str());
    const auto files = booster_files(dir_a.str());
    REQUIRE(files.size() == 10);
    for (const auto& f : files) {
        CHECK(same_file_bytes(fs::path(dir_a.str()) / f, fs::path(dir_b.str()) / f));
    }
}

TEST_CASE("optimized training never materializes the full timestep tensor") {
    testutil::TempDir dir("store");
    const Dataset ds = synth_dataset(120, 3, 2, 51);
    HyperParams hp = small_hp();
    alloc::reset_peaks();
    train_all(ds, hp, dir.str());
    const std::int64_t tensor_bytes =
        static_cast<std::int64_t>(hp.n_t * ds.n * hp.duplication * ds.p * sizeof(float));
    CHECK(alloc::largest_block_bytes() < tensor_bytes);

    // The naive reference does allocate it.
    testutil::TempDir dir_naive("store");
    hp.naive_mode = true;
    alloc::reset_peaks();
    train_all(ds, hp, dir_naive.str());
    CHECK(alloc::largest_block_bytes() >= tensor_bytes);
}

}  // TEST_SUITE
