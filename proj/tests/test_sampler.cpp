#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "forestgen/sampler.hpp"
#include "forestgen/trainer.hpp"
#include "forestgen/resource.hpp"
#include "testutil.hpp"

using namespace forestgen;
namespace fs = std::filesystem;

namespace {

// A store whose boosters all predict the constant field value w (zero trees,
// base = w), with an identity scaler (min -1, max 1 maps x to itself).
void write_constant_store(const std::string& dir, std::size_t p, std::size_t n_y,
                          std::size_t n_t, const std::vector<float>& field,
                          const std::vector<std::size_t>& class_counts,
                          Method method = Method::Flow) {
    ModelStore store(dir);
    store.ensure_dir();

    Manifest m;
    m.hp.method = method;
    m.hp.n_t = n_t;
    m.hp.min_time = method == Method::Diffusion ? 0.001 : 0.0;
    m.n = 100;
    m.p = p;
    m.n_y = n_y;
    for (std::size_t j = 0; j < p; ++j) m.feature_names.push_back("f" + std::to_string(j));
    m.label_name = n_y > 1 ? "y" : "";
    for (std::size_t c = 0; c < n_y; ++c) m.class_names.push_back(std::to_string(c));
    m.class_counts = class_counts;
    m.grid = time_grid(method, n_t, m.hp.min_time);
    m.scaler_mode = ScalerMode::PerClass;
    m.scaler_min.assign(n_y, std::vector<float>(p, -1.0f));
    m.scaler_max.assign(n_y, std::vector<float>(p, 1.0f));

    for (std::size_t ti = 0; ti < n_t; ++ti) {
        for (std::size_t yi = 0; yi < n_y; ++yi) {
            const Booster b = Booster::from_parts(
                TreeMode::SingleOutput, static_cast<std::uint32_t>(p),
                static_cast<std::uint32_t>(p), 1.0f, field,
                std::vector<std::vector<Tree>>(p));
            save_booster(b, store.booster_path(ti, yi));
            JobRecord rec;
            rec.t_index = ti;
            rec.y_index = yi;
            rec.file = ModelStore::booster_filename(ti, yi);
            m.jobs.push_back(rec);
        }
    }
    store.write_manifest(m);
}

// The generator's noise stream, replicated for oracles.
float gen_noise_at(std::uint64_t seed, std::size_t cls, std::size_t p, std::size_t row,
                   std::size_t col) {
    const Rng rng = job_rng(seed, 0, cls, "gen_noise");
    return rng.normal_at(static_cast<std::uint64_t>(row) * p + col);
}

// The constant store's scaler inverse, applied exactly as the sampler does.
float identity_store_invert(float x) {
    float v = x;
    PerClassScaler::from_params(ScalerMode::PerClass, {{-1.0f}}, {{1.0f}})
        .invert_rows(0, &v, 1, 1);
    return v;
}

}  // namespace

TEST_SUITE("sampler") {

TEST_CASE("empirical labels with exact proportions") {
    Rng rng = job_rng(1, 0, 0, "gen_labels");
    const auto labels = sample_labels({50, 50}, 10, LabelMode::Empirical, rng);
    REQUIRE(labels.size() == 10);
    for (std::size_t i = 0; i < 5; ++i) CHECK(labels[i] == 0);
    for (std::size_t i = 5; i < 10; ++i) CHECK(labels[i] == 1);
}

TEST_CASE("single class gives all zeros in either mode") {
    for (auto mode : {LabelMode::Empirical, LabelMode::Multinomial}) {
        Rng rng = job_rng(2, 0, 0, "gen_labels");
        const auto labels = sample_labels({17}, 9, mode, rng);
        for (auto y : labels) CHECK(y == 0);
    }
}

TEST_CASE("largest-remainder apportionment") {
    Rng rng = job_rng(3, 0, 0, "gen_labels");
    // Quotas 8/3 and 4/3: floors 2 and 1, the leftover goes to class 0.
    const auto labels = sample_labels({2, 1}, 4, LabelMode::Empirical, rng);
    CHECK(labels == std::vector<std::int32_t>{0, 0, 0, 1});
}

TEST_CASE("multinomial labels are sorted and deterministic in seed") {
    Rng a = job_rng(4, 0, 0, "gen_labels");
    Rng b = job_rng(4, 0, 0, "gen_labels");
    const auto la = sample_labels({10, 30, 60}, 500, LabelMode::Multinomial, a);
    const auto lb = sample_labels({10, 30, 60}, 500, LabelMode::Multinomial, b);
    CHECK(la == lb);
    CHECK(std::is_sorted(la.begin(), la.end()));
    // Rough frequency sanity: class 2 should dominate.
    const auto c2 = std::count(la.begin(), la.end(), 2);
    CHECK(c2 > 200);
}

TEST_CASE("zero vector field returns the prior noise") {
    testutil::TempDir dir("gen");
    write_constant_store(dir.str(), 2, 1, 5, {0.0f, 0.0f}, {100});
    GenConfig cfg;
    cfg.n_samples = 8;
    cfg.seed = 11;
    GenStats stats;
    const Dataset out = generate(ModelStore(dir.str()), cfg, &stats);
    REQUIRE(out.n == 8);
    REQUIRE(out.p == 2);
    for (std::size_t r = 0; r < out.n; ++r) {
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(out.features.at(r, j) ==
                  identity_store_invert(gen_noise_at(11, 0, 2, r, j)));
        }
    }
    CHECK(stats.predict_calls_per_class == std::vector<std::size_t>{5});
}

TEST_CASE("constant field matches the closed-form Euler solution") {
    // n_t steps of size h = 1/(n_t-1) integrate a constant field over total
    // time n_t/(n_t-1); the strict-time variant stops after exactly time 1.
    const std::size_t n_t = 5;
    const std::vector<float> field = {0.5f, -0.25f};
    testutil::TempDir dir("gen");
    write_constant_store(dir.str(), 2, 1, n_t, field, {100});

    GenConfig cfg;
    cfg.n_samples = 6;
    cfg.seed = 19;
    const Dataset out = generate(ModelStore(dir.str()), cfg);
    const float h = 1.0f / static_cast<float>(n_t - 1);
    for (std::size_t r = 0; r < out.n; ++r) {
        for (std::size_t j = 0; j < 2; ++j) {
            float x = gen_noise_at(19, 0, 2, r, j);
            for (std::size_t s = 0; s < n_t; ++s) x -= h * field[j];
            CHECK(out.features.at(r, j) == identity_store_invert(x));
        }
    }

    cfg.strict_time = true;
    const Dataset strict = generate(ModelStore(dir.str()), cfg);
    for (std::size_t r = 0; r < strict.n; ++r) {
        for (std::size_t j = 0; j < 2; ++j) {
            float x = gen_noise_at(19, 0, 2, r, j);
            for (std::size_t s = 0; s + 1 < n_t; ++s) x -= h * field[j];
            CHECK(strict.features.at(r, j) == identity_store_invert(x));
        }
    }
}

TEST_CASE("per-class blocks, inverse scaling, and sorted labels") {
    testutil::TempDir dir("store");
    const Dataset ds = synth_dataset(90, 3, 3, 7);
    HyperParams hp;
    hp.n_t = 4;
    hp.duplication = 5;
    hp.gbdt.n_tree = 3;
    hp.gbdt.max_depth = 2;
    hp.seed = 5;
    hp.n_jobs = 2;
    train_all(ds, hp, dir.str());

    GenConfig cfg;
    cfg.n_samples = 30;
    cfg.seed = 23;
    cfg.label_mode = LabelMode::Empirical;
    GenStats stats;
    const Dataset out = generate(ModelStore(dir.str()), cfg, &stats);
    CHECK(out.n == 30);
    CHECK(out.p == 3);
    CHECK(std::is_sorted(out.labels.begin(), out.labels.end()));

    // Block sizes equal the label apportionment.
    Rng rng = job_rng(cfg.seed, 0, 0, "gen_labels");
    const Manifest manifest = ModelStore(dir.str()).read_manifest();
    const auto expect =
        sample_labels(manifest.class_counts, cfg.n_samples, cfg.label_mode, rng);
    CHECK(out.labels == expect);

    // One predict call per timestep per class.
    for (auto calls : stats.predict_calls_per_class) CHECK(calls == hp.n_t);
}

TEST_CASE("generation is deterministic and batching is invisible") {
    testutil::TempDir dir("store");
    const Dataset ds = synth_dataset(60, 2, 2, 17);
    HyperParams hp;
    hp.n_t = 4;
    hp.duplication = 5;
    hp.gbdt.n_tree = 3;
    hp.gbdt.max_depth = 2;
    hp.seed = 6;
    train_all(ds, hp, dir.str());
    const ModelStore store(dir.str());

    GenConfig cfg;
    cfg.n_samples = 25;
    cfg.seed = 31;
    const Dataset a = generate(store, cfg);
    const Dataset b = generate(store, cfg);
    for (std::size_t i = 0; i < a.features.size(); ++i) {
        CHECK(a.features.data()[i] == b.features.data()[i]);
    }

    for (std::size_t batch : {1ul, 7ul, 25ul, 100ul}) {
        Matrix collected(a.n, a.p);
        std::vector<std::int32_t> labels;
        std::size_t at = 0;
        generate_batched(store, cfg, batch, [&](const Dataset& block) {
            if (batch < a.n) CHECK(block.n <= batch);
            for (std::size_t r = 0; r < block.n; ++r) {
                std::copy_n(block.features.row(r), a.p, collected.row(at++));
                labels.push_back(block.labels[r]);
            }
        });
        REQUIRE(at == a.n);
        CHECK(labels == a.labels);
        for (std::size_t i = 0; i < a.features.size(); ++i) {
            CHECK(collected.data()[i] == a.features.data()[i]);
        }
    }
}

TEST_CASE("class isolation: other classes' boosters do not affect class c") {
    testutil::TempDir dir("store");
    const Dataset ds = synth_dataset(80, 2, 2, 27);
    HyperParams hp;
    hp.n_t = 3;
    hp.duplication = 4;
    hp.gbdt.n_tree = 2;
    hp.gbdt.max_depth = 2;
    hp.seed = 8;
    train_all(ds, hp, dir.str());
    const ModelStore store(dir.str());

    GenConfig cfg;
    cfg.n_samples = 20;
    cfg.seed = 3;
    const Dataset before = generate(store, cfg);

    // Replace every class-1 booster with the class-0 one (valid but wrong).
    for (std::size_t ti = 0; ti < hp.n_t; ++ti) {
        fs::copy_file(store.booster_path(ti, 0), store.booster_path(ti, 1),
                      fs::copy_options::overwrite_existing);
    }
    const Dataset after = generate(store, cfg);
    bool class1_changed = false;
    for (std::size_t r = 0; r < before.n; ++r) {
        for (std::size_t j = 0; j < before.p; ++j) {
            if (before.labels[r] == 0) {
                CHECK(before.features.at(r, j) == after.features.at(r, j));
            } else if (before.features.at(r, j) != after.features.at(r, j)) {
                class1_changed = true;
            }
        }
    }
    CHECK(class1_changed);
}

TEST_CASE("store validation errors") {
    testutil::TempDir dir("store");
    const Dataset ds = synth_dataset(40, 2, 2, 37);
    HyperParams hp;
    hp.n_t = 3;
    hp.duplication = 4;
    hp.gbdt.n_tree = 2;
    hp.gbdt.max_depth = 2;
    train_all(ds, hp, dir.str());
    const ModelStore store(dir.str());

    GenConfig cfg;
    cfg.n_samples = 5;

    SUBCASE("mismatched generation grid") {
        cfg.n_t_gen = 7;
        CHECK_THROWS_WITH_AS(generate(store, cfg), doctest::Contains("NTGridMismatch"), Error);
        cfg.n_t_gen = 3;
        CHECK_NOTHROW(generate(store, cfg));
    }
    SUBCASE("missing booster file") {
        fs::remove(fs::path(store.booster_path(1, 1)));
        CHECK_THROWS_WITH_AS(generate(store, cfg), doctest::Contains("StoreIncomplete"), Error);
    }
}

TEST_CASE("diffusion generation runs the probability-flow path") {
    testutil::TempDir dir("store");
    const Dataset ds = synth_dataset(60, 2, 1, 47);
    HyperParams hp;
    hp.method = Method::Diffusion;
    hp.min_time = 0.001;
    hp.n_t = 6;
    hp.duplication = 10;
    hp.gbdt.n_tree = 4;
    hp.gbdt.max_depth = 3;
    train_all(ds, hp, dir.str());

    GenConfig cfg;
    cfg.n_samples = 40;
    cfg.seed = 9;
    const Dataset out = generate(ModelStore(dir.str()), cfg);
    CHECK(out.n == 40);
    for (std::size_t i = 0; i < out.features.size(); ++i) {
        CHECK(std::isfinite(out.features.data()[i]));
    }
}

}  // TEST_SUITE
