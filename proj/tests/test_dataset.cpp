#include <doctest.h>

#include <algorithm>
#include <random>

#include "forestgen/dataset.hpp"
#include "forestgen/errors.hpp"
#include "testutil.hpp"

using namespace forestgen;

TEST_SUITE("dataset") {

TEST_CASE("load_csv with a label column") {
    testutil::TempDir dir("csv");
    const auto path = testutil::write_text(dir, "d.csv", "a,b,y\n0,1,0\n2,3,1\n4,5,0\n");
    const Dataset ds = load_csv(path, std::string("y"));
    CHECK(ds.n == 3);
    CHECK(ds.p == 2);
    CHECK(ds.n_y == 2);
    CHECK(ds.labels == std::vector<std::int32_t>{0, 1, 0});
    CHECK(ds.features.at(1, 0) == 2.0f);
    CHECK(ds.feature_names == std::vector<std::string>{"a", "b"});
}

TEST_CASE("load_csv without a label column is unconditional") {
    testutil::TempDir dir("csv");
    const auto path = testutil::write_text(dir, "d.csv", "a,b,y\n0,1,0\n2,3,1\n4,5,0\n");
    const Dataset ds = load_csv(path, std::nullopt);
    CHECK(ds.n == 3);
    CHECK(ds.p == 3);
    CHECK(ds.n_y == 1);
    CHECK(std::all_of(ds.labels.begin(), ds.labels.end(), [](auto y) { return y == 0; }));
}

TEST_CASE("load_csv error paths") {
    testutil::TempDir dir("csv");
    const auto nan_path = testutil::write_text(dir, "nan.csv", "a,b\n1,NaN\n");
    CHECK_THROWS_WITH_AS(load_csv(nan_path, std::nullopt), doctest::Contains("MissingValue"),
                         Error);

    const auto text_path = testutil::write_text(dir, "t.csv", "a,b\n1,hello\n");
    CHECK_THROWS_WITH_AS(load_csv(text_path, std::nullopt), doctest::Contains("NonNumeric"),
                         Error);

    const auto empty_path = testutil::write_text(dir, "e.csv", "");
    CHECK_THROWS_WITH_AS(load_csv(empty_path, std::nullopt), doctest::Contains("EmptyFile"),
                         Error);

    const auto ok_path = testutil::write_text(dir, "ok.csv", "a,b\n1,2\n");
    CHECK_THROWS_WITH_AS(load_csv(ok_path, std::string("nope")),
                         doctest::Contains("LabelColumnNotFound"), Error);
}

TEST_CASE("string labels factorize in sorted order") {
    testutil::TempDir dir("csv");
    const auto path =
        testutil::write_text(dir, "d.csv", "a,y\n1,zebra\n2,apple\n3,zebra\n4,mango\n");
    const Dataset ds = load_csv(path, std::string("y"));
    CHECK(ds.n_y == 3);
    CHECK(ds.class_names == std::vector<std::string>{"apple", "mango", "zebra"});
    CHECK(ds.labels == std::vector<std::int32_t>{2, 0, 2, 1});
}

TEST_CASE("integer labels re-index densely by value order") {
    testutil::TempDir dir("csv");
    const auto path = testutil::write_text(dir, "d.csv", "a,y\n1,10\n2,-5\n3,10\n4,7\n");
    const Dataset ds = load_csv(path, std::string("y"));
    CHECK(ds.n_y == 3);
    CHECK(ds.class_names == std::vector<std::string>{"-5", "7", "10"});
    CHECK(ds.labels == std::vector<std::int32_t>{2, 0, 2, 1});
}

TEST_CASE("headerless csv uses generated column names") {
    testutil::TempDir dir("csv");
    const auto path = testutil::write_text(dir, "d.csv", "1,2,0\n3,4,1\n");
    const Dataset ds = load_csv(path, std::string("c2"), false);
    CHECK(ds.n == 2);
    CHECK(ds.p == 2);
    CHECK(ds.n_y == 2);
}

TEST_CASE("sort_by_class two classes") {
    Dataset ds;
    ds.n = 4;
    ds.p = 1;
    ds.n_y = 2;
    ds.features = Matrix(4, 1);
    for (std::size_t i = 0; i < 4; ++i) ds.features.at(i, 0) = static_cast<float>(i);
    ds.labels = {1, 0, 1, 0};
    ds.class_names = {"0", "1"};

    auto [sorted, idx] = sort_by_class(ds);
    CHECK(sorted.labels == std::vector<std::int32_t>{0, 0, 1, 1});
    CHECK(idx.slices[0].begin == 0);
    CHECK(idx.slices[0].end == 2);
    CHECK(idx.slices[1].begin == 2);
    CHECK(idx.slices[1].end == 4);
    // Stability: the two 0-label rows keep input order (rows 1 then 3).
    CHECK(sorted.features.at(0, 0) == 1.0f);
    CHECK(sorted.features.at(1, 0) == 3.0f);
    CHECK(idx.order == std::vector<std::size_t>{1, 3, 0, 2});
}

TEST_CASE("sort_by_class already sorted is identity") {
    Dataset ds;
    ds.n = 3;
    ds.p = 1;
    ds.n_y = 2;
    ds.features = Matrix(3, 1);
    ds.labels = {0, 0, 1};
    ds.class_names = {"0", "1"};
    auto [sorted, idx] = sort_by_class(ds);
    CHECK(idx.order == std::vector<std::size_t>{0, 1, 2});
    CHECK(idx.slices[0].count() == 2);
    CHECK(idx.slices[1].count() == 1);
}

TEST_CASE("dup_slices arithmetic") {
    // n=6, three balanced classes, K=4: starts and stops scale by K.
    ClassIndex idx;
    idx.slices = {{0, 2}, {2, 4}, {4, 6}};
    const auto dup = idx.dup_slices(4);
    CHECK(dup[0].begin == 0);
    CHECK(dup[0].end == 8);
    CHECK(dup[1].begin == 8);
    CHECK(dup[1].end == 16);
    CHECK(dup[2].begin == 16);
    CHECK(dup[2].end == 24);
}

TEST_CASE("partition property on random labeled data") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t n = 1 + rng() % 200;
        const std::size_t n_y = 1 + rng() % 5;
        Dataset ds;
        ds.n = n;
        ds.p = 2;
        ds.features = Matrix(n, 2);
        ds.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            ds.features.at(i, 0) = static_cast<float>(rng() % 1000);
            ds.features.at(i, 1) = static_cast<float>(i);
            ds.labels[i] = static_cast<std::int32_t>(rng() % n_y);
        }
        ds.n_y =
            1 + static_cast<std::size_t>(*std::max_element(ds.labels.begin(), ds.labels.end()));

        auto [sorted, idx] = sort_by_class(ds);
        // Slices partition [0, n) exactly and in order.
        std::size_t expected_begin = 0;
        for (std::size_t c = 0; c < idx.slices.size(); ++c) {
            CHECK(idx.slices[c].begin == expected_begin);
            expected_begin = idx.slices[c].end;
            for (std::size_t r = idx.slices[c].begin; r < idx.slices[c].end; ++r) {
                CHECK(sorted.labels[r] == static_cast<std::int32_t>(c));
            }
        }
        CHECK(expected_begin == n);
        // Multiset of rows preserved (tracked via the unique second column).
        std::vector<float> ids;
        for (std::size_t r = 0; r < n; ++r) ids.push_back(sorted.features.at(r, 1));
        std::sort(ids.begin(), ids.end());
        for (std::size_t r = 0; r < n; ++r) CHECK(ids[r] == static_cast<float>(r));
    }
}

TEST_CASE("scaler midpoint and endpoints") {
    Dataset ds;
    ds.n = 3;
    ds.p = 1;
    ds.features = Matrix(3, 1);
    ds.features.at(0, 0) = 0.0f;
    ds.features.at(1, 0) = 5.0f;
    ds.features.at(2, 0) = 10.0f;
    ds.labels = {0, 0, 0};
    ds.class_names = {"0"};
    auto [sorted, idx] = sort_by_class(ds);
    const auto scaler = PerClassScaler::fit(sorted, idx, ScalerMode::Global);
    const Dataset scaled = scaler.apply(sorted);
    CHECK(scaled.features.at(0, 0) == -1.0f);
    CHECK(scaled.features.at(1, 0) == 0.0f);
    CHECK(scaled.features.at(2, 0) == 1.0f);
}

TEST_CASE("per-class vs global scaling of the same value") {
    // Two classes with ranges [0,1] and [100,200]; value 150 in class 1.
    Dataset ds;
    ds.n = 4;
    ds.p = 1;
    ds.n_y = 2;
    ds.features = Matrix(4, 1);
    ds.features.at(0, 0) = 0.0f;
    ds.features.at(1, 0) = 1.0f;
    ds.features.at(2, 0) = 100.0f;
    ds.features.at(3, 0) = 200.0f;
    ds.labels = {0, 0, 1, 1};
    ds.class_names = {"0", "1"};
    auto [sorted, idx] = sort_by_class(ds);

    float probe = 150.0f;
    const auto per_class = PerClassScaler::fit(sorted, idx, ScalerMode::PerClass);
    per_class.apply_rows(1, &probe, 1, 1);
    CHECK(probe == doctest::Approx(0.0).epsilon(1e-6));

    probe = 150.0f;
    const auto global = PerClassScaler::fit(sorted, idx, ScalerMode::Global);
    global.apply_rows(0, &probe, 1, 1);
    CHECK(probe == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("scaler round-trip and range properties") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<float> value(-100.0f, 100.0f);
    for (auto mode : {ScalerMode::Global, ScalerMode::PerClass}) {
        Dataset ds;
        ds.n = 300;
        ds.p = 4;
        ds.n_y = 3;
        ds.features = Matrix(ds.n, ds.p);
        ds.labels.resize(ds.n);
        for (std::size_t i = 0; i < ds.n; ++i) {
            ds.labels[i] = static_cast<std::int32_t>(i % 3);
            for (std::size_t j = 0; j < ds.p; ++j) ds.features.at(i, j) = value(rng);
        }
        ds.class_names = {"0", "1", "2"};
        auto [sorted, idx] = sort_by_class(ds);
        const auto scaler = PerClassScaler::fit(sorted, idx, mode);
        const Dataset scaled = scaler.apply(sorted);
        const Dataset back = scaler.invert(scaled);
        for (std::size_t i = 0; i < ds.n * ds.p; ++i) {
            CHECK(scaled.features.data()[i] >= -1.0f);
            CHECK(scaled.features.data()[i] <= 1.0f);
            const float orig = sorted.features.data()[i];
            const float recovered = back.features.data()[i];
            CHECK(std::abs(recovered - orig) <= 1e-5f * std::max(1.0f, std::abs(orig)));
        }
    }
}

TEST_CASE("degenerate constant feature maps to zero and inverts") {
    Dataset ds;
    ds.n = 3;
    ds.p = 1;
    ds.features = Matrix(3, 1, 42.0f);
    ds.labels = {0, 0, 0};
    ds.class_names = {"0"};
    auto [sorted, idx] = sort_by_class(ds);
    const auto scaler = PerClassScaler::fit(sorted, idx, ScalerMode::Global);
    const Dataset scaled = scaler.apply(sorted);
    CHECK(scaled.features.at(0, 0) == 0.0f);
    const Dataset back = scaler.invert(scaled);
    CHECK(back.features.at(0, 0) == 42.0f);
}

TEST_CASE("csv round trip preserves values and label column") {
    testutil::TempDir dir("csv");
    Dataset ds;
    ds.n = 3;
    ds.p = 2;
    ds.n_y = 2;
    ds.features = Matrix(3, 2);
    ds.features.at(0, 0) = 0.125f;
    ds.features.at(0, 1) = -1.5f;
    ds.features.at(1, 0) = 3.25e-8f;
    ds.features.at(1, 1) = 7.0f;
    ds.features.at(2, 0) = -0.0f;
    ds.features.at(2, 1) = 1e20f;
    ds.labels = {1, 0, 1};
    ds.feature_names = {"a", "b"};
    ds.label_name = "y";
    ds.class_names = {"neg", "pos"};

    const std::string path = (dir.path() / "out.csv").string();
    write_csv(path, ds);
    const Dataset back = load_csv(path, std::string("y"));
    CHECK(back.n == 3);
    CHECK(back.p == 2);
    CHECK(back.n_y == 2);
    for (std::size_t i = 0; i < ds.n * ds.p; ++i) {
        CHECK(back.features.data()[i] == ds.features.data()[i]);
    }
    CHECK(back.class_names == std::vector<std::string>{"neg", "pos"});
    CHECK(back.labels == ds.labels);
}

}  // TEST_SUITE
