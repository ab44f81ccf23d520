#include "forestgen/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "forestgen/errors.hpp"

namespace forestgen {

double w1_1d(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty()) throw errors::empty_sample();
    std::vector<double> sa = a, sb = b;
    std::sort(sa.begin(), sa.end());
    std::sort(sb.begin(), sb.end());

    if (sa.size() == sb.size()) {
        double total = 0.0;
        for (std::size_t i = 0; i < sa.size(); ++i) total += std::abs(sa[i] - sb[i]);
        return total / static_cast<double>(sa.size());
    }

    // General case: integrate |F_a^{-1}(q) - F_b^{-1}(q)| over the merged
    // quantile breakpoints of the two empirical distributions.
    const std::size_t n = sa.size(), m = sb.size();
    double total = 0.0;
    double q = 0.0;
    std::size_t i = 0, j = 0;
    while (i < n && j < m) {
        const double qa = static_cast<double>(i + 1) / static_cast<double>(n);
        const double qb = static_cast<double>(j + 1) / static_cast<double>(m);
        const double q_next = std::min(qa, qb);
        total += (q_next - q) * std::abs(sa[i] - sb[j]);
        q = q_next;
        if (qa <= q_next) ++i;
        if (qb <= q_next) ++j;
    }
    return total;
}

namespace {

double l1_distance(const float* a, const float* b, std::size_t p) {
    double d = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
        d += std::abs(static_cast<double>(a[j]) - static_cast<double>(b[j]));
    }
    return d;
}

// Hungarian algorithm (shortest augmenting path with potentials), O(n^3).
// cost is row-major [n, n]; returns the minimum total assignment cost.
double solve_assignment(const std::vector<double>& cost, std::size_t n) {
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<std::size_t> match(n + 1, 0);  // match[col] = row (1-based)

    for (std::size_t row = 1; row <= n; ++row) {
        std::vector<double> min_to(n + 1, kInf);
        std::vector<std::size_t> prev(n + 1, 0);
        std::vector<bool> used(n + 1, false);
        std::size_t col0 = 0;
        match[0] = row;
        do {
            used[col0] = true;
            const std::size_t r = match[col0];
            double delta = kInf;
            std::size_t col1 = 0;
            for (std::size_t col = 1; col <= n; ++col) {
                if (used[col]) continue;
                const double reduced = cost[(r - 1) * n + (col - 1)] - u[r] - v[col];
                if (reduced < min_to[col]) {
                    min_to[col] = reduced;
                    prev[col] = col0;
                }
                if (min_to[col] < delta) {
                    delta = min_to[col];
                    col1 = col;
                }
            }
            for (std::size_t col = 0; col <= n; ++col) {
                if (used[col]) {
                    u[match[col]] += delta;
                    v[col] -= delta;
                } else {
                    min_to[col] -= delta;
                }
            }
            col0 = col1;
        } while (match[col0] != 0);
        // Augment along the alternating path.
        while (col0 != 0) {
            const std::size_t col1 = prev[col0];
            match[col0] = match[col1];
            col0 = col1;
        }
    }

    double total = 0.0;
    for (std::size_t col = 1; col <= n; ++col) {
        total += cost[(match[col] - 1) * n + (col - 1)];
    }
    return total;
}

}  // namespace

double w1_exact(MatrixView a, MatrixView b) {
    constexpr std::size_t kMaxN = 512;
    if (a.rows == 0 || b.rows == 0) throw errors::empty_sample();
    if (a.rows != b.rows || a.cols != b.cols) {
        throw errors::shape_mismatch("w1_exact requires equal sample shapes");
    }
    if (a.rows > kMaxN) throw errors::too_large(a.rows, kMaxN);

    const std::size_t n = a.rows;
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            cost[i * n + j] = l1_distance(a.row(i), b.row(j), a.cols);
        }
    }
    return solve_assignment(cost, n) / static_cast<double>(n);
}

double coverage(MatrixView gen, MatrixView ref, std::size_t k) {
    if (gen.rows == 0 || ref.rows == 0) throw errors::empty_sample();
    if (gen.cols != ref.cols) throw errors::shape_mismatch("coverage feature counts differ");
    if (k < 1 || k >= ref.rows) throw errors::k_too_large(k, ref.rows);

    const std::size_t m = ref.rows;
    std::size_t covered = 0;
    std::vector<double> dists(m - 1);
    for (std::size_t j = 0; j < m; ++j) {
        std::size_t idx = 0;
        for (std::size_t o = 0; o < m; ++o) {
            if (o == j) continue;  // self excluded from the k-NN radius
            dists[idx++] = l1_distance(ref.row(j), ref.row(o), ref.cols);
        }
        std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
        const double radius = dists[k - 1];
        for (std::size_t i = 0; i < gen.rows; ++i) {
            if (l1_distance(gen.row(i), ref.row(j), ref.cols) <= radius) {
                ++covered;
                break;
            }
        }
    }
    return static_cast<double>(covered) / static_cast<double>(m);
}

std::size_t choose_k(MatrixView train, MatrixView test, bool* capped) {
    if (train.rows == 0 || test.rows == 0) throw errors::empty_sample();
    const std::size_t cap = test.rows - 1;
    if (capped) *capped = false;
    for (std::size_t k = 1; k <= cap; ++k) {
        if (coverage(train, test, k) >= 0.95) return k;
    }
    if (capped) *capped = true;
    return cap;
}

HistogramPair make_histogram_pair(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t bins) {
    if (a.empty() || b.empty()) throw errors::empty_sample();
    if (bins < 1) throw errors::bad_param("bins must be >= 1");

    double lo = a[0], hi = a[0];
    for (double v : a) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    for (double v : b) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    if (hi == lo) hi = lo + 1.0;  // all mass in one bin

    HistogramPair pair;
    pair.edges.resize(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i) {
        pair.edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    }
    pair.h1.assign(bins, 0.0);
    pair.h2.assign(bins, 0.0);

    auto fill = [&](const std::vector<double>& values, std::vector<double>& h) {
        const double width = (hi - lo) / static_cast<double>(bins);
        for (double v : values) {
            auto bin = static_cast<std::size_t>((v - lo) / width);
            if (bin >= bins) bin = bins - 1;
            h[bin] += 1.0;
        }
        for (double& mass : h) mass /= static_cast<double>(values.size());
    };
    fill(a, pair.h1);
    fill(b, pair.h2);
    return pair;
}

double chi2_sep(const HistogramPair& h) {
    if (h.h1.size() != h.h2.size()) throw errors::shape_mismatch("histogram sizes differ");
    double sum1 = 0.0, sum2 = 0.0;
    for (double v : h.h1) {
        if (v < 0.0) throw errors::not_normalized(v);
        sum1 += v;
    }
    for (double v : h.h2) {
        if (v < 0.0) throw errors::not_normalized(v);
        sum2 += v;
    }
    if (std::abs(sum1 - 1.0) > 1e-6) throw errors::not_normalized(sum1);
    if (std::abs(sum2 - 1.0) > 1e-6) throw errors::not_normalized(sum2);

    double chi2 = 0.0;
    for (std::size_t i = 0; i < h.h1.size(); ++i) {
        const double denom = h.h1[i] + h.h2[i];
        if (denom == 0.0) continue;
        const double diff = h.h1[i] - h.h2[i];
        chi2 += diff * diff / denom;
    }
    return 0.5 * chi2;
}

namespace {

std::vector<double> feature_column(MatrixView m, std::size_t j) {
    std::vector<double> col(m.rows);
    for (std::size_t r = 0; r < m.rows; ++r) col[r] = m.at(r, j);
    return col;
}

// Mean of per-feature 1-D distances, the desk-scale stand-in for exact
// multivariate W1 on large samples.
double sliced_axis_w1(MatrixView a, MatrixView b) {
    double total = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) {
        total += w1_1d(feature_column(a, j), feature_column(b, j));
    }
    return total / static_cast<double>(a.cols);
}

}  // namespace

MetricsReport evaluate_metrics(MatrixView gen, MatrixView train, MatrixView test,
                               std::size_t chi2_bins, std::size_t w1_cap) {
    MetricsReport report;

    const bool exact_train = gen.rows == train.rows && gen.rows <= w1_cap;
    const bool exact_test = gen.rows == test.rows && gen.rows <= w1_cap;
    if (exact_train && exact_test) {
        report.w1_kind = "exact";
        report.w1_train = w1_exact(gen, train);
        report.w1_test = w1_exact(gen, test);
    } else {
        report.w1_kind = "sliced_axis";
        report.w1_train = sliced_axis_w1(gen, train);
        report.w1_test = sliced_axis_w1(gen, test);
    }

    report.k = choose_k(train, test, &report.k_capped);
    report.cov_train = coverage(gen, train, std::min(report.k, train.rows - 1));
    report.cov_test = coverage(gen, test, report.k);

    for (std::size_t j = 0; j < gen.cols; ++j) {
        const auto pair =
            make_histogram_pair(feature_column(gen, j), feature_column(test, j), chi2_bins);
        report.chi2_per_feature.push_back(chi2_sep(pair));
    }
    return report;
}

std::string MetricsReport::to_json_text() const {
    nlohmann::json j;
    j["w1_train"] = w1_train;
    j["w1_test"] = w1_test;
    j["w1_kind"] = w1_kind;
    j["cov_train"] = cov_train;
    j["cov_test"] = cov_test;
    j["k"] = k;
    j["k_capped"] = k_capped;
    j["chi2"] = {{"per_feature", chi2_per_feature}};
    return j.dump(2);
}

}  // namespace forestgen
