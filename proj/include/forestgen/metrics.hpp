#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "forestgen/matrix.hpp"

namespace forestgen {

// Exact 1-D Wasserstein-1 via the sorted quantile coupling; for equal sizes
// this is the mean |a_(i) - b_(i)|.
double w1_1d(const std::vector<double>& a, const std::vector<double>& b);

// Exact multivariate W1 between equal-size uniform samples: minimum-cost
// perfect matching under the L1 ground cost, O(n^3) assignment. n <= 512.
double w1_exact(MatrixView a, MatrixView b);

// Fraction of reference points whose closed L1 ball of radius
// NND_k(x_j^r) (k-th nearest neighbour within ref, self excluded) contains at
// least one generated point.
double coverage(MatrixView gen, MatrixView ref, std::size_t k);

// Smallest k >= 1 with coverage(train, test, k) >= 0.95, capped at m - 1.
// Sets *capped when the threshold is unreachable.
std::size_t choose_k(MatrixView train, MatrixView test, bool* capped = nullptr);

struct HistogramPair {
    std::vector<double> edges;  // shared bin edges, size bins + 1
    std::vector<double> h1;     // normalized masses
    std::vector<double> h2;
};

// Shared equal-width histogram over the pooled range of both samples.
HistogramPair make_histogram_pair(const std::vector<double>& a, const std::vector<double>& b,
                                  std::size_t bins = 50);

// chi^2 separation power: 0.5 * sum (h1-h2)^2 / (h1+h2) over occupied bins;
// 0 iff equal, 1 iff disjoint supports.
double chi2_sep(const HistogramPair& h);

// Full evaluation report between generated data and the train/test splits,
// emitted by the CLI as JSON. The multivariate W1 uses the exact assignment
// solver up to w1_cap rows per side and the mean of per-feature 1-D
// distances above that (reported as sliced-axis W1).
struct MetricsReport {
    double w1_train = 0.0;
    double w1_test = 0.0;
    std::string w1_kind;  // "exact" or "sliced_axis"
    double cov_train = 0.0;
    double cov_test = 0.0;
    std::size_t k = 1;
    bool k_capped = false;
    std::vector<double> chi2_per_feature;  // generated vs test

    std::string to_json_text() const;
};

MetricsReport evaluate_metrics(MatrixView gen, MatrixView train, MatrixView test,
                               std::size_t chi2_bins = 50, std::size_t w1_cap = 512);

}  // namespace forestgen
