#include "forestgen/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "forestgen/errors.hpp"

namespace forestgen {

// ============================================================================
// Dataset
// ============================================================================

void Dataset::validate() const {
    if (features.rows() != n || features.cols() != p) {
        throw errors::shape_mismatch("feature matrix does not match (n, p)");
    }
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (!std::isfinite(features.data()[i])) {
            throw errors::missing_value(i / p, i % p);
        }
    }
    if (!labels.empty()) {
        if (labels.size() != n) throw errors::shape_mismatch("label vector length != n");
        std::vector<bool> seen(n_y, false);
        for (auto y : labels) {
            if (y < 0 || static_cast<std::size_t>(y) >= n_y) {
                throw errors::bad_param("label out of [0, n_y)");
            }
            seen[static_cast<std::size_t>(y)] = true;
        }
        for (std::size_t c = 0; c < n_y; ++c) {
            if (!seen[c]) throw errors::bad_param("class " + std::to_string(c) + " has no rows");
        }
    }
}

std::vector<std::size_t> ClassIndex::class_counts() const {
    std::vector<std::size_t> counts;
    counts.reserve(slices.size());
    for (const auto& s : slices) counts.push_back(s.count());
    return counts;
}

std::vector<RowRange> ClassIndex::dup_slices(std::size_t k) const {
    std::vector<RowRange> out;
    out.reserve(slices.size());
    for (std::size_t c = 0; c < slices.size(); ++c) out.push_back(dup_slice(c, k));
    return out;
}

// ============================================================================
// CSV ingestion
// ============================================================================

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string::npos) {
            cells.push_back(line.substr(start));
            break;
        }
        cells.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return cells;
}

std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

bool parse_float(const std::string& cell, float& out) {
    const char* first = cell.data();
    const char* last = first + cell.size();
    auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

bool parse_int(const std::string& cell, long long& out) {
    const char* first = cell.data();
    const char* last = first + cell.size();
    auto res = std::from_chars(first, last, out);
    return res.ec == std::errc() && res.ptr == last;
}

std::string float_to_string(float v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace

Dataset load_csv(const std::string& path, const std::optional<std::string>& label_col,
                 bool has_header) {
    std::ifstream in(path);
    if (!in) throw errors::io_error("cannot open " + path);

    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        rows.push_back(split_line(line));
    }
    if (rows.empty()) throw errors::empty_file(path);

    const std::size_t n_cols = rows[0].size();
    std::vector<std::string> col_names;
    std::size_t first_data_row = 0;
    if (has_header) {
        for (const auto& cell : rows[0]) col_names.push_back(trim(cell));
        first_data_row = 1;
        if (rows.size() == 1) throw errors::empty_file(path + " (header only)");
    } else {
        for (std::size_t j = 0; j < n_cols; ++j) col_names.push_back("c" + std::to_string(j));
    }

    std::size_t label_idx = n_cols;  // sentinel: no label column
    if (label_col) {
        auto it = std::find(col_names.begin(), col_names.end(), *label_col);
        if (it == col_names.end()) throw errors::label_column_not_found(*label_col);
        label_idx = static_cast<std::size_t>(it - col_names.begin());
    }

    Dataset ds;
    ds.n = rows.size() - first_data_row;
    ds.p = label_col ? n_cols - 1 : n_cols;
    ds.features = Matrix(ds.n, ds.p);
    for (std::size_t j = 0; j < n_cols; ++j) {
        if (j != label_idx) ds.feature_names.push_back(col_names[j]);
    }

    std::vector<std::string> raw_labels;
    raw_labels.reserve(label_col ? ds.n : 0);

    for (std::size_t r = 0; r < ds.n; ++r) {
        const auto& cells = rows[r + first_data_row];
        if (cells.size() != n_cols) {
            throw errors::shape_mismatch("row " + std::to_string(r) + " has " +
                                         std::to_string(cells.size()) + " cells, expected " +
                                         std::to_string(n_cols));
        }
        std::size_t out_j = 0;
        for (std::size_t j = 0; j < n_cols; ++j) {
            const std::string cell = trim(cells[j]);
            if (j == label_idx) {
                if (cell.empty()) throw errors::missing_value(r, j);
                raw_labels.push_back(cell);
                continue;
            }
            if (cell.empty()) throw errors::missing_value(r, j);
            float v;
            if (!parse_float(cell, v)) throw errors::non_numeric(r, j, cell);
            if (!std::isfinite(v)) throw errors::missing_value(r, j);
            ds.features.at(r, out_j++) = v;
        }
    }

    if (label_col) {
        // Integer labels index by sorted numeric value; anything else is
        // factorized from the lexicographically sorted distinct strings.
        bool all_int = true;
        std::vector<long long> int_labels(ds.n);
        for (std::size_t r = 0; r < ds.n; ++r) {
            if (!parse_int(raw_labels[r], int_labels[r])) {
                all_int = false;
                break;
            }
        }
        ds.labels.resize(ds.n);
        if (all_int) {
            std::map<long long, std::int32_t> dense;
            for (auto v : int_labels) dense.emplace(v, 0);
            std::int32_t next = 0;
            for (auto& [k, v] : dense) v = next++;
            for (std::size_t r = 0; r < ds.n; ++r) ds.labels[r] = dense[int_labels[r]];
            ds.class_names.resize(dense.size());
            for (auto& [k, v] : dense) ds.class_names[v] = std::to_string(k);
        } else {
            std::map<std::string, std::int32_t> dense;
            for (const auto& s : raw_labels) dense.emplace(s, 0);
            std::int32_t next = 0;
            for (auto& [k, v] : dense) v = next++;
            for (std::size_t r = 0; r < ds.n; ++r) ds.labels[r] = dense[raw_labels[r]];
            ds.class_names.resize(dense.size());
            for (auto& [k, v] : dense) ds.class_names[v] = k;
        }
        ds.n_y = ds.class_names.size();
        ds.label_name = *label_col;
    } else {
        ds.n_y = 1;
        ds.labels.assign(ds.n, 0);
        ds.class_names = {"0"};
    }

    ds.validate();
    return ds;
}

void write_csv(const std::string& path, const Dataset& ds) {
    std::ofstream out(path);
    if (!out) throw errors::io_error("cannot open " + path + " for writing");

    const bool with_label = ds.conditional();
    for (std::size_t j = 0; j < ds.p; ++j) {
        if (j) out << ',';
        out << (j < ds.feature_names.size() ? ds.feature_names[j] : "c" + std::to_string(j));
    }
    if (with_label) out << ',' << (ds.label_name.empty() ? "label" : ds.label_name);
    out << '\n';

    for (std::size_t r = 0; r < ds.n; ++r) {
        const float* row = ds.features.row(r);
        for (std::size_t j = 0; j < ds.p; ++j) {
            if (j) out << ',';
            out << float_to_string(row[j]);
        }
        if (with_label) {
            const auto c = static_cast<std::size_t>(ds.labels[r]);
            out << ',' << (c < ds.class_names.size() ? ds.class_names[c] : std::to_string(c));
        }
        out << '\n';
    }
    if (!out) throw errors::io_error("write failed for " + path);
}

// ============================================================================
// Class sorting and scaling
// ============================================================================

std::pair<Dataset, ClassIndex> sort_by_class(const Dataset& ds) {
    ClassIndex idx;
    idx.order.resize(ds.n);
    std::iota(idx.order.begin(), idx.order.end(), std::size_t{0});
    if (!ds.labels.empty()) {
        std::stable_sort(idx.order.begin(), idx.order.end(), [&](std::size_t a, std::size_t b) {
            return ds.labels[a] < ds.labels[b];
        });
    }

    Dataset sorted;
    sorted.n = ds.n;
    sorted.p = ds.p;
    sorted.n_y = ds.n_y;
    sorted.feature_names = ds.feature_names;
    sorted.label_name = ds.label_name;
    sorted.class_names = ds.class_names;
    sorted.features = Matrix(ds.n, ds.p);
    sorted.labels.resize(ds.n);
    for (std::size_t r = 0; r < ds.n; ++r) {
        const std::size_t src = idx.order[r];
        std::copy_n(ds.features.row(src), ds.p, sorted.features.row(r));
        sorted.labels[r] = ds.labels.empty() ? 0 : ds.labels[src];
    }

    // Cumulative class counts give the half-open slices.
    std::vector<std::size_t> counts(ds.n_y, 0);
    for (auto y : sorted.labels) counts[static_cast<std::size_t>(y)]++;
    std::size_t csum = 0;
    idx.slices.reserve(ds.n_y);
    for (std::size_t c = 0; c < ds.n_y; ++c) {
        idx.slices.push_back(RowRange{csum, csum + counts[c]});
        csum += counts[c];
    }
    return {std::move(sorted), std::move(idx)};
}

PerClassScaler PerClassScaler::fit(const Dataset& ds, const ClassIndex& idx, ScalerMode mode) {
    PerClassScaler s;
    s.mode_ = mode;
    const std::size_t tables = (mode == ScalerMode::Global) ? 1 : ds.n_y;
    s.mins_.assign(tables, std::vector<float>(ds.p, 0.0f));
    s.maxs_.assign(tables, std::vector<float>(ds.p, 0.0f));

    auto fit_range = [&](std::size_t table, std::size_t begin, std::size_t end) {
        for (std::size_t j = 0; j < ds.p; ++j) {
            float lo = ds.features.at(begin, j);
            float hi = lo;
            for (std::size_t r = begin + 1; r < end; ++r) {
                const float v = ds.features.at(r, j);
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            s.mins_[table][j] = lo;
            s.maxs_[table][j] = hi;
        }
    };

    if (mode == ScalerMode::Global) {
        fit_range(0, 0, ds.n);
    } else {
        for (std::size_t c = 0; c < ds.n_y; ++c) {
            fit_range(c, idx.slices[c].begin, idx.slices[c].end);
        }
    }
    return s;
}

PerClassScaler PerClassScaler::from_params(ScalerMode mode,
                                           std::vector<std::vector<float>> mins,
                                           std::vector<std::vector<float>> maxs) {
    PerClassScaler s;
    s.mode_ = mode;
    s.mins_ = std::move(mins);
    s.maxs_ = std::move(maxs);
    return s;
}

void PerClassScaler::apply_rows(std::size_t cls, float* rows, std::size_t n_rows,
                                std::size_t p) const {
    const auto& lo = mins_[table_index(cls)];
    const auto& hi = maxs_[table_index(cls)];
    for (std::size_t r = 0; r < n_rows; ++r) {
        float* row = rows + r * p;
        for (std::size_t j = 0; j < p; ++j) {
            const float range = hi[j] - lo[j];
            row[j] = (range == 0.0f) ? 0.0f : 2.0f * (row[j] - lo[j]) / range - 1.0f;
        }
    }
}

void PerClassScaler::invert_rows(std::size_t cls, float* rows, std::size_t n_rows,
                                 std::size_t p) const {
    const auto& lo = mins_[table_index(cls)];
    const auto& hi = maxs_[table_index(cls)];
    for (std::size_t r = 0; r < n_rows; ++r) {
        float* row = rows + r * p;
        for (std::size_t j = 0; j < p; ++j) {
            const float range = hi[j] - lo[j];
            row[j] = (range == 0.0f) ? lo[j] : (row[j] + 1.0f) * 0.5f * range + lo[j];
        }
    }
}

namespace {

Dataset transform_copy(const PerClassScaler& s, const Dataset& ds, bool inverse) {
    Dataset out = ds;  // value copy, then transform rows in place per class
    if (s.mode() == ScalerMode::PerClass && ds.n_y > 1) {
        std::size_t r = 0;
        while (r < ds.n) {
            const auto cls = static_cast<std::size_t>(out.label_of(r));
            std::size_t end = r;
            while (end < ds.n && static_cast<std::size_t>(out.label_of(end)) == cls) ++end;
            if (inverse) {
                s.invert_rows(cls, out.features.row(r), end - r, ds.p);
            } else {
                s.apply_rows(cls, out.features.row(r), end - r, ds.p);
            }
            r = end;
        }
    } else {
        if (inverse) {
            s.invert_rows(0, out.features.data(), ds.n, ds.p);
        } else {
            s.apply_rows(0, out.features.data(), ds.n, ds.p);
        }
    }
    return out;
}

}  // namespace

Dataset PerClassScaler::apply(const Dataset& ds) const { return transform_copy(*this, ds, false); }
Dataset PerClassScaler::invert(const Dataset& ds) const { return transform_copy(*this, ds, true); }

}  // namespace forestgen
