#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "forestgen/matrix.hpp"

namespace forestgen {

// Tabular dataset: fp32 feature matrix with optional dense integer class
// labels in [0, n_y). Unlabeled data is modeled as a single class (n_y = 1).
struct Dataset {
    Matrix features;
    std::vector<std::int32_t> labels;  // empty when unconditional
    std::size_t n = 0;
    std::size_t p = 0;
    std::size_t n_y = 1;

    std::vector<std::string> feature_names;
    std::string label_name;               // empty when unconditional
    std::vector<std::string> class_names; // original label text per dense id

    bool conditional() const { return !labels.empty() && n_y > 1; }
    std::int32_t label_of(std::size_t row) const {
        return labels.empty() ? 0 : labels[row];
    }

    // Enforces finiteness, label range, and presence of every class id.
    void validate() const;
};

struct RowRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t count() const { return end - begin; }
};

// Per-class row slices over a class-sorted dataset, plus the duplicated-slice
// arithmetic used once rows are repeated K times.
struct ClassIndex {
    std::vector<std::size_t> order;  // permutation applied to the input rows
    std::vector<RowRange> slices;    // one half-open range per class, in class order

    std::size_t n_classes() const { return slices.size(); }
    std::vector<std::size_t> class_counts() const;

    RowRange dup_slice(std::size_t cls, std::size_t k) const {
        return RowRange{slices[cls].begin * k, slices[cls].end * k};
    }
    std::vector<RowRange> dup_slices(std::size_t k) const;
};

enum class ScalerMode { Global, PerClass };

// Affine min-max map onto [-1, 1], fit either over all rows or per class.
// Degenerate features (min == max) map to 0 and invert to the stored constant.
class PerClassScaler {
  public:
    PerClassScaler() = default;

    static PerClassScaler fit(const Dataset& ds, const ClassIndex& idx, ScalerMode mode);

    Dataset apply(const Dataset& ds) const;
    Dataset invert(const Dataset& ds) const;

    // In-place transforms over a row block that belongs to one class.
    void apply_rows(std::size_t cls, float* rows, std::size_t n_rows, std::size_t p) const;
    void invert_rows(std::size_t cls, float* rows, std::size_t n_rows, std::size_t p) const;

    ScalerMode mode() const { return mode_; }
    std::size_t n_classes() const { return mins_.size(); }
    std::size_t n_features() const { return mins_.empty() ? 0 : mins_[0].size(); }
    const std::vector<std::vector<float>>& mins() const { return mins_; }
    const std::vector<std::vector<float>>& maxs() const { return maxs_; }

    static PerClassScaler from_params(ScalerMode mode, std::vector<std::vector<float>> mins,
                                      std::vector<std::vector<float>> maxs);

  private:
    std::size_t table_index(std::size_t cls) const {
        return mode_ == ScalerMode::Global ? 0 : cls;
    }

    ScalerMode mode_ = ScalerMode::Global;
    std::vector<std::vector<float>> mins_;  // [1][p] global, [n_y][p] per-class
    std::vector<std::vector<float>> maxs_;
};

// CSV ingestion. Cells must parse as finite numbers; the label column may
// hold integers or strings (factorized after a lexicographic sort of the
// distinct values). Errors: MissingValue, NonNumeric, EmptyFile,
// LabelColumnNotFound, IoError.
Dataset load_csv(const std::string& path, const std::optional<std::string>& label_col,
                 bool has_header = true);

// Mirrors the input format: header row, label column last when conditional.
void write_csv(const std::string& path, const Dataset& ds);

// Stable reorder so labels are non-decreasing; returns the sorted dataset and
// its class index. With n_y = 1 the single slice covers [0, n).
std::pair<Dataset, ClassIndex> sort_by_class(const Dataset& ds);

}  // namespace forestgen
