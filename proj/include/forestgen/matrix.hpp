#pragma once

#include <cstddef>
#include <span>
#include <utility>

#include "forestgen/alloc_stats.hpp"

namespace forestgen {

using FloatVec = alloc::tracked_vector<float>;

// Non-owning view over contiguous row-major fp32 data. Class slices of a
// sorted dataset are row ranges, so slicing never copies.
struct MatrixView {
    const float* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;

    const float* row(std::size_t r) const { return data + r * cols; }
    float at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
    std::size_t size() const { return rows * cols; }
    bool empty() const { return rows == 0 || cols == 0; }

    MatrixView slice_rows(std::size_t begin, std::size_t end) const {
        return MatrixView{data + begin * cols, end - begin, cols};
    }
};

// Owning row-major fp32 matrix; all storage precision in the pipeline is
// 32-bit float.
class Matrix {
  public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, float fill = 0.0f)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return data_.size(); }

    float* row(std::size_t r) { return data_.data() + r * cols_; }
    const float* row(std::size_t r) const { return data_.data() + r * cols_; }
    float& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    float at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }

    MatrixView view() const { return MatrixView{data_.data(), rows_, cols_}; }
    MatrixView slice_rows(std::size_t begin, std::size_t end) const {
        return view().slice_rows(begin, end);
    }

    void release() {
        rows_ = cols_ = 0;
        FloatVec().swap(data_);
    }

  private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    FloatVec data_;
};

}  // namespace forestgen
