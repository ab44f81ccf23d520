#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace forestgen {

// Base class for all engine errors. The factory functions below carry the
// error vocabulary used across modules so callers can match on kind().
class Error : public std::runtime_error {
  public:
    Error(std::string kind, const std::string& msg)
        : std::runtime_error(kind + ": " + msg), kind_(std::move(kind)) {}

    const std::string& kind() const { return kind_; }

  private:
    std::string kind_;
};

namespace errors {

inline Error missing_value(std::size_t row, std::size_t col) {
    return Error("MissingValue",
                 "row " + std::to_string(row) + ", column " + std::to_string(col));
}
inline Error non_numeric(std::size_t row, std::size_t col, const std::string& cell) {
    return Error("NonNumeric", "row " + std::to_string(row) + ", column " +
                                   std::to_string(col) + ": '" + cell + "'");
}
inline Error empty_file(const std::string& path) { return Error("EmptyFile", path); }
inline Error label_column_not_found(const std::string& name) {
    return Error("LabelColumnNotFound", name);
}
inline Error shape_mismatch(const std::string& detail) { return Error("ShapeMismatch", detail); }
inline Error empty_targets() { return Error("EmptyTargets", "no target columns"); }
inline Error corrupt_file(const std::string& detail) { return Error("CorruptFile", detail); }
inline Error io_error(const std::string& detail) { return Error("IoError", detail); }
inline Error degenerate_time(double t) {
    return Error("DegenerateTime", "t=" + std::to_string(t) + " below minimum time");
}
inline Error training_failed(std::size_t t_index, std::size_t y_index, const std::string& why) {
    return Error("TrainingFailed", "job (t=" + std::to_string(t_index) + ", y=" +
                                       std::to_string(y_index) + "): " + why);
}
inline Error store_incomplete(const std::string& detail) {
    return Error("StoreIncomplete", detail);
}
inline Error empty_sample() { return Error("EmptySample", "metric input is empty"); }
inline Error too_large(std::size_t n, std::size_t limit) {
    return Error("TooLarge", "n=" + std::to_string(n) + " exceeds " + std::to_string(limit));
}
inline Error k_too_large(std::size_t k, std::size_t m) {
    return Error("KTooLarge", "k=" + std::to_string(k) + " with m=" + std::to_string(m));
}
inline Error not_normalized(double sum) {
    return Error("NotNormalized", "histogram mass sums to " + std::to_string(sum));
}
inline Error bad_param(const std::string& detail) { return Error("BadParam", detail); }
inline Error nt_grid_mismatch(std::size_t requested, std::size_t trained) {
    return Error("NTGridMismatch", "requested n_t=" + std::to_string(requested) +
                                       " but store was trained with n_t=" +
                                       std::to_string(trained));
}

}  // namespace errors
}  // namespace forestgen
