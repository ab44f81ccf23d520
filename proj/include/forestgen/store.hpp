#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "forestgen/config.hpp"
#include "forestgen/gbdt.hpp"

namespace forestgen {

struct JobRecord {
    std::size_t t_index = 0;
    std::size_t y_index = 0;
    std::string file;
    std::vector<std::uint32_t> best_iterations;
    double seconds = 0.0;
};

// Store manifest: everything generation and evaluation need to use the
// n_t x n_y booster files, plus the training hyperparameters for the record.
struct Manifest {
    int format_version = 1;
    HyperParams hp;
    std::size_t n = 0;
    std::size_t p = 0;
    std::size_t n_y = 1;
    std::vector<std::string> feature_names;
    std::string label_name;
    std::vector<std::string> class_names;
    std::vector<std::size_t> class_counts;
    std::vector<double> grid;
    ScalerMode scaler_mode = ScalerMode::PerClass;
    std::vector<std::vector<float>> scaler_min;
    std::vector<std::vector<float>> scaler_max;
    std::vector<JobRecord> jobs;

    PerClassScaler scaler() const;
    std::string to_json_text() const;
    static Manifest from_json_text(const std::string& text);
};

// On-disk model directory: manifest.json plus one booster file per
// (timestep, class) job.
class ModelStore {
  public:
    explicit ModelStore(std::string dir);

    const std::string& dir() const { return dir_; }
    static std::string booster_filename(std::size_t t_index, std::size_t y_index);
    std::string booster_path(std::size_t t_index, std::size_t y_index) const;
    std::string manifest_path() const;

    void ensure_dir() const;
    bool has_manifest() const;
    bool has_booster(std::size_t t_index, std::size_t y_index) const;

    Manifest read_manifest() const;
    void write_manifest(const Manifest& manifest) const;

    // Booster files the manifest references but the directory lacks.
    std::vector<std::string> missing_files(const Manifest& manifest) const;

    Booster load(std::size_t t_index, std::size_t y_index) const;

  private:
    std::string dir_;
};

}  // namespace forestgen
