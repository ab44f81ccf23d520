#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "forestgen/dataset.hpp"
#include "forestgen/errors.hpp"
#include "forestgen/gbdt.hpp"

namespace forestgen {

enum class Method { Flow, Diffusion };
enum class LabelMode { Multinomial, Empirical };

// Variance-preserving noise schedule with beta linear in t:
// alpha_t = exp(-t^2 (beta_max - beta_min) / 4 - t beta_min / 2), so that
// alpha_0 = 1, sigma_0 = 0 and alpha_t^2 + sigma_t^2 = 1.
struct VpSchedule {
    double beta_min = 0.1;
    double beta_max = 8.0;

    double alpha(double t) const {
        return std::exp(-0.25 * t * t * (beta_max - beta_min) - 0.5 * t * beta_min);
    }
    double sigma(double t) const {
        const double a = alpha(t);
        return std::sqrt(std::max(0.0, 1.0 - a * a));
    }
    double beta(double t) const { return beta_min + t * (beta_max - beta_min); }
};

struct HyperParams {
    Method method = Method::Flow;
    TreeMode tree_mode = TreeMode::SingleOutput;
    std::size_t n_t = 50;
    std::size_t duplication = 100;  // K noisy copies per training row
    double min_time = 0.0;          // flow: 0, diffusion default: 0.001
    GbdtParams gbdt;
    ScalerMode scaler_mode = ScalerMode::PerClass;
    LabelMode label_mode = LabelMode::Empirical;
    std::uint64_t seed = 0;
    std::size_t n_jobs = 0;     // 0 = one worker per available CPU
    bool naive_mode = false;    // reference pipeline: materializes all timesteps
    bool mmap_buffers = false;  // file-backed shared buffers
    VpSchedule schedule;

    void validate() const {
        if (n_t < 2) throw errors::bad_param("n_t must be >= 2");
        if (duplication < 1) throw errors::bad_param("K must be >= 1");
        if (min_time < 0.0 || min_time >= 1.0) throw errors::bad_param("eps must be in [0, 1)");
        gbdt.validate();
    }
};

// Training grid: n_t points, flow on [0, 1], diffusion on [eps, 1].
inline std::vector<double> time_grid(Method method, std::size_t n_t, double min_time) {
    const double lo = (method == Method::Diffusion) ? min_time : 0.0;
    std::vector<double> grid(n_t);
    for (std::size_t i = 0; i < n_t; ++i) {
        grid[i] = lo + (1.0 - lo) * static_cast<double>(i) / static_cast<double>(n_t - 1);
    }
    grid.back() = 1.0;
    return grid;
}

inline std::string method_name(Method m) { return m == Method::Flow ? "flow" : "diffusion"; }
inline std::string tree_mode_name(TreeMode m) {
    return m == TreeMode::SingleOutput ? "so" : "mo";
}
inline std::string scaler_mode_name(ScalerMode m) {
    return m == ScalerMode::Global ? "global" : "per_class";
}
inline std::string label_mode_name(LabelMode m) {
    return m == LabelMode::Multinomial ? "multinomial" : "empirical";
}

Method method_from_name(const std::string& s);
TreeMode tree_mode_from_name(const std::string& s);
ScalerMode scaler_mode_from_name(const std::string& s);
LabelMode label_mode_from_name(const std::string& s);

}  // namespace forestgen
