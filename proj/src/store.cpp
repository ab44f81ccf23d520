#include "forestgen/store.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "forestgen/errors.hpp"

namespace forestgen {

namespace fs = std::filesystem;
using nlohmann::json;

Method method_from_name(const std::string& s) {
    if (s == "flow") return Method::Flow;
    if (s == "diffusion") return Method::Diffusion;
    throw errors::bad_param("unknown method '" + s + "'");
}
TreeMode tree_mode_from_name(const std::string& s) {
    if (s == "so") return TreeMode::SingleOutput;
    if (s == "mo") return TreeMode::MultiOutput;
    throw errors::bad_param("unknown tree mode '" + s + "'");
}
ScalerMode scaler_mode_from_name(const std::string& s) {
    if (s == "global") return ScalerMode::Global;
    if (s == "per_class" || s == "per-class") return ScalerMode::PerClass;
    throw errors::bad_param("unknown scaler mode '" + s + "'");
}
LabelMode label_mode_from_name(const std::string& s) {
    if (s == "multinomial") return LabelMode::Multinomial;
    if (s == "empirical") return LabelMode::Empirical;
    throw errors::bad_param("unknown label mode '" + s + "'");
}

PerClassScaler Manifest::scaler() const {
    return PerClassScaler::from_params(scaler_mode, scaler_min, scaler_max);
}

std::string Manifest::to_json_text() const {
    json j;
    j["format_version"] = format_version;
    j["hyperparams"] = {{"method", method_name(hp.method)},
                        {"tree_mode", tree_mode_name(hp.tree_mode)},
                        {"n_t", hp.n_t},
                        {"k", hp.duplication},
                        {"eps", hp.min_time},
                        {"n_tree", hp.gbdt.n_tree},
                        {"max_depth", hp.gbdt.max_depth},
                        {"learning_rate", hp.gbdt.learning_rate},
                        {"l2_reg", hp.gbdt.l2_reg},
                        {"min_split_gain", hp.gbdt.min_split_gain},
                        {"max_bins", hp.gbdt.max_bins},
                        {"n_es", hp.gbdt.early_stop_rounds},
                        {"scaler_mode", scaler_mode_name(hp.scaler_mode)},
                        {"label_mode", label_mode_name(hp.label_mode)},
                        {"seed", hp.seed},
                        {"n_jobs", hp.n_jobs},
                        {"naive_mode", hp.naive_mode},
                        {"mmap_buffers", hp.mmap_buffers},
                        {"beta_min", hp.schedule.beta_min},
                        {"beta_max", hp.schedule.beta_max}};
    j["n"] = n;
    j["p"] = p;
    j["n_y"] = n_y;
    j["feature_names"] = feature_names;
    j["label_name"] = label_name;
    j["class_names"] = class_names;
    j["class_counts"] = class_counts;
    j["time_grid"] = grid;
    j["scaler"] = {{"mode", scaler_mode_name(scaler_mode)}, {"min", scaler_min},
                   {"max", scaler_max}};
    json jobs_json = json::array();
    for (const auto& job : jobs) {
        jobs_json.push_back({{"t_index", job.t_index},
                             {"y_index", job.y_index},
                             {"file", job.file},
                             {"best_iterations", job.best_iterations},
                             {"seconds", job.seconds}});
    }
    j["jobs"] = std::move(jobs_json);
    return j.dump(2);
}

Manifest Manifest::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw errors::corrupt_file(std::string("manifest: ") + e.what());
    }

    Manifest m;
    try {
        m.format_version = j.at("format_version").get<int>();
        const auto& h = j.at("hyperparams");
        m.hp.method = method_from_name(h.at("method").get<std::string>());
        m.hp.tree_mode = tree_mode_from_name(h.at("tree_mode").get<std::string>());
        m.hp.n_t = h.at("n_t").get<std::size_t>();
        m.hp.duplication = h.at("k").get<std::size_t>();
        m.hp.min_time = h.at("eps").get<double>();
        m.hp.gbdt.n_tree = h.at("n_tree").get<std::uint32_t>();
        m.hp.gbdt.max_depth = h.at("max_depth").get<std::uint32_t>();
        m.hp.gbdt.learning_rate = h.at("learning_rate").get<float>();
        m.hp.gbdt.l2_reg = h.at("l2_reg").get<float>();
        m.hp.gbdt.min_split_gain = h.at("min_split_gain").get<float>();
        m.hp.gbdt.max_bins = h.at("max_bins").get<std::uint32_t>();
        m.hp.gbdt.early_stop_rounds = h.at("n_es").get<std::uint32_t>();
        m.hp.scaler_mode = scaler_mode_from_name(h.at("scaler_mode").get<std::string>());
        m.hp.label_mode = label_mode_from_name(h.at("label_mode").get<std::string>());
        m.hp.seed = h.at("seed").get<std::uint64_t>();
        m.hp.n_jobs = h.at("n_jobs").get<std::size_t>();
        m.hp.naive_mode = h.at("naive_mode").get<bool>();
        m.hp.mmap_buffers = h.at("mmap_buffers").get<bool>();
        m.hp.schedule.beta_min = h.at("beta_min").get<double>();
        m.hp.schedule.beta_max = h.at("beta_max").get<double>();
        m.n = j.at("n").get<std::size_t>();
        m.p = j.at("p").get<std::size_t>();
        m.n_y = j.at("n_y").get<std::size_t>();
        m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
        m.label_name = j.at("label_name").get<std::string>();
        m.class_names = j.at("class_names").get<std::vector<std::string>>();
        m.class_counts = j.at("class_counts").get<std::vector<std::size_t>>();
        m.grid = j.at("time_grid").get<std::vector<double>>();
        const auto& s = j.at("scaler");
        m.scaler_mode = scaler_mode_from_name(s.at("mode").get<std::string>());
        m.scaler_min = s.at("min").get<std::vector<std::vector<float>>>();
        m.scaler_max = s.at("max").get<std::vector<std::vector<float>>>();
        for (const auto& job_json : j.at("jobs")) {
            JobRecord job;
            job.t_index = job_json.at("t_index").get<std::size_t>();
            job.y_index = job_json.at("y_index").get<std::size_t>();
            job.file = job_json.at("file").get<std::string>();
            job.best_iterations = job_json.at("best_iterations").get<std::vector<std::uint32_t>>();
            job.seconds = job_json.at("seconds").get<double>();
            m.jobs.push_back(std::move(job));
        }
    } catch (const json::exception& e) {
        throw errors::corrupt_file(std::string("manifest: ") + e.what());
    }
    return m;
}

// ============================================================================
// ModelStore
// ============================================================================

ModelStore::ModelStore(std::string dir) : dir_(std::move(dir)) {}

std::string ModelStore::booster_filename(std::size_t t_index, std::size_t y_index) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "model_t%04zu_y%04zu.fgb", t_index, y_index);
    return buf;
}

std::string ModelStore::booster_path(std::size_t t_index, std::size_t y_index) const {
    return (fs::path(dir_) / booster_filename(t_index, y_index)).string();
}

std::string ModelStore::manifest_path() const {
    return (fs::path(dir_) / "manifest.json").string();
}

void ModelStore::ensure_dir() const {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) throw errors::io_error("cannot create " + dir_ + ": " + ec.message());
}

bool ModelStore::has_manifest() const { return fs::exists(manifest_path()); }

bool ModelStore::has_booster(std::size_t t_index, std::size_t y_index) const {
    return fs::exists(booster_path(t_index, y_index));
}

Manifest ModelStore::read_manifest() const {
    std::ifstream in(manifest_path());
    if (!in) throw errors::store_incomplete("missing manifest at " + manifest_path());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return Manifest::from_json_text(text);
}

void ModelStore::write_manifest(const Manifest& manifest) const {
    ensure_dir();
    std::ofstream out(manifest_path(), std::ios::trunc);
    if (!out) throw errors::io_error("cannot write " + manifest_path());
    out << manifest.to_json_text() << '\n';
    if (!out) throw errors::io_error("write failed for " + manifest_path());
}

std::vector<std::string> ModelStore::missing_files(const Manifest& manifest) const {
    std::vector<std::string> missing;
    for (const auto& job : manifest.jobs) {
        if (!fs::exists(fs::path(dir_) / job.file)) missing.push_back(job.file);
    }
    return missing;
}

Booster ModelStore::load(std::size_t t_index, std::size_t y_index) const {
    return load_booster(booster_path(t_index, y_index));
}

}  // namespace forestgen
