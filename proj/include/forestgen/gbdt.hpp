#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "forestgen/matrix.hpp"

namespace forestgen {

enum class TreeMode { SingleOutput, MultiOutput };

struct GbdtParams {
    std::uint32_t n_tree = 100;
    std::uint32_t max_depth = 7;
    float learning_rate = 0.3f;
    float l2_reg = 0.0f;          // lambda
    float min_split_gain = 0.0f;  // gamma
    std::uint32_t max_bins = 256;
    std::uint32_t early_stop_rounds = 0;  // 0 disables early stopping

    void validate() const;
};

// Per-feature bin-edge thresholds at empirical quantiles. Features with at
// most max_bins distinct values get one bin per distinct value, with
// thresholds at the midpoints between consecutive distinct values.
class BinMapper {
  public:
    static BinMapper fit(MatrixView x, std::uint32_t max_bins);

    std::size_t n_features() const { return thresholds_.size(); }
    std::uint32_t n_bins(std::size_t feature) const {
        return static_cast<std::uint32_t>(thresholds_[feature].size()) + 1;
    }
    std::uint32_t max_n_bins() const;
    const std::vector<float>& thresholds(std::size_t feature) const {
        return thresholds_[feature];
    }
    float threshold(std::size_t feature, std::uint32_t bin) const {
        return thresholds_[feature][bin];
    }

    // Index of the bin holding x: the count of thresholds strictly below x.
    std::uint32_t bin_of(std::size_t feature, float x) const;

  private:
    std::vector<std::vector<float>> thresholds_;
};

// Column-major bin indices, u8 when every feature fits in 256 bins, u16
// otherwise. Built once per training job and shared by all targets.
class BinnedMatrix {
  public:
    BinnedMatrix() = default;
    BinnedMatrix(std::shared_ptr<const BinMapper> mapper, MatrixView x);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    bool wide() const { return wide_; }
    const BinMapper& mapper() const { return *mapper_; }
    std::shared_ptr<const BinMapper> mapper_ptr() const { return mapper_; }

    std::uint32_t bin(std::size_t row, std::size_t col) const {
        const std::size_t i = col * rows_ + row;
        return wide_ ? bins16_[i] : bins8_[i];
    }
    const std::uint8_t* col8(std::size_t col) const { return bins8_.data() + col * rows_; }
    const std::uint16_t* col16(std::size_t col) const { return bins16_.data() + col * rows_; }

  private:
    std::shared_ptr<const BinMapper> mapper_;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    bool wide_ = false;
    alloc::tracked_vector<std::uint8_t> bins8_;
    alloc::tracked_vector<std::uint16_t> bins16_;
};

std::pair<std::shared_ptr<const BinMapper>, BinnedMatrix> build_bins(MatrixView x,
                                                                     std::uint32_t max_bins);

struct TreeNode {
    std::uint8_t is_leaf = 1;
    std::uint32_t feature = 0;
    std::uint32_t split_bin = 0;  // training-time routing only; not serialized
    float split_value = 0.0f;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint32_t leaf_offset = 0;
};

// Regression tree with scalar (m_leaf = 1) or vector leaves. Node count is
// bounded by 2^(depth+1) - 1.
class Tree {
  public:
    Tree() = default;
    explicit Tree(std::uint32_t m_leaf) : m_leaf_(m_leaf) {}

    std::uint32_t m_leaf() const { return m_leaf_; }
    std::size_t n_nodes() const { return nodes_.size(); }
    const std::vector<TreeNode>& nodes() const { return nodes_; }
    const FloatVec& leaf_values() const { return leaf_values_; }

    std::uint32_t add_leaf(const float* values);
    std::uint32_t add_internal(std::uint32_t feature, std::uint32_t split_bin, float split_value);
    void set_children(std::uint32_t node, std::uint32_t left, std::uint32_t right);
    void set_child(std::uint32_t parent, bool is_right, std::uint32_t child);

    // Raw-value routing: x <= split goes left.
    const float* leaf_for(const float* x) const {
        std::uint32_t i = 0;
        while (!nodes_[i].is_leaf) {
            i = (x[nodes_[i].feature] <= nodes_[i].split_value) ? nodes_[i].left
                                                                : nodes_[i].right;
        }
        return leaf_values_.data() + nodes_[i].leaf_offset;
    }

    // Bin-index routing, used for validation rows during training.
    const float* leaf_for_binned(const BinnedMatrix& binned, std::size_t row) const {
        std::uint32_t i = 0;
        while (!nodes_[i].is_leaf) {
            i = (binned.bin(row, nodes_[i].feature) <= nodes_[i].split_bin) ? nodes_[i].left
                                                                            : nodes_[i].right;
        }
        return leaf_values_.data() + nodes_[i].leaf_offset;
    }

  private:
    std::uint32_t m_leaf_ = 1;
    std::vector<TreeNode> nodes_;
    FloatVec leaf_values_;
};

// Trained model for one (timestep, class) job: either m scalar-leaf tree
// sequences sharing the binned matrix, or one vector-leaf sequence.
class Booster {
  public:
    Booster() = default;
    static Booster from_parts(TreeMode mode, std::uint32_t n_outputs, std::uint32_t n_features,
                              float eta, std::vector<float> bases,
                              std::vector<std::vector<Tree>> sequences);

    TreeMode mode() const { return mode_; }
    std::uint32_t n_outputs() const { return n_outputs_; }
    std::uint32_t n_features() const { return n_features_; }
    float learning_rate() const { return eta_; }
    const std::vector<float>& bases() const { return bases_; }
    const std::vector<std::vector<Tree>>& sequences() const { return sequences_; }
    const std::vector<std::uint32_t>& best_iterations() const { return best_iterations_; }

    // Prediction over raw feature rows; output shape [rows, n_outputs].
    Matrix predict(MatrixView x) const;
    void predict_into(MatrixView x, float* out) const;

    std::vector<std::uint8_t> serialize() const;
    static Booster deserialize(const std::uint8_t* data, std::size_t size);

  private:
    friend Booster train_booster(const BinnedMatrix&, MatrixView, TreeMode, const GbdtParams&,
                                 const struct ValidationSet*);

    TreeMode mode_ = TreeMode::SingleOutput;
    std::uint32_t n_outputs_ = 0;
    std::uint32_t n_features_ = 0;
    float eta_ = 0.3f;
    std::vector<float> bases_;
    std::vector<std::vector<Tree>> sequences_;
    std::vector<std::uint32_t> best_iterations_;
};

struct ValidationSet {
    const BinnedMatrix* binned = nullptr;
    MatrixView targets;
};

// Squared-error boosting over the shared binned matrix. targets is [rows, m];
// SingleOutput trains one scalar sequence per column, MultiOutput one
// vector-leaf sequence minimizing the summed per-output loss. With a
// validation set and early_stop_rounds > 0, each sequence is truncated at its
// best validation RMSE.
Booster train_booster(const BinnedMatrix& binned, MatrixView targets, TreeMode mode,
                      const GbdtParams& params, const ValidationSet* valid = nullptr);

std::size_t save_booster(const Booster& b, const std::string& path);
Booster load_booster(const std::string& path);

}  // namespace forestgen
