#include "forestgen/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>

#include "forestgen/errors.hpp"

namespace forestgen {

namespace {
// Splits whose gain does not clear this are rejected, so zero-gain splits
// never grow the tree even with min_split_gain = 0.
constexpr double kMinGain = 1e-12;
}  // namespace

void GbdtParams::validate() const {
    if (n_tree < 1) throw errors::bad_param("n_tree must be >= 1");
    if (learning_rate <= 0.0f) throw errors::bad_param("learning_rate must be > 0");
    if (l2_reg < 0.0f) throw errors::bad_param("l2_reg must be >= 0");
    if (max_bins < 2 || max_bins > 65536) throw errors::bad_param("max_bins must be in [2, 65536]");
}

// ============================================================================
// Binning
// ============================================================================

namespace {

// Bin edge between adjacent observed values a < b, guaranteed a <= t < b so
// raw-value routing (x <= t) matches bin-index routing.
float edge_between(float a, float b) {
    float m = static_cast<float>((static_cast<double>(a) + static_cast<double>(b)) * 0.5);
    if (m >= b) m = std::nextafter(b, a);
    if (m < a) m = a;
    return m;
}

}  // namespace

BinMapper BinMapper::fit(MatrixView x, std::uint32_t max_bins) {
    BinMapper mapper;
    mapper.thresholds_.resize(x.cols);

    std::vector<float> column(x.rows);
    for (std::size_t j = 0; j < x.cols; ++j) {
        for (std::size_t r = 0; r < x.rows; ++r) column[r] = x.at(r, j);
        std::sort(column.begin(), column.end());

        std::vector<float> distinct;
        for (std::size_t r = 0; r < x.rows; ++r) {
            if (distinct.empty() || column[r] != distinct.back()) distinct.push_back(column[r]);
        }

        auto& thr = mapper.thresholds_[j];
        if (distinct.size() <= max_bins) {
            thr.reserve(distinct.size() > 0 ? distinct.size() - 1 : 0);
            for (std::size_t i = 0; i + 1 < distinct.size(); ++i) {
                thr.push_back(edge_between(distinct[i], distinct[i + 1]));
            }
        } else {
            // Quantile cuts: one candidate per k/max_bins rank, deduplicated.
            thr.reserve(max_bins - 1);
            float prev_cut = std::numeric_limits<float>::quiet_NaN();
            for (std::uint32_t k = 1; k < max_bins; ++k) {
                const std::size_t pos =
                    static_cast<std::size_t>(static_cast<unsigned long long>(k) * x.rows / max_bins);
                const float v = column[pos];
                if (!std::isnan(prev_cut) && v <= prev_cut) continue;
                // Predecessor distinct value of v.
                const auto it = std::lower_bound(distinct.begin(), distinct.end(), v);
                if (it == distinct.begin()) continue;  // v is the minimum; no edge below it
                const float pred = *(it - 1);
                const float t = edge_between(pred, v);
                if (thr.empty() || t > thr.back()) thr.push_back(t);
                prev_cut = v;
            }
        }
    }
    return mapper;
}

std::uint32_t BinMapper::max_n_bins() const {
    std::uint32_t m = 1;
    for (std::size_t j = 0; j < thresholds_.size(); ++j) m = std::max(m, n_bins(j));
    return m;
}

std::uint32_t BinMapper::bin_of(std::size_t feature, float x) const {
    const auto& thr = thresholds_[feature];
    return static_cast<std::uint32_t>(std::lower_bound(thr.begin(), thr.end(), x) - thr.begin());
}

BinnedMatrix::BinnedMatrix(std::shared_ptr<const BinMapper> mapper, MatrixView x)
    : mapper_(std::move(mapper)), rows_(x.rows), cols_(x.cols) {
    if (mapper_->n_features() != x.cols) {
        throw errors::shape_mismatch("bin mapper feature count != matrix columns");
    }
    wide_ = mapper_->max_n_bins() > 256;
    if (wide_) {
        bins16_.resize(rows_ * cols_);
        for (std::size_t j = 0; j < cols_; ++j) {
            std::uint16_t* col = bins16_.data() + j * rows_;
            for (std::size_t r = 0; r < rows_; ++r) {
                col[r] = static_cast<std::uint16_t>(mapper_->bin_of(j, x.at(r, j)));
            }
        }
    } else {
        bins8_.resize(rows_ * cols_);
        for (std::size_t j = 0; j < cols_; ++j) {
            std::uint8_t* col = bins8_.data() + j * rows_;
            for (std::size_t r = 0; r < rows_; ++r) {
                col[r] = static_cast<std::uint8_t>(mapper_->bin_of(j, x.at(r, j)));
            }
        }
    }
}

std::pair<std::shared_ptr<const BinMapper>, BinnedMatrix> build_bins(MatrixView x,
                                                                     std::uint32_t max_bins) {
    if (max_bins < 2 || max_bins > 65536) throw errors::bad_param("max_bins must be in [2, 65536]");
    auto mapper = std::make_shared<const BinMapper>(BinMapper::fit(x, max_bins));
    BinnedMatrix binned(mapper, x);
    return {std::move(mapper), std::move(binned)};
}

// ============================================================================
// Tree construction
// ============================================================================

std::uint32_t Tree::add_leaf(const float* values) {
    TreeNode node;
    node.is_leaf = 1;
    node.leaf_offset = static_cast<std::uint32_t>(leaf_values_.size());
    leaf_values_.insert(leaf_values_.end(), values, values + m_leaf_);
    nodes_.push_back(node);
    return static_cast<std::uint32_t>(nodes_.size() - 1);
}

std::uint32_t Tree::add_internal(std::uint32_t feature, std::uint32_t split_bin,
                                 float split_value) {
    TreeNode node;
    node.is_leaf = 0;
    node.feature = feature;
    node.split_bin = split_bin;
    node.split_value = split_value;
    nodes_.push_back(node);
    return static_cast<std::uint32_t>(nodes_.size() - 1);
}

void Tree::set_children(std::uint32_t node, std::uint32_t left, std::uint32_t right) {
    nodes_[node].left = left;
    nodes_[node].right = right;
}

void Tree::set_child(std::uint32_t parent, bool is_right, std::uint32_t child) {
    if (is_right) {
        nodes_[parent].right = child;
    } else {
        nodes_[parent].left = child;
    }
}

namespace {

struct SplitResult {
    double gain = -std::numeric_limits<double>::infinity();
    std::uint32_t feature = 0;
    std::uint32_t bin = 0;
    double left_h = 0.0;
    std::vector<double> left_g;
    bool valid = false;
};

// Scratch buffers reused across every node and round of one sequence.
struct Workspace {
    std::vector<std::uint32_t> order;
    std::vector<std::uint32_t> scratch;
    std::vector<double> hist_g;  // [bins * m]
    std::vector<double> hist_h;  // [bins]
    std::vector<double> left_g;  // [m]
};

struct NodeWork {
    std::uint32_t parent = 0;
    bool has_parent = false;
    bool is_right = false;
    std::size_t begin = 0;
    std::size_t end = 0;
    double h = 0.0;
    std::vector<double> g;
};

template <class BinT>
void accumulate_hist(const BinT* col, const std::uint32_t* order, std::size_t begin,
                     std::size_t end, const float* grad, std::size_t m, double* hist_g,
                     double* hist_h) {
    if (m == 1) {
        for (std::size_t i = begin; i < end; ++i) {
            const std::uint32_t r = order[i];
            const std::uint32_t b = col[r];
            hist_h[b] += 1.0;
            hist_g[b] += grad[r];
        }
    } else {
        for (std::size_t i = begin; i < end; ++i) {
            const std::uint32_t r = order[i];
            const std::uint32_t b = col[r];
            hist_h[b] += 1.0;
            const float* g = grad + static_cast<std::size_t>(r) * m;
            double* hg = hist_g + static_cast<std::size_t>(b) * m;
            for (std::size_t t = 0; t < m; ++t) hg[t] += g[t];
        }
    }
}

// Greedy best split over all (feature, bin) pairs for one node. Gain is the
// squared-error reduction 0.5 * [GL^2/(HL+l) + GR^2/(HR+l) - G^2/(H+l)],
// summed over outputs, minus min_split_gain. Ties resolve to the lowest
// feature index, then the lowest bin index.
SplitResult find_best_split(const BinnedMatrix& binned, const NodeWork& node,
                            const float* grad, std::size_t m, const GbdtParams& params,
                            Workspace& ws) {
    SplitResult best;
    best.left_g.assign(m, 0.0);

    const double lambda = params.l2_reg;
    double parent_score = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
        parent_score += node.g[t] * node.g[t] / (node.h + lambda);
    }

    for (std::size_t j = 0; j < binned.cols(); ++j) {
        const std::uint32_t nb = binned.mapper().n_bins(j);
        if (nb < 2) continue;

        std::fill(ws.hist_h.begin(), ws.hist_h.begin() + nb, 0.0);
        std::fill(ws.hist_g.begin(), ws.hist_g.begin() + nb * m, 0.0);
        if (binned.wide()) {
            accumulate_hist(binned.col16(j), ws.order.data(), node.begin, node.end, grad, m,
                            ws.hist_g.data(), ws.hist_h.data());
        } else {
            accumulate_hist(binned.col8(j), ws.order.data(), node.begin, node.end, grad, m,
                            ws.hist_g.data(), ws.hist_h.data());
        }

        double hl = 0.0;
        std::fill(ws.left_g.begin(), ws.left_g.end(), 0.0);
        for (std::uint32_t b = 0; b + 1 < nb; ++b) {
            hl += ws.hist_h[b];
            for (std::size_t t = 0; t < m; ++t) ws.left_g[t] += ws.hist_g[b * m + t];
            const double hr = node.h - hl;
            if (hl < 1.0 || hr < 1.0) continue;

            double score = 0.0;
            for (std::size_t t = 0; t < m; ++t) {
                const double gl = ws.left_g[t];
                const double gr = node.g[t] - gl;
                score += gl * gl / (hl + lambda) + gr * gr / (hr + lambda);
            }
            const double gain = 0.5 * (score - parent_score) - params.min_split_gain;
            if (gain > best.gain) {
                best.gain = gain;
                best.feature = static_cast<std::uint32_t>(j);
                best.bin = b;
                best.left_h = hl;
                std::copy(ws.left_g.begin(), ws.left_g.end(), best.left_g.begin());
                best.valid = true;
            }
        }
    }
    return best;
}

// Grows one depth-wise tree and applies the eta-scaled leaf values to the
// training predictions of the rows each leaf covers.
Tree grow_tree(const BinnedMatrix& binned, const float* grad, std::size_t m,
               const GbdtParams& params, Workspace& ws, float* pred, float eta) {
    const std::size_t n = binned.rows();
    const double lambda = params.l2_reg;

    Tree tree(static_cast<std::uint32_t>(m));

    std::vector<float> leaf(m);
    std::vector<NodeWork> frontier;
    {
        NodeWork root;
        root.begin = 0;
        root.end = n;
        root.h = static_cast<double>(n);
        root.g.assign(m, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            const float* g = grad + r * m;
            for (std::size_t t = 0; t < m; ++t) root.g[t] += g[t];
        }
        frontier.push_back(std::move(root));
    }

    auto attach = [&](const NodeWork& node, std::uint32_t id) {
        if (node.has_parent) tree.set_child(node.parent, node.is_right, id);
    };

    auto make_leaf = [&](const NodeWork& node) {
        for (std::size_t t = 0; t < m; ++t) {
            leaf[t] = static_cast<float>(-node.g[t] / (node.h + lambda));
        }
        attach(node, tree.add_leaf(leaf.data()));
        for (std::size_t i = node.begin; i < node.end; ++i) {
            float* row_pred = pred + static_cast<std::size_t>(ws.order[i]) * m;
            for (std::size_t t = 0; t < m; ++t) row_pred[t] += eta * leaf[t];
        }
    };

    for (std::uint32_t depth = 0; !frontier.empty(); ++depth) {
        std::vector<NodeWork> next;
        for (auto& node : frontier) {
            SplitResult split;
            const bool can_split = depth < params.max_depth && (node.end - node.begin) >= 2;
            if (can_split) split = find_best_split(binned, node, grad, m, params, ws);

            if (!can_split || !split.valid || split.gain <= kMinGain) {
                make_leaf(node);
                continue;
            }

            const std::uint32_t id = tree.add_internal(
                split.feature, split.bin, binned.mapper().threshold(split.feature, split.bin));
            attach(node, id);

            // Stable partition of the node's rows by bin <= split.bin.
            std::uint32_t* scratch = ws.scratch.data();
            std::size_t nl = 0, nr = 0;
            auto partition = [&](const auto* col) {
                for (std::size_t i = node.begin; i < node.end; ++i) {
                    const std::uint32_t r = ws.order[i];
                    if (col[r] <= split.bin) {
                        ws.order[node.begin + nl++] = r;
                    } else {
                        scratch[nr++] = r;
                    }
                }
            };
            if (binned.wide()) {
                partition(binned.col16(split.feature));
            } else {
                partition(binned.col8(split.feature));
            }
            std::copy(scratch, scratch + nr, ws.order.begin() + node.begin + nl);

            NodeWork left;
            left.parent = id;
            left.has_parent = true;
            left.begin = node.begin;
            left.end = node.begin + nl;
            left.h = split.left_h;
            left.g = split.left_g;

            NodeWork right;
            right.parent = id;
            right.has_parent = true;
            right.is_right = true;
            right.begin = left.end;
            right.end = node.end;
            right.h = node.h - split.left_h;
            right.g.resize(m);
            for (std::size_t t = 0; t < m; ++t) right.g[t] = node.g[t] - split.left_g[t];

            next.push_back(std::move(left));
            next.push_back(std::move(right));
        }
        frontier = std::move(next);
    }
    return tree;
}

}  // namespace

// ============================================================================
// Boosting
// ============================================================================

namespace {

double valid_rmse(const float* pred, const float* target, std::size_t rows, std::size_t m) {
    // Mean over outputs of the per-output RMSE.
    double total = 0.0;
    for (std::size_t t = 0; t < m; ++t) {
        double sq = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            const double d = static_cast<double>(pred[r * m + t]) - target[r * m + t];
            sq += d * d;
        }
        total += std::sqrt(sq / static_cast<double>(rows));
    }
    return total / static_cast<double>(m);
}

struct SequenceOutput {
    std::vector<Tree> trees;
    std::vector<float> bases;
    std::uint32_t best_iteration = 0;
};

// Boosts one sequence over m outputs (m = 1 per SO target, m = p for MO).
SequenceOutput boost_sequence(const BinnedMatrix& binned, const float* targets, std::size_t m,
                              const GbdtParams& params, const BinnedMatrix* valid_binned,
                              const float* valid_targets) {
    const std::size_t n = binned.rows();
    const float eta = params.learning_rate;
    const bool early_stop = valid_binned != nullptr && params.early_stop_rounds > 0;

    SequenceOutput out;
    out.bases.resize(m);
    for (std::size_t t = 0; t < m; ++t) {
        double sum = 0.0;
        for (std::size_t r = 0; r < n; ++r) sum += targets[r * m + t];
        out.bases[t] = static_cast<float>(sum / static_cast<double>(n));
    }

    FloatVec pred(n * m);
    for (std::size_t r = 0; r < n; ++r) {
        for (std::size_t t = 0; t < m; ++t) pred[r * m + t] = out.bases[t];
    }
    FloatVec grad(n * m);

    const std::size_t vn = early_stop ? valid_binned->rows() : 0;
    FloatVec valid_pred;
    double best_metric = std::numeric_limits<double>::infinity();
    std::uint32_t stale = 0;
    if (early_stop) {
        valid_pred.resize(vn * m);
        for (std::size_t r = 0; r < vn; ++r) {
            for (std::size_t t = 0; t < m; ++t) valid_pred[r * m + t] = out.bases[t];
        }
        best_metric = valid_rmse(valid_pred.data(), valid_targets, vn, m);
    }

    Workspace ws;
    ws.order.resize(n);
    ws.scratch.resize(n);
    const std::uint32_t bins = binned.mapper().max_n_bins();
    ws.hist_g.resize(static_cast<std::size_t>(bins) * m);
    ws.hist_h.resize(bins);
    ws.left_g.resize(m);

    for (std::uint32_t round = 0; round < params.n_tree; ++round) {
        for (std::size_t i = 0; i < n * m; ++i) grad[i] = pred[i] - targets[i];
        std::iota(ws.order.begin(), ws.order.end(), 0u);

        out.trees.push_back(grow_tree(binned, grad.data(), m, params, ws, pred.data(), eta));

        if (early_stop) {
            const Tree& tree = out.trees.back();
            for (std::size_t r = 0; r < vn; ++r) {
                const float* leaf = tree.leaf_for_binned(*valid_binned, r);
                float* vp = valid_pred.data() + r * m;
                for (std::size_t t = 0; t < m; ++t) vp[t] += eta * leaf[t];
            }
            const double metric = valid_rmse(valid_pred.data(), valid_targets, vn, m);
            if (metric < best_metric) {
                best_metric = metric;
                out.best_iteration = round + 1;
                stale = 0;
            } else if (++stale >= params.early_stop_rounds) {
                break;
            }
        } else {
            out.best_iteration = round + 1;
        }
    }

    if (early_stop) out.trees.resize(out.best_iteration);
    return out;
}

}  // namespace

Booster train_booster(const BinnedMatrix& binned, MatrixView targets, TreeMode mode,
                      const GbdtParams& params, const ValidationSet* valid) {
    params.validate();
    if (targets.cols == 0) throw errors::empty_targets();
    if (targets.rows != binned.rows()) {
        throw errors::shape_mismatch("target rows != binned rows");
    }
    if (valid) {
        if (valid->binned->cols() != binned.cols() || valid->targets.cols != targets.cols ||
            valid->targets.rows != valid->binned->rows()) {
            throw errors::shape_mismatch("validation set shape mismatch");
        }
    }

    const std::size_t m = targets.cols;
    Booster b;
    b.mode_ = mode;
    b.n_outputs_ = static_cast<std::uint32_t>(m);
    b.n_features_ = static_cast<std::uint32_t>(binned.cols());
    b.eta_ = params.learning_rate;
    b.bases_.resize(m);

    if (mode == TreeMode::MultiOutput) {
        auto seq = boost_sequence(binned, targets.data, m, params,
                                  valid ? valid->binned : nullptr,
                                  valid ? valid->targets.data : nullptr);
        b.bases_ = seq.bases;
        b.best_iterations_.push_back(seq.best_iteration);
        b.sequences_.push_back(std::move(seq.trees));
    } else {
        // One scalar sequence per target column over the shared binned matrix.
        FloatVec column(targets.rows);
        FloatVec valid_column;
        if (valid) valid_column.resize(valid->targets.rows);
        for (std::size_t j = 0; j < m; ++j) {
            for (std::size_t r = 0; r < targets.rows; ++r) column[r] = targets.at(r, j);
            if (valid) {
                for (std::size_t r = 0; r < valid->targets.rows; ++r) {
                    valid_column[r] = valid->targets.at(r, j);
                }
            }
            auto seq = boost_sequence(binned, column.data(), 1, params,
                                      valid ? valid->binned : nullptr,
                                      valid ? valid_column.data() : nullptr);
            b.bases_[j] = seq.bases[0];
            b.best_iterations_.push_back(seq.best_iteration);
            b.sequences_.push_back(std::move(seq.trees));
        }
    }
    return b;
}

// ============================================================================
// Prediction
// ============================================================================

Booster Booster::from_parts(TreeMode mode, std::uint32_t n_outputs, std::uint32_t n_features,
                            float eta, std::vector<float> bases,
                            std::vector<std::vector<Tree>> sequences) {
    Booster b;
    b.mode_ = mode;
    b.n_outputs_ = n_outputs;
    b.n_features_ = n_features;
    b.eta_ = eta;
    b.bases_ = std::move(bases);
    b.sequences_ = std::move(sequences);
    for (const auto& seq : b.sequences_) {
        b.best_iterations_.push_back(static_cast<std::uint32_t>(seq.size()));
    }
    return b;
}

void Booster::predict_into(MatrixView x, float* out) const {
    if (x.cols != n_features_) throw errors::shape_mismatch("predict input column count");
    const std::size_t m = n_outputs_;

    for (std::size_t r = 0; r < x.rows; ++r) {
        for (std::size_t t = 0; t < m; ++t) out[r * m + t] = bases_[t];
    }
    if (mode_ == TreeMode::MultiOutput) {
        for (const Tree& tree : sequences_[0]) {
            for (std::size_t r = 0; r < x.rows; ++r) {
                const float* leaf = tree.leaf_for(x.row(r));
                float* o = out + r * m;
                for (std::size_t t = 0; t < m; ++t) o[t] += eta_ * leaf[t];
            }
        }
    } else {
        for (std::size_t j = 0; j < sequences_.size(); ++j) {
            for (const Tree& tree : sequences_[j]) {
                for (std::size_t r = 0; r < x.rows; ++r) {
                    out[r * m + j] += eta_ * tree.leaf_for(x.row(r))[0];
                }
            }
        }
    }
}

Matrix Booster::predict(MatrixView x) const {
    Matrix out(x.rows, n_outputs_);
    predict_into(x, out.data());
    return out;
}

// ============================================================================
// Serialization
// ============================================================================
//
// Layout (little-endian): magic "FGB1", u32 version = 1, u32 mode, u32 m,
// u32 p, f32 eta, f32 base[m], u32 sequence count, then per sequence a u32
// tree count and per tree a u32 node count followed by fixed node records of
// 17 + 4 * m_leaf bytes: {u8 is_leaf, u32 feature, f32 split, u32 left,
// u32 right | f32 leaf_values[m_leaf]}, zero-padded to the record size.

namespace {

constexpr char kMagic[4] = {'F', 'G', 'B', '1'};
constexpr std::uint32_t kVersion = 1;

template <class T>
void put(std::vector<std::uint8_t>& buf, T value) {
    const std::size_t at = buf.size();
    buf.resize(at + sizeof(T));
    std::memcpy(buf.data() + at, &value, sizeof(T));
}

struct Reader {
    const std::uint8_t* data;
    std::size_t size;
    std::size_t at = 0;

    template <class T>
    T get() {
        if (at + sizeof(T) > size) throw errors::corrupt_file("unexpected end of data");
        T v;
        std::memcpy(&v, data + at, sizeof(T));
        at += sizeof(T);
        return v;
    }
    void skip(std::size_t n) {
        if (at + n > size) throw errors::corrupt_file("unexpected end of data");
        at += n;
    }
};

}  // namespace

std::vector<std::uint8_t> Booster::serialize() const {
    std::vector<std::uint8_t> buf;
    buf.insert(buf.end(), kMagic, kMagic + 4);
    put<std::uint32_t>(buf, kVersion);
    // With one output the two tree modes coincide exactly, so the stored mode
    // is canonically SO and serialized bytes are identical across modes.
    const std::uint32_t mode =
        (n_outputs_ == 1 || mode_ == TreeMode::SingleOutput) ? 0u : 1u;
    put<std::uint32_t>(buf, mode);
    put<std::uint32_t>(buf, n_outputs_);
    put<std::uint32_t>(buf, n_features_);
    put<float>(buf, eta_);
    for (float base : bases_) put<float>(buf, base);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(sequences_.size()));

    const std::uint32_t m_leaf = mode == 0 ? 1u : n_outputs_;
    const std::size_t record = 17 + 4 * static_cast<std::size_t>(m_leaf);
    for (const auto& seq : sequences_) {
        put<std::uint32_t>(buf, static_cast<std::uint32_t>(seq.size()));
        for (const Tree& tree : seq) {
            put<std::uint32_t>(buf, static_cast<std::uint32_t>(tree.n_nodes()));
            for (const TreeNode& node : tree.nodes()) {
                const std::size_t start = buf.size();
                put<std::uint8_t>(buf, node.is_leaf);
                if (node.is_leaf) {
                    const float* lv = tree.leaf_values().data() + node.leaf_offset;
                    for (std::uint32_t t = 0; t < m_leaf; ++t) put<float>(buf, lv[t]);
                } else {
                    put<std::uint32_t>(buf, node.feature);
                    put<float>(buf, node.split_value);
                    put<std::uint32_t>(buf, node.left);
                    put<std::uint32_t>(buf, node.right);
                }
                buf.resize(start + record, 0);
            }
        }
    }
    return buf;
}

Booster Booster::deserialize(const std::uint8_t* data, std::size_t size) {
    Reader rd{data, size};
    char magic[4];
    for (auto& ch : magic) ch = static_cast<char>(rd.get<std::uint8_t>());
    if (std::memcmp(magic, kMagic, 4) != 0) throw errors::corrupt_file("bad magic");
    if (rd.get<std::uint32_t>() != kVersion) throw errors::corrupt_file("unsupported version");

    const std::uint32_t mode = rd.get<std::uint32_t>();
    if (mode > 1) throw errors::corrupt_file("bad mode");
    const std::uint32_t m = rd.get<std::uint32_t>();
    const std::uint32_t p = rd.get<std::uint32_t>();
    if (m == 0 || p == 0) throw errors::corrupt_file("bad shape");
    const float eta = rd.get<float>();

    std::vector<float> bases(m);
    for (auto& base : bases) base = rd.get<float>();

    const std::uint32_t n_seq = rd.get<std::uint32_t>();
    const std::uint32_t expected_seq = mode == 0 ? m : 1u;
    if (n_seq != expected_seq) throw errors::corrupt_file("sequence count mismatch");

    const std::uint32_t m_leaf = mode == 0 ? 1u : m;
    const std::size_t record = 17 + 4 * static_cast<std::size_t>(m_leaf);

    std::vector<std::vector<Tree>> sequences(n_seq);
    std::vector<float> leaf(m_leaf);
    for (auto& seq : sequences) {
        const std::uint32_t n_trees = rd.get<std::uint32_t>();
        seq.reserve(n_trees);
        for (std::uint32_t ti = 0; ti < n_trees; ++ti) {
            const std::uint32_t n_nodes = rd.get<std::uint32_t>();
            if (n_nodes == 0) throw errors::corrupt_file("empty tree");
            Tree tree(m_leaf);
            for (std::uint32_t ni = 0; ni < n_nodes; ++ni) {
                const std::size_t start = rd.at;
                const std::uint8_t is_leaf = rd.get<std::uint8_t>();
                if (is_leaf) {
                    for (auto& v : leaf) v = rd.get<float>();
                    tree.add_leaf(leaf.data());
                } else {
                    const std::uint32_t feature = rd.get<std::uint32_t>();
                    const float split = rd.get<float>();
                    const std::uint32_t left = rd.get<std::uint32_t>();
                    const std::uint32_t right = rd.get<std::uint32_t>();
                    if (feature >= p || left >= n_nodes || right >= n_nodes) {
                        throw errors::corrupt_file("node reference out of range");
                    }
                    const std::uint32_t id = tree.add_internal(feature, 0, split);
                    tree.set_children(id, left, right);
                }
                rd.skip(record - (rd.at - start));
            }
            seq.push_back(std::move(tree));
        }
    }
    if (rd.at != size) throw errors::corrupt_file("trailing bytes");

    return from_parts(mode == 0 ? TreeMode::SingleOutput : TreeMode::MultiOutput, m, p, eta,
                      std::move(bases), std::move(sequences));
}

std::size_t save_booster(const Booster& b, const std::string& path) {
    const auto bytes = b.serialize();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw errors::io_error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw errors::io_error("write failed for " + path);
    return bytes.size();
}

Booster load_booster(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw errors::io_error("cannot open " + path);
    const auto size = static_cast<std::size_t>(in.tellg());
    in.seekg(0);
    std::vector<std::uint8_t> bytes(size);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size));
    if (!in) throw errors::io_error("read failed for " + path);
    return Booster::deserialize(bytes.data(), size);
}

}  // namespace forestgen
