#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "filtlearn/rng.hpp"

namespace filtlearn::ad {

/// Named trainable array with Adam moment buffers. Frozen parameters keep
/// receiving gradients but are never updated (and their bits never change).
struct Param {
    std::vector<std::size_t> shape;
    std::vector<double> value;
    std::vector<double> grad;
    std::vector<double> m, v; // Adam first/second moments
    bool trainable = true;

    std::size_t count() const { return value.size(); }
};

class ParameterStore {
public:
    Param& add(const std::string& name, std::vector<std::size_t> shape,
               std::vector<double> init);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) != 0; }

    void zero_grad();
    std::size_t total_scalars() const;

    /// Deterministic (lexicographic) iteration order.
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

private:
    std::map<std::string, Param> params_;
};

using NodeId = std::int32_t;

enum class RunMode { train, eval };

/// Reverse-mode tape over row-major matrices of doubles. Nodes are created in
/// topological order; backward() replays registered closures in reverse.
/// Replaying identical forward+backward passes is bit-identical: every
/// reduction in every op iterates in a fixed order, and the permutation-
/// sensitive pools sort their summands first.
class Tape {
public:
    struct Node {
        std::size_t rows = 0, cols = 0;
        std::vector<double> val;
        std::vector<double> grad;
        std::function<void(Tape&)> back; // empty for leaves
    };

    NodeId input(std::size_t rows, std::size_t cols, std::vector<double> v);
    NodeId scalar(double v) { return input(1, 1, {v}); }

    /// Generic custom op: caller supplies the forward value and a closure
    /// that routes grad(out) wherever it needs to go.
    NodeId custom(std::size_t rows, std::size_t cols, std::vector<double> v,
                  std::function<void(Tape&)> back);

    std::size_t rows(NodeId id) const { return nodes_[id].rows; }
    std::size_t cols(NodeId id) const { return nodes_[id].cols; }
    const std::vector<double>& value(NodeId id) const { return nodes_[id].val; }
    std::vector<double>& grad(NodeId id) { return nodes_[id].grad; }

    // --- ops ------------------------------------------------------------
    /// y = x * W^T + b with W: [out x in], b: [out], x: [r x in].
    NodeId affine(ParameterStore& ps, const std::string& w_name,
                  const std::string& b_name, NodeId x);
    NodeId relu(NodeId x);
    NodeId add(NodeId a, NodeId b);
    NodeId scale(NodeId x, double s);
    /// Per-column batch normalization over rows. Train mode uses batch
    /// statistics and (optionally) updates running stats; eval mode applies
    /// the stored running statistics pointwise.
    NodeId batch_norm(ParameterStore& ps, const std::string& prefix, NodeId x,
                      RunMode mode, bool update_running = true);
    NodeId dropout(NodeId x, double p, SplitMix64& rng, RunMode mode);
    /// Sorted-summand column sums over groups of `segment_len` consecutive
    /// rows: [S*L x C] -> [S x C]. Bitwise invariant to permuting rows within
    /// a segment.
    NodeId segment_sum_pool(NodeId x, std::size_t segment_len);
    NodeId sum_pool_rows(NodeId x) { return segment_sum_pool(x, rows(x)); }
    NodeId concat_cols(NodeId a, NodeId b);
    NodeId broadcast_rows(NodeId x, std::size_t r);
    /// Mean softmax cross-entropy for a single row of logits.
    NodeId cross_entropy(NodeId logits, int label);
    /// Mean squared error against a constant target of identical shape.
    NodeId mse_against(NodeId pred, std::vector<double> target);
    /// out[m] = sum_p exp(-||q_p - c_m||^2 / 2) over diagram points q [P x 2],
    /// centers param [M x 2]. P == 0 yields zeros.
    NodeId gaussian_kernel_sum(ParameterStore& ps, const std::string& centers,
                               NodeId points);

    void backward(NodeId root);
    void backward(NodeId root, std::span<const double> seed);
    void clear();
    std::size_t size() const { return nodes_.size(); }

private:
    NodeId push(std::size_t rows, std::size_t cols, std::vector<double> v,
                std::function<void(Tape&)> back);
    std::vector<Node> nodes_;
};

/// Layer widths of a fully connected ReLU network, e.g. {1, 64, 128, 256}
/// (ReLU after every layer but the last). Optional per-layer batch norm and
/// dropout on selected layers.
struct MlpSpec {
    std::vector<std::size_t> dims;
    bool use_batch_norm = false;
    std::vector<std::size_t> dropout_layers; // indices of affine layers (0-based)
    double dropout_p = 0.5;

    std::size_t in_dim() const { return dims.front(); }
    std::size_t out_dim() const { return dims.back(); }
    std::size_t n_layers() const { return dims.size() - 1; }
};

/// He-style uniform init (fan-in); if final_sigma >= 0 the last layer instead
/// gets N(0, final_sigma^2) weights and zero bias so the network starts near
/// the zero function.
void init_mlp_params(ParameterStore& ps, const std::string& prefix,
                     const MlpSpec& spec, SplitMix64& rng, double final_sigma = -1.0);

NodeId mlp_forward(Tape& t, ParameterStore& ps, const std::string& prefix,
                   const MlpSpec& spec, NodeId x, RunMode mode,
                   SplitMix64* dropout_rng = nullptr, bool update_running = true);

} // namespace filtlearn::ad
