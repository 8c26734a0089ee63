#ifndef GKC_MASK_HPP
#define GKC_MASK_HPP

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gkc/adam.hpp"
#include "gkc/graph.hpp"
#include "gkc/rng.hpp"

namespace gkc {

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

/// Index of the unordered slot pair (i, j), i < j < d, in row-major order.
inline std::size_t pair_index(std::size_t i, std::size_t j, std::size_t d) {
    if (i > j) std::swap(i, j);
    return i * d - i * (i + 1) / 2 + (j - i - 1);
}

/// Learned edit-operation distribution of one mask. Edge presence is a
/// sigmoid of a per-pair logit, node labels a per-slot softmax.
struct EditProbabilities {
    Eigen::VectorXd edge_logits;  // d(d-1)/2
    Eigen::MatrixXd label_logits; // d x |D|
    AdamState edge_adam;
    AdamState label_adam;

    EditProbabilities() = default;
    EditProbabilities(std::size_t d, std::size_t dict_size)
        : edge_logits(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d * (d - 1) / 2))),
          label_logits(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(dict_size))) {}

    std::size_t slots() const { return static_cast<std::size_t>(label_logits.rows()); }
    std::size_t dict_size() const { return static_cast<std::size_t>(label_logits.cols()); }

    double edge_prob(std::size_t i, std::size_t j) const {
        return sigmoid(edge_logits(static_cast<Eigen::Index>(pair_index(i, j, slots()))));
    }

    Eigen::VectorXd label_probs(std::size_t slot) const {
        Eigen::VectorXd z = label_logits.row(static_cast<Eigen::Index>(slot)).transpose();
        Eigen::VectorXd e = (z.array() - z.maxCoeff()).exp();
        return e / e.sum();
    }
};

/// Learnable structural filter. It owns `d` node slots; the mask graph is the
/// largest connected component of the slot graph (ties: the component holding
/// the lowest slot). Slots outside it keep their label but no edges, and can
/// rejoin through an added edge.
class StructuralMask {
public:
    StructuralMask() = default;

    StructuralMask(std::vector<Label> slot_labels, std::span<const Edge> slot_edges, std::size_t dict_size)
        : slot_labels_(std::move(slot_labels)) {
        if (slot_labels_.empty()) throw InputError("structural mask needs at least one slot");
        probs = EditProbabilities(slot_labels_.size(), dict_size);
        for (Label l : slot_labels_)
            if (l >= dict_size) throw InputError("mask label outside dictionary");
        rebuild(LabeledGraph(slot_labels_, slot_edges));
    }

    /// Mask whose slots are exactly the nodes of `g` plus `extra_slots` free ones.
    static StructuralMask from_graph(const LabeledGraph& g, std::size_t dict_size, std::size_t extra_slots = 0) {
        auto labels = g.labels();
        labels.resize(labels.size() + extra_slots, 0);
        auto edges = g.edges();
        return StructuralMask(std::move(labels), edges, dict_size);
    }

    /// Uniform random labelled spanning tree over the d slots (via a Prüfer
    /// sequence), each remaining pair added with probability `extra_edge_prob`.
    static StructuralMask random(std::size_t d, std::size_t dict_size, Rng& rng, double extra_edge_prob = 0.3) {
        if (d == 0 || dict_size == 0) throw InputError("random mask needs d >= 1 and a non-empty dictionary");
        std::vector<Edge> edges;
        if (d == 2) edges.emplace_back(0, 1);
        if (d > 2) {
            std::vector<NodeId> pruefer(d - 2);
            for (auto& x : pruefer) x = static_cast<NodeId>(uniform_index(rng, d));
            std::vector<std::size_t> degree(d, 1);
            for (auto x : pruefer) ++degree[x];
            for (auto x : pruefer) {
                NodeId leaf = 0;
                while (degree[leaf] != 1) ++leaf;
                edges.emplace_back(std::min(leaf, x), std::max(leaf, x));
                --degree[leaf];
                --degree[x];
            }
            NodeId u = 0;
            while (degree[u] != 1) ++u;
            NodeId v = u + 1;
            while (degree[v] != 1) ++v;
            edges.emplace_back(u, v);
        }
        std::vector<std::vector<bool>> present(d, std::vector<bool>(d, false));
        for (auto [a, b] : edges) present[a][b] = present[b][a] = true;
        for (NodeId i = 0; i < d; ++i)
            for (NodeId j = i + 1; j < d; ++j)
                if (!present[i][j] && uniform01(rng) < extra_edge_prob) edges.emplace_back(i, j);
        std::vector<Label> labels(d);
        for (auto& l : labels) l = static_cast<Label>(uniform_index(rng, dict_size));
        return StructuralMask(std::move(labels), edges, dict_size);
    }

    /// The connected mask graph (compacted active component).
    const LabeledGraph& graph() const noexcept { return graph_; }
    /// Slot index of each node of graph().
    const std::vector<NodeId>& active_slots() const noexcept { return active_; }
    std::size_t max_nodes() const noexcept { return slot_labels_.size(); }
    const LabeledGraph& slot_graph() const noexcept { return slots_; }
    Label slot_label(NodeId s) const { return slot_labels_[s]; }
    bool is_active(NodeId s) const { return std::binary_search(active_.begin(), active_.end(), s); }
    bool has_slot_edge(NodeId a, NodeId b) const { return slots_.has_edge(a, b); }

    /// Replaces the slot structure and re-extracts the largest component.
    void set_slots(std::vector<Label> labels, std::span<const Edge> edges) {
        if (labels.size() != slot_labels_.size()) throw InputError("set_slots: slot count mismatch");
        slot_labels_ = std::move(labels);
        rebuild(LabeledGraph(slot_labels_, edges));
    }

    EditProbabilities probs;

private:
    void rebuild(const LabeledGraph& slots) {
        active_ = max_component_nodes(slots);
        graph_ = induced_subgraph(slots, active_);
        std::vector<Edge> kept;
        for (auto [a, b] : graph_.edges()) kept.emplace_back(active_[a], active_[b]);
        slots_ = LabeledGraph(slot_labels_, kept);
    }

    std::vector<Label> slot_labels_;
    LabeledGraph slots_;
    std::vector<NodeId> active_;
    LabeledGraph graph_;
};

} // namespace gkc

#endif // GKC_MASK_HPP
