#ifndef GKC_GRAPH_HPP
#define GKC_GRAPH_HPP

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gkc/error.hpp"

namespace gkc {

using NodeId = std::uint32_t;
using Label = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

/// Number of distinct discrete node labels; valid labels are [0, size).
struct LabelDictionary {
    std::size_t size = 1;

    bool contains(Label l) const noexcept { return l < size; }
    bool operator==(const LabelDictionary&) const = default;
};

/// Simple undirected graph with one discrete label per node.
///
/// Nodes are dense indices 0..n-1 and adjacency is stored as sorted neighbor
/// lists, so every iteration order in the library is deterministic. Instances
/// are immutable once built.
class LabeledGraph {
public:
    LabeledGraph() = default;

    /// Builds a graph from labels and an edge list. Duplicate edges (in either
    /// orientation) collapse to one. Self-loops and out-of-range endpoints throw.
    LabeledGraph(std::vector<Label> labels, std::span<const Edge> edges)
        : labels_(std::move(labels)), adj_(labels_.size()) {
        for (auto [u, v] : edges) {
            if (u >= labels_.size() || v >= labels_.size())
                throw InputError("edge endpoint out of range: (" + std::to_string(u) + ", " +
                                 std::to_string(v) + ") with " + std::to_string(labels_.size()) + " nodes");
            if (u == v)
                throw InputError("self-loop on node " + std::to_string(u));
            adj_[u].push_back(v);
            adj_[v].push_back(u);
        }
        for (auto& nb : adj_) {
            std::sort(nb.begin(), nb.end());
            nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
            num_edges_ += nb.size();
        }
        num_edges_ /= 2;
    }

    LabeledGraph(std::vector<Label> labels, std::initializer_list<Edge> edges)
        : LabeledGraph(std::move(labels), std::span<const Edge>(edges.begin(), edges.size())) {}

    std::size_t num_nodes() const noexcept { return labels_.size(); }
    std::size_t num_edges() const noexcept { return num_edges_; }
    bool empty() const noexcept { return labels_.empty(); }

    Label label(NodeId v) const { return labels_[v]; }
    const std::vector<Label>& labels() const noexcept { return labels_; }
    std::span<const NodeId> neighbors(NodeId v) const { return adj_[v]; }
    std::size_t degree(NodeId v) const { return adj_[v].size(); }

    bool has_edge(NodeId u, NodeId v) const {
        if (u >= adj_.size() || v >= adj_.size()) return false;
        return std::binary_search(adj_[u].begin(), adj_[u].end(), v);
    }

    /// Edges as (u, v) with u < v, in lexicographic order.
    std::vector<Edge> edges() const {
        std::vector<Edge> out;
        out.reserve(num_edges_);
        for (NodeId u = 0; u < adj_.size(); ++u)
            for (NodeId v : adj_[u])
                if (u < v) out.emplace_back(u, v);
        return out;
    }

    /// Same structure, different labels.
    LabeledGraph relabeled(std::vector<Label> labels) const {
        if (labels.size() != labels_.size())
            throw InputError("relabel: expected " + std::to_string(labels_.size()) + " labels");
        LabeledGraph g = *this;
        g.labels_ = std::move(labels);
        return g;
    }

    Label max_label() const {
        return labels_.empty() ? 0 : *std::max_element(labels_.begin(), labels_.end());
    }

    bool operator==(const LabeledGraph&) const = default;

private:
    std::vector<Label> labels_;
    std::vector<std::vector<NodeId>> adj_;
    std::size_t num_edges_ = 0;
};

inline void check_labels(const LabeledGraph& g, const LabelDictionary& dict) {
    for (NodeId v = 0; v < g.num_nodes(); ++v)
        if (!dict.contains(g.label(v)))
            throw InputError("node " + std::to_string(v) + " has label " + std::to_string(g.label(v)) +
                             " outside dictionary of size " + std::to_string(dict.size));
}

/// Induced subgraph on `nodes` (must be sorted and unique); local index i maps
/// to nodes[i], so relative order is preserved.
inline LabeledGraph induced_subgraph(const LabeledGraph& g, std::span<const NodeId> nodes) {
    std::vector<NodeId> local(g.num_nodes(), UINT32_MAX);
    std::vector<Label> labels;
    labels.reserve(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        if (nodes[i] >= g.num_nodes()) throw InputError("induced_subgraph: node out of range");
        local[nodes[i]] = static_cast<NodeId>(i);
        labels.push_back(g.label(nodes[i]));
    }
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        for (NodeId w : g.neighbors(nodes[i]))
            if (local[w] != UINT32_MAX && local[w] > i) edges.emplace_back(static_cast<NodeId>(i), local[w]);
    return LabeledGraph(std::move(labels), edges);
}

/// Renumbers nodes: old node v becomes perm[v].
inline LabeledGraph permute(const LabeledGraph& g, std::span<const NodeId> perm) {
    if (perm.size() != g.num_nodes()) throw InputError("permute: permutation size mismatch");
    std::vector<Label> labels(g.num_nodes());
    for (NodeId v = 0; v < g.num_nodes(); ++v) labels[perm[v]] = g.label(v);
    auto edges = g.edges();
    for (auto& [u, v] : edges) {
        u = perm[u];
        v = perm[v];
    }
    return LabeledGraph(std::move(labels), edges);
}

/// Disjoint union; nodes of `b` are shifted by a.num_nodes().
inline LabeledGraph disjoint_union(const LabeledGraph& a, const LabeledGraph& b) {
    auto labels = a.labels();
    labels.insert(labels.end(), b.labels().begin(), b.labels().end());
    auto edges = a.edges();
    const auto shift = static_cast<NodeId>(a.num_nodes());
    for (auto [u, v] : b.edges()) edges.emplace_back(u + shift, v + shift);
    return LabeledGraph(std::move(labels), edges);
}

/// Hop distances from `source`, truncated at `max_depth` (unreached = -1).
inline std::vector<int> bfs_distances(const LabeledGraph& g, NodeId source, std::size_t max_depth) {
    std::vector<int> dist(g.num_nodes(), -1);
    std::queue<NodeId> frontier;
    dist[source] = 0;
    frontier.push(source);
    while (!frontier.empty()) {
        NodeId u = frontier.front();
        frontier.pop();
        if (static_cast<std::size_t>(dist[u]) == max_depth) continue;
        for (NodeId w : g.neighbors(u)) {
            if (dist[w] < 0) {
                dist[w] = dist[u] + 1;
                frontier.push(w);
            }
        }
    }
    return dist;
}

/// r-hop neighbourhood of a node: the nodes at distance at most r and every
/// edge between them. Local nodes are ordered by parent index.
struct EgoSubgraph {
    LabeledGraph graph;
    NodeId center = 0;
    std::vector<NodeId> origin_map;
};

inline EgoSubgraph ego_subgraph(const LabeledGraph& g, NodeId v, std::size_t radius) {
    if (v >= g.num_nodes())
        throw InputError("ego_subgraph: node " + std::to_string(v) + " out of range for graph with " +
                         std::to_string(g.num_nodes()) + " nodes");
    EgoSubgraph ego;
    if (radius == 0) {
        ego.graph = LabeledGraph({g.label(v)}, {});
        ego.origin_map = {v};
        return ego;
    }
    auto dist = bfs_distances(g, v, radius);
    for (NodeId u = 0; u < g.num_nodes(); ++u)
        if (dist[u] >= 0) ego.origin_map.push_back(u);
    ego.center = static_cast<NodeId>(
        std::lower_bound(ego.origin_map.begin(), ego.origin_map.end(), v) - ego.origin_map.begin());
    ego.graph = induced_subgraph(g, ego.origin_map);
    return ego;
}

/// Maximal connected node sets, largest first; equal sizes ordered by their
/// smallest node. Each set is sorted.
inline std::vector<std::vector<NodeId>> connected_components(const LabeledGraph& g) {
    std::vector<std::vector<NodeId>> comps;
    std::vector<bool> seen(g.num_nodes(), false);
    for (NodeId s = 0; s < g.num_nodes(); ++s) {
        if (seen[s]) continue;
        std::vector<NodeId> comp{s};
        seen[s] = true;
        for (std::size_t head = 0; head < comp.size(); ++head)
            for (NodeId w : g.neighbors(comp[head]))
                if (!seen[w]) {
                    seen[w] = true;
                    comp.push_back(w);
                }
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
    }
    // components were discovered in order of their smallest node
    std::stable_sort(comps.begin(), comps.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    return comps;
}

inline bool is_connected(const LabeledGraph& g) {
    return g.num_nodes() <= 1 || connected_components(g).size() == 1;
}

/// Node set of the largest component (ties: the one holding the smallest index).
inline std::vector<NodeId> max_component_nodes(const LabeledGraph& g) {
    if (g.empty()) throw InputError("max_connected_component: empty graph");
    return connected_components(g).front();
}

inline LabeledGraph max_connected_component(const LabeledGraph& g) {
    auto nodes = max_component_nodes(g);
    if (nodes.size() == g.num_nodes()) return g;
    return induced_subgraph(g, nodes);
}

namespace detail {

inline bool extend_isomorphism(const LabeledGraph& a, const LabeledGraph& b, std::vector<int>& map,
                               std::vector<bool>& used, NodeId next) {
    if (next == a.num_nodes()) return true;
    for (NodeId cand = 0; cand < b.num_nodes(); ++cand) {
        if (used[cand] || a.label(next) != b.label(cand) || a.degree(next) != b.degree(cand)) continue;
        bool ok = true;
        for (NodeId prev = 0; prev < next && ok; ++prev)
            ok = a.has_edge(next, prev) == b.has_edge(cand, static_cast<NodeId>(map[prev]));
        if (!ok) continue;
        map[next] = static_cast<int>(cand);
        used[cand] = true;
        if (extend_isomorphism(a, b, map, used, next + 1)) return true;
        used[cand] = false;
    }
    map[next] = -1;
    return false;
}

} // namespace detail

inline constexpr std::size_t kCanonicalCompareLimit = 8;

/// Exact label-preserving isomorphism test by backtracking permutation search.
/// Limited to graphs of at most eight nodes.
inline bool graph_equal_canonical(const LabeledGraph& a, const LabeledGraph& b) {
    if (a.num_nodes() > kCanonicalCompareLimit || b.num_nodes() > kCanonicalCompareLimit)
        throw UnsupportedError("graph_equal_canonical supports at most 8 nodes");
    if (a.num_nodes() != b.num_nodes() || a.num_edges() != b.num_edges()) return false;
    auto signature = [](const LabeledGraph& g) {
        std::vector<std::pair<Label, std::size_t>> s;
        for (NodeId v = 0; v < g.num_nodes(); ++v) s.emplace_back(g.label(v), g.degree(v));
        std::sort(s.begin(), s.end());
        return s;
    };
    if (signature(a) != signature(b)) return false;
    std::vector<int> map(a.num_nodes(), -1);
    std::vector<bool> used(b.num_nodes(), false);
    return detail::extend_isomorphism(a, b, map, used, 0);
}

/// Writes `graph G { v0 [label="0"]; ... v0 -- v1; ... }`. When `fill_colors`
/// is given it must hold one color string per node.
inline void write_dot(std::ostream& os, const LabeledGraph& g,
                      std::optional<std::span<const std::string>> fill_colors = std::nullopt,
                      std::string_view name = "G") {
    if (fill_colors && fill_colors->size() != g.num_nodes())
        throw InputError("write_dot: one fill color per node required");
    os << "graph " << name << " {\n";
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
        os << "  v" << v << " [label=\"" << g.label(v) << "\"";
        if (fill_colors) os << ", style=filled, fillcolor=\"" << (*fill_colors)[v] << "\"";
        os << "];\n";
    }
    for (auto [u, v] : g.edges()) os << "  v" << u << " -- v" << v << ";\n";
    os << "}\n";
}

} // namespace gkc

#endif // GKC_GRAPH_HPP
