#ifndef GKC_KERNELS_HPP
#define GKC_KERNELS_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "gkc/graph.hpp"

namespace gkc {

enum class KernelKind { wl_subtree, graphlet3 };

inline std::string to_string(KernelKind k) {
    return k == KernelKind::wl_subtree ? "wl" : "graphlet";
}

inline KernelKind parse_kernel_kind(const std::string& s) {
    if (s == "wl" || s == "wl_subtree") return KernelKind::wl_subtree;
    if (s == "graphlet" || s == "graphlet3") return KernelKind::graphlet3;
    throw InputError("unknown kernel '" + s + "' (expected wl or graphlet)");
}

struct KernelConfig {
    KernelKind kind = KernelKind::wl_subtree;
    std::size_t wl_iterations = 3;
    bool normalized = true;

    void validate() const {
        if (kind == KernelKind::wl_subtree && wl_iterations < 1)
            throw InputError("wl_subtree kernel needs at least one iteration");
    }
    bool operator==(const KernelConfig&) const = default;
};

/// Interning table for WL colors. A color is identified by the signature
/// (iteration, previous color, sorted neighbour colors); iteration-0 colors are
/// the input labels. Ids are handed out in first-seen order, so graphs refined
/// against the same table share one color space. Not thread-safe.
class ColorTable {
public:
    std::uint32_t intern(const std::vector<std::uint32_t>& signature) {
        auto it = ids_.find(signature);
        if (it != ids_.end()) return it->second;
        auto id = static_cast<std::uint32_t>(ids_.size());
        ids_.emplace(signature, id);
        return id;
    }

    std::size_t size() const noexcept { return ids_.size(); }

private:
    struct SignatureHash {
        std::size_t operator()(const std::vector<std::uint32_t>& s) const noexcept {
            std::uint64_t h = 0x84222325cbf29ce4ULL ^ s.size();
            for (auto x : s) h = (h ^ x) * 0x100000001b3ULL + (h >> 29);
            return static_cast<std::size_t>(h);
        }
    };
    std::unordered_map<std::vector<std::uint32_t>, std::uint32_t, SignatureHash> ids_;
};

struct WlColoring {
    /// colors_per_iteration[t][v]: color of node v after t refinements.
    std::vector<std::vector<std::uint32_t>> colors_per_iteration;
};

inline WlColoring wl_refine(const LabeledGraph& g, std::size_t iterations, ColorTable& table) {
    WlColoring out;
    out.colors_per_iteration.reserve(iterations + 1);
    std::vector<std::uint32_t> sig;
    std::vector<std::uint32_t> current(g.num_nodes());
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
        sig.assign({0u, g.label(v)});
        current[v] = table.intern(sig);
    }
    out.colors_per_iteration.push_back(current);
    for (std::size_t t = 1; t <= iterations; ++t) {
        std::vector<std::uint32_t> next(g.num_nodes());
        for (NodeId v = 0; v < g.num_nodes(); ++v) {
            sig.clear();
            sig.push_back(static_cast<std::uint32_t>(t));
            sig.push_back(current[v]);
            for (NodeId w : g.neighbors(v)) sig.push_back(current[w]);
            std::sort(sig.begin() + 2, sig.end());
            next[v] = table.intern(sig);
        }
        current = std::move(next);
        out.colors_per_iteration.push_back(current);
    }
    return out;
}

inline WlColoring wl_refine(const LabeledGraph& g, std::size_t iterations) {
    ColorTable table;
    return wl_refine(g, iterations, table);
}

/// Sparse explicit feature vector phi(G); the kernel value is <phi(G1), phi(G2)>.
struct Embedding {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> entries; // sorted by feature id
    double self_dot = 0.0;

    static Embedding from_counts(std::map<std::uint32_t, std::uint32_t> counts) {
        Embedding e;
        e.entries.assign(counts.begin(), counts.end());
        e.finalize();
        return e;
    }

    void finalize() {
        std::int64_t s = 0;
        for (auto [id, c] : entries) s += static_cast<std::int64_t>(c) * c;
        self_dot = static_cast<double>(s);
    }
};

inline double dot(const Embedding& a, const Embedding& b) {
    std::int64_t s = 0;
    auto i = a.entries.begin(), j = b.entries.begin();
    while (i != a.entries.end() && j != b.entries.end()) {
        if (i->first < j->first) ++i;
        else if (j->first < i->first) ++j;
        else {
            s += static_cast<std::int64_t>(i->second) * j->second;
            ++i;
            ++j;
        }
    }
    return static_cast<double>(s);
}

/// K(a,b) / sqrt(K(a,a) K(b,b)), or 0 when either self-kernel vanishes.
inline double normalized_dot(const Embedding& a, const Embedding& b) {
    if (a.self_dot <= 0.0 || b.self_dot <= 0.0) return 0.0;
    return dot(a, b) / std::sqrt(a.self_dot * b.self_dot);
}

inline double kernel_value(const Embedding& a, const Embedding& b, bool normalized) {
    return normalized ? normalized_dot(a, b) : dot(a, b);
}

/// Counts of connected induced 3-node subgraphs.
struct Graphlet3Counts {
    std::uint64_t triangles = 0;
    std::uint64_t paths = 0;
};

inline Graphlet3Counts count_graphlets3(const LabeledGraph& g) {
    Graphlet3Counts c;
    std::uint64_t wedges = 0;
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
        auto d = static_cast<std::uint64_t>(g.degree(v));
        wedges += d * (d - (d > 0 ? 1 : 0)) / 2;
        auto nv = g.neighbors(v);
        for (NodeId w : nv) {
            if (w <= v) continue;
            auto nw = g.neighbors(w);
            // common neighbours u > w count each triangle once
            auto i = std::upper_bound(nv.begin(), nv.end(), w);
            auto j = std::upper_bound(nw.begin(), nw.end(), w);
            while (i != nv.end() && j != nw.end()) {
                if (*i < *j) ++i;
                else if (*j < *i) ++j;
                else {
                    ++c.triangles;
                    ++i;
                    ++j;
                }
            }
        }
    }
    // every triangle contributes three closed wedges
    c.paths = wedges - 3 * c.triangles;
    return c;
}

/// Pluggable explicit-feature graph kernel. Implementations may keep caches
/// (e.g. a shared color table) and are therefore not thread-safe.
class GraphKernel {
public:
    virtual ~GraphKernel() = default;
    virtual Embedding embed(const LabeledGraph& g) = 0;
    virtual KernelConfig config() const = 0;

    double evaluate(const LabeledGraph& a, const LabeledGraph& b) {
        auto ea = embed(a);
        auto eb = embed(b);
        return kernel_value(ea, eb, config().normalized);
    }
};

class WlSubtreeKernel final : public GraphKernel {
public:
    explicit WlSubtreeKernel(std::size_t iterations, bool normalized = false)
        : iterations_(iterations), normalized_(normalized) {}

    Embedding embed(const LabeledGraph& g) override {
        // Ids are unique across iterations, so one flat histogram holds all of them.
        auto coloring = wl_refine(g, iterations_, table_);
        std::vector<std::uint32_t> all;
        all.reserve(g.num_nodes() * (iterations_ + 1));
        for (const auto& it : coloring.colors_per_iteration) all.insert(all.end(), it.begin(), it.end());
        std::sort(all.begin(), all.end());
        Embedding e;
        for (std::size_t i = 0; i < all.size();) {
            std::size_t j = i;
            while (j < all.size() && all[j] == all[i]) ++j;
            e.entries.emplace_back(all[i], static_cast<std::uint32_t>(j - i));
            i = j;
        }
        e.finalize();
        return e;
    }

    KernelConfig config() const override {
        return {KernelKind::wl_subtree, iterations_, normalized_};
    }

    ColorTable& table() noexcept { return table_; }

private:
    std::size_t iterations_;
    bool normalized_;
    ColorTable table_;
};

/// Label-blind kernel on (#triangles, #induced 3-paths).
class Graphlet3Kernel final : public GraphKernel {
public:
    explicit Graphlet3Kernel(bool normalized = false) : normalized_(normalized) {}

    Embedding embed(const LabeledGraph& g) override {
        auto c = count_graphlets3(g);
        Embedding e;
        if (c.triangles) e.entries.emplace_back(0u, static_cast<std::uint32_t>(c.triangles));
        if (c.paths) e.entries.emplace_back(1u, static_cast<std::uint32_t>(c.paths));
        e.finalize();
        return e;
    }

    KernelConfig config() const override { return {KernelKind::graphlet3, 0, normalized_}; }

private:
    bool normalized_;
};

inline std::unique_ptr<GraphKernel> make_kernel(const KernelConfig& cfg) {
    cfg.validate();
    if (cfg.kind == KernelKind::wl_subtree)
        return std::make_unique<WlSubtreeKernel>(cfg.wl_iterations, cfg.normalized);
    return std::make_unique<Graphlet3Kernel>(cfg.normalized);
}

/// Sum over iterations 0..h of color-histogram dot products.
inline double wl_subtree_kernel(const LabeledGraph& a, const LabeledGraph& b, std::size_t iterations) {
    WlSubtreeKernel k(iterations);
    return k.evaluate(a, b);
}

inline double graphlet3_kernel(const LabeledGraph& a, const LabeledGraph& b) {
    Graphlet3Kernel k;
    return k.evaluate(a, b);
}

inline double kernel_eval(const KernelConfig& cfg, const LabeledGraph& a, const LabeledGraph& b) {
    return make_kernel(cfg)->evaluate(a, b);
}

/// Symmetric Gram matrix over `graphs` under one shared kernel instance.
inline Eigen::MatrixXd gram_matrix(const KernelConfig& cfg, std::span<const LabeledGraph> graphs) {
    auto kernel = make_kernel(cfg);
    std::vector<Embedding> emb;
    emb.reserve(graphs.size());
    for (const auto& g : graphs) emb.push_back(kernel->embed(g));
    const auto n = static_cast<Eigen::Index>(graphs.size());
    Eigen::MatrixXd gram(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j)
            gram(i, j) = gram(j, i) = kernel_value(emb[i], emb[j], cfg.normalized);
    return gram;
}

/// True when colour refinement run to stability cannot tell the graphs apart.
inline bool wl_indistinguishable(const LabeledGraph& a, const LabeledGraph& b) {
    if (a.num_nodes() != b.num_nodes()) return false;
    ColorTable table;
    const std::size_t max_iter = a.num_nodes() + b.num_nodes() + 1;
    auto ca = wl_refine(a, max_iter, table);
    auto cb = wl_refine(b, max_iter, table);
    std::size_t prev_classes = 0;
    for (std::size_t t = 0; t <= max_iter; ++t) {
        auto ha = ca.colors_per_iteration[t];
        auto hb = cb.colors_per_iteration[t];
        std::sort(ha.begin(), ha.end());
        std::sort(hb.begin(), hb.end());
        if (ha != hb) return false;
        // stable once the joint partition stops growing
        std::vector<std::uint32_t> joint = ha;
        joint.erase(std::unique(joint.begin(), joint.end()), joint.end());
        if (t > 0 && joint.size() == prev_classes) return true;
        prev_classes = joint.size();
    }
    return true;
}

} // namespace gkc

#endif // GKC_KERNELS_HPP
