#ifndef GKC_GKC_HPP
#define GKC_GKC_HPP

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "gkc/graph.hpp"
#include "gkc/head.hpp"
#include "gkc/kernels.hpp"
#include "gkc/mask.hpp"
#include "gkc/quantizer.hpp"
#include "gkc/rng.hpp"

namespace gkc {

/// One bank of structural masks compared against every r-hop ego-subgraph.
struct LayerConfig {
    std::size_t num_masks = 16;
    std::size_t max_mask_nodes = 6;
    std::size_t radius = 3;
    KernelConfig kernel;
    LabelDictionary input_dictionary;

    void validate() const {
        if (num_masks < 1) throw InputError("layer needs at least one mask");
        if (max_mask_nodes < 1) throw InputError("masks need at least one node");
        kernel.validate();
    }
    bool operator==(const LayerConfig&) const = default;
};

/// Network shape. Each layer is a list of banks whose feature blocks are
/// concatenated; between layers the features are vector-quantised with
/// `quantizer_k[l]` clusters, which becomes the next layer's dictionary.
struct NetworkConfig {
    std::vector<std::vector<LayerConfig>> layers;
    std::vector<std::size_t> quantizer_k;
    std::size_t hidden = 16;
    std::size_t num_classes = 2;
    Activation activation = Activation::relu;

    std::size_t num_layers() const { return layers.size(); }

    std::size_t layer_width(std::size_t l) const {
        std::size_t w = 0;
        for (const auto& b : layers[l]) w += b.num_masks;
        return w;
    }

    std::size_t total_masks() const {
        std::size_t w = 0;
        for (std::size_t l = 0; l < layers.size(); ++l) w += layer_width(l);
        return w;
    }

    void validate() const {
        if (layers.empty()) throw InputError("network needs at least one layer");
        if (quantizer_k.size() + 1 != layers.size())
            throw InputError("network needs one quantizer per junction between layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            if (layers[l].empty()) throw InputError("layer " + std::to_string(l) + " has no banks");
            for (const auto& b : layers[l]) {
                b.validate();
                if (l > 0 && b.input_dictionary.size != quantizer_k[l - 1])
                    throw InputError("layer " + std::to_string(l) + " dictionary must equal quantizer k");
                if (b.input_dictionary != layers[l].front().input_dictionary)
                    throw InputError("banks of one layer must share the input dictionary");
            }
        }
        if (hidden < 1 || num_classes < 1) throw InputError("MLP needs hidden >= 1 and classes >= 1");
    }

    /// `depth` identical single-bank layers. The first layer reads `input`;
    /// deeper layers read `k` quantiser clusters.
    static NetworkConfig uniform(std::size_t depth, LayerConfig base, LabelDictionary input, std::size_t k,
                                 std::size_t classes, Activation act = Activation::relu) {
        NetworkConfig net;
        for (std::size_t l = 0; l < depth; ++l) {
            LayerConfig c = base;
            c.input_dictionary = l == 0 ? input : LabelDictionary{k};
            net.layers.push_back({c});
            if (l + 1 < depth) net.quantizer_k.push_back(k);
        }
        net.hidden = base.num_masks;
        net.num_classes = classes;
        net.activation = act;
        return net;
    }
};

/// Default quantiser size: the input dictionary size clamped to [4, 16].
inline std::size_t default_quantizer_k(const LabelDictionary& d) {
    return std::clamp<std::size_t>(d.size, 4, 16);
}

struct MaskBank {
    std::vector<StructuralMask> masks;
};

/// Complete trainable state.
struct ModelParams {
    NetworkConfig net;
    std::vector<std::vector<MaskBank>> banks; // [layer][bank]
    std::vector<Codebook> codebooks;          // one per junction
    MlpParams mlp;

    /// Random masks (stream "masks"), fresh codebooks, Glorot MLP (stream "mlp").
    static ModelParams init(const NetworkConfig& net, std::uint64_t seed) {
        net.validate();
        ModelParams p;
        p.net = net;
        auto mask_rng = make_rng(seed, "masks");
        for (const auto& layer : net.layers) {
            std::vector<MaskBank> banks;
            for (const auto& cfg : layer) {
                MaskBank bank;
                for (std::size_t i = 0; i < cfg.num_masks; ++i)
                    bank.masks.push_back(
                        StructuralMask::random(cfg.max_mask_nodes, cfg.input_dictionary.size, mask_rng));
                banks.push_back(std::move(bank));
            }
            p.banks.push_back(std::move(banks));
        }
        for (auto k : net.quantizer_k) p.codebooks.emplace_back(k);
        auto mlp_rng = make_rng(seed, "mlp");
        p.mlp = MlpParams::init(net.total_masks(), net.hidden, net.num_classes, net.activation, mlp_rng);
        return p;
    }

    /// First concatenated column of (layer, bank).
    std::size_t column_offset(std::size_t layer, std::size_t bank) const {
        std::size_t off = 0;
        for (std::size_t l = 0; l < layer; ++l) off += net.layer_width(l);
        for (std::size_t b = 0; b < bank; ++b) off += net.layers[layer][b].num_masks;
        return off;
    }

    /// (offset, width) of every bank, in concatenation order.
    ColumnBlocks column_blocks() const {
        ColumnBlocks blocks;
        for (std::size_t l = 0; l < net.layers.size(); ++l)
            for (std::size_t b = 0; b < net.layers[l].size(); ++b)
                blocks.emplace_back(static_cast<Eigen::Index>(column_offset(l, b)),
                                    static_cast<Eigen::Index>(net.layers[l][b].num_masks));
        return blocks;
    }
};

/// Responses of every mask against every node's ego-subgraph embedding.
inline NodeFeatures mask_responses(std::span<const Embedding> masks, std::span<const Embedding> egos,
                                   bool normalized) {
    NodeFeatures x(static_cast<Eigen::Index>(egos.size()), static_cast<Eigen::Index>(masks.size()));
    for (std::size_t v = 0; v < egos.size(); ++v)
        for (std::size_t i = 0; i < masks.size(); ++i)
            x(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(i)) = kernel_value(masks[i], egos[v], normalized);
    return x;
}

inline std::vector<Embedding> ego_embeddings(GraphKernel& kernel, const LabeledGraph& g, std::size_t radius) {
    std::vector<Embedding> out;
    out.reserve(g.num_nodes());
    for (NodeId v = 0; v < g.num_nodes(); ++v) out.push_back(kernel.embed(ego_subgraph(g, v, radius).graph));
    return out;
}

/// Graph kernel convolution: x_i(v) = K(M_i, N^r(v)) for every node v and mask i.
inline NodeFeatures gkc_forward(const LayerConfig& layer, std::span<const StructuralMask> masks,
                                const LabeledGraph& g) {
    layer.validate();
    if (masks.size() != layer.num_masks)
        throw InputError("gkc_forward: expected " + std::to_string(layer.num_masks) + " masks, got " +
                         std::to_string(masks.size()));
    check_labels(g, layer.input_dictionary);
    auto kernel = make_kernel(layer.kernel);
    std::vector<Embedding> mask_emb;
    for (const auto& m : masks) mask_emb.push_back(kernel->embed(m.graph()));
    const auto egos = ego_embeddings(*kernel, g, layer.radius);
    return mask_responses(mask_emb, egos, layer.kernel.normalized);
}

/// Per-graph record of a forward pass, kept for the backward/DRD step.
struct GraphForward {
    std::vector<LabeledGraph> layer_inputs;               // relabelled graph entering each layer
    std::vector<std::vector<const std::vector<Embedding>*>> egos; // [layer][bank]
    std::vector<std::vector<std::vector<Embedding>>> owned_egos;  // storage for uncached layers
    NodeFeatures features;                                // all layers concatenated
};

struct ForwardOptions {
    /// When set, k-means is run on this batch at every junction (updating
    /// these codebooks, normally the model's own) before labels are assigned.
    std::vector<Codebook>* fit_codebooks = nullptr;
    Rng* kmeans_rng = nullptr;
    /// Concatenated columns forced to zero before they reach pooling or the
    /// next quantiser.
    std::vector<std::size_t> zeroed_columns;
};

/// Stateful evaluator for one model: owns one kernel instance (and colour
/// table) per bank and caches first-layer ego embeddings by graph key, since
/// first-layer inputs never change. Not thread-safe.
class Network {
public:
    explicit Network(const NetworkConfig& net) : net_(net) {
        net.validate();
        for (const auto& layer : net.layers) {
            std::vector<std::unique_ptr<GraphKernel>> ks;
            for (const auto& b : layer) ks.push_back(make_kernel(b.kernel));
            kernels_.push_back(std::move(ks));
        }
        cache_.resize(net.layers.front().size());
    }

    GraphKernel& kernel(std::size_t layer, std::size_t bank) { return *kernels_[layer][bank]; }

    /// Forward pass over a batch. `keys[i]` (optional) identifies graphs[i]
    /// for the first-layer cache; pass an empty span to disable caching.
    std::vector<GraphForward> forward(const ModelParams& params, std::span<const LabeledGraph* const> graphs,
                                      std::span<const std::size_t> keys, const ForwardOptions& opt = {}) {
        const std::size_t depth = net_.num_layers();
        std::vector<GraphForward> out(graphs.size());
        for (std::size_t g = 0; g < graphs.size(); ++g) {
            if (graphs[g]->empty()) throw InputError("forward: graph has no nodes");
            check_labels(*graphs[g], net_.layers.front().front().input_dictionary);
            out[g].layer_inputs.push_back(*graphs[g]);
            out[g].features.resize(static_cast<Eigen::Index>(graphs[g]->num_nodes()),
                                   static_cast<Eigen::Index>(net_.total_masks()));
            out[g].egos.resize(depth);
            out[g].owned_egos.resize(depth);
        }
        std::size_t col = 0;
        for (std::size_t l = 0; l < depth; ++l) {
            const std::size_t layer_start = col;
            for (std::size_t b = 0; b < net_.layers[l].size(); ++b) {
                const auto& cfg = net_.layers[l][b];
                auto& kernel = *kernels_[l][b];
                std::vector<Embedding> mask_emb;
                for (const auto& m : params.banks[l][b].masks) mask_emb.push_back(kernel.embed(m.graph()));
                for (std::size_t g = 0; g < graphs.size(); ++g) {
                    auto& fw = out[g];
                    const std::vector<Embedding>* egos = nullptr;
                    if (l == 0 && !keys.empty()) {
                        auto& slot = cache_[b][keys[g]];
                        if (slot.empty() && fw.layer_inputs[0].num_nodes() > 0)
                            slot = ego_embeddings(kernel, fw.layer_inputs[0], cfg.radius);
                        egos = &slot;
                    } else {
                        fw.owned_egos[l].push_back(ego_embeddings(kernel, fw.layer_inputs[l], cfg.radius));
                        egos = nullptr; // pointer fixed up below, after the vector stops growing
                    }
                    fw.egos[l].push_back(egos);
                    fw.features.middleCols(static_cast<Eigen::Index>(col), static_cast<Eigen::Index>(cfg.num_masks)) =
                        mask_responses(mask_emb, egos ? *egos : fw.owned_egos[l].back(), cfg.kernel.normalized);
                }
                col += cfg.num_masks;
            }
            for (auto& fw : out) {
                std::size_t owned = 0;
                for (auto& p : fw.egos[l])
                    if (!p) p = &fw.owned_egos[l][owned++];
                for (auto z : opt.zeroed_columns)
                    if (z >= layer_start && z < col) fw.features.col(static_cast<Eigen::Index>(z)).setZero();
            }
            if (l + 1 == depth) break;

            // vector quantisation of this layer's block into the next dictionary
            const auto width = static_cast<Eigen::Index>(col - layer_start);
            const Codebook* cb = &params.codebooks[l];
            if (opt.fit_codebooks) {
                auto& fit = (*opt.fit_codebooks)[l];
                Eigen::Index rows = 0;
                for (const auto& fw : out) rows += fw.features.rows();
                Eigen::MatrixXd stacked(rows, width);
                Eigen::Index r = 0;
                for (const auto& fw : out) {
                    stacked.middleRows(r, fw.features.rows()) =
                        fw.features.middleCols(static_cast<Eigen::Index>(layer_start), width);
                    r += fw.features.rows();
                }
                if (!opt.kmeans_rng) throw InputError("forward: fitting codebooks requires an rng");
                if (fit.initialized || static_cast<std::size_t>(rows) >= fit.k) fit_update(fit, stacked, *opt.kmeans_rng);
                cb = &fit;
            }
            if (!cb->initialized) throw StateError("forward: codebook " + std::to_string(l) + " is not initialized");
            for (auto& fw : out) {
                auto labels = assign(*cb, fw.features.middleCols(static_cast<Eigen::Index>(layer_start), width));
                fw.layer_inputs.push_back(fw.layer_inputs[l].relabeled(std::move(labels)));
            }
        }
        return out;
    }

    void clear_cache() {
        for (auto& c : cache_) c.clear();
    }

private:
    NetworkConfig net_;
    std::vector<std::vector<std::unique_ptr<GraphKernel>>> kernels_;
    std::vector<std::unordered_map<std::size_t, std::vector<Embedding>>> cache_;
};

/// Concatenated node features (n x total masks) of one graph.
inline NodeFeatures network_forward(const NetworkConfig& net, const ModelParams& params, const LabeledGraph& g) {
    Network network(net);
    const LabeledGraph* ptr = &g;
    auto out = network.forward(params, std::span<const LabeledGraph* const>(&ptr, 1), {});
    return std::move(out.front().features);
}

} // namespace gkc

#endif // GKC_GKC_HPP
