#ifndef GKC_CHECKPOINT_HPP
#define GKC_CHECKPOINT_HPP

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "gkc/experiment.hpp"

namespace gkc {

// Checkpoint layout (all integers little-endian):
//   "GKCMODEL" | u32 version | u32 entry count
//   manifest: per entry  u32 name length, name bytes, u8 type (0 f64, 1 u64),
//             u32 rank, u64 dims[rank]
//   payload:  every entry's values in manifest order, column-major.
// Color tables are not stored: kernel embeddings are recomputed from graphs.

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

struct Tensor {
    std::uint8_t type = 0; // 0: f64, 1: u64
    std::vector<std::uint64_t> dims;
    std::vector<double> f64;
    std::vector<std::uint64_t> u64;

    std::size_t count() const {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }
};

class TensorWriter {
public:
    void f64(const std::string& name, const double* data, std::vector<std::uint64_t> dims) {
        Tensor t;
        t.dims = std::move(dims);
        t.f64.assign(data, data + t.count());
        add(name, std::move(t));
    }
    void matrix(const std::string& name, const Eigen::MatrixXd& m) {
        f64(name, m.data(), {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())});
    }
    void vector(const std::string& name, const Eigen::VectorXd& v) {
        f64(name, v.data(), {static_cast<std::uint64_t>(v.size())});
    }
    void array(const std::string& name, const Eigen::ArrayXd& v) {
        f64(name, v.data(), {static_cast<std::uint64_t>(v.size())});
    }
    void u64(const std::string& name, std::vector<std::uint64_t> values) {
        Tensor t;
        t.type = 1;
        t.dims = {static_cast<std::uint64_t>(values.size())};
        t.u64 = std::move(values);
        add(name, std::move(t));
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) throw LoadError(path.string(), 0, "cannot write checkpoint");
        auto put = [&](std::uint64_t v, int bytes) {
            for (int i = 0; i < bytes; ++i) out.put(static_cast<char>((v >> (8 * i)) & 0xff));
        };
        out.write("GKCMODEL", 8);
        put(kCheckpointVersion, 4);
        put(order_.size(), 4);
        for (const auto& name : order_) {
            const auto& t = tensors_.at(name);
            put(name.size(), 4);
            out.write(name.data(), static_cast<std::streamsize>(name.size()));
            put(t.type, 1);
            put(t.dims.size(), 4);
            for (auto d : t.dims) put(d, 8);
        }
        for (const auto& name : order_) {
            const auto& t = tensors_.at(name);
            if (t.type == 0)
                for (double x : t.f64) put(std::bit_cast<std::uint64_t>(x), 8);
            else
                for (auto x : t.u64) put(x, 8);
        }
        if (!out) throw LoadError(path.string(), 0, "write failed");
    }

private:
    void add(const std::string& name, Tensor t) {
        if (!tensors_.emplace(name, std::move(t)).second) throw StateError("duplicate checkpoint entry " + name);
        order_.push_back(name);
    }
    std::vector<std::string> order_;
    std::map<std::string, Tensor> tensors_;
};

class TensorReader {
public:
    explicit TensorReader(const std::filesystem::path& path) : path_(path.string()) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw LoadError(path_, 0, "cannot open checkpoint");
        auto get = [&](int bytes) {
            std::uint64_t v = 0;
            for (int i = 0; i < bytes; ++i) {
                const int c = in.get();
                if (c == std::char_traits<char>::eof()) throw LoadError(path_, 0, "truncated checkpoint");
                v |= static_cast<std::uint64_t>(static_cast<unsigned char>(c)) << (8 * i);
            }
            return v;
        };
        char magic[8];
        if (!in.read(magic, 8) || std::string(magic, 8) != "GKCMODEL") throw LoadError(path_, 0, "not a checkpoint");
        const auto version = get(4);
        if (version != kCheckpointVersion)
            throw LoadError(path_, 0, "unsupported checkpoint version " + std::to_string(version));
        const auto count = get(4);
        std::vector<std::string> order;
        for (std::uint64_t e = 0; e < count; ++e) {
            std::string name(get(4), '\0');
            if (!in.read(name.data(), static_cast<std::streamsize>(name.size())))
                throw LoadError(path_, 0, "truncated manifest");
            Tensor t;
            t.type = static_cast<std::uint8_t>(get(1));
            if (t.type > 1) throw LoadError(path_, 0, "bad tensor type in manifest");
            t.dims.resize(get(4));
            for (auto& d : t.dims) d = get(8);
            order.push_back(name);
            tensors_[name] = std::move(t);
        }
        for (const auto& name : order) {
            auto& t = tensors_[name];
            const auto n = t.count();
            if (t.type == 0) {
                t.f64.resize(n);
                for (auto& x : t.f64) x = std::bit_cast<double>(get(8));
            } else {
                t.u64.resize(n);
                for (auto& x : t.u64) x = get(8);
            }
        }
    }

    const Tensor& at(const std::string& name, std::uint8_t type) const {
        auto it = tensors_.find(name);
        if (it == tensors_.end()) throw LoadError(path_, 0, "checkpoint lacks entry " + name);
        if (it->second.type != type) throw LoadError(path_, 0, "entry " + name + " has the wrong type");
        return it->second;
    }
    std::vector<std::uint64_t> u64(const std::string& name) const { return at(name, 1).u64; }
    Eigen::MatrixXd matrix(const std::string& name) const {
        const auto& t = at(name, 0);
        if (t.dims.size() != 2) throw LoadError(path_, 0, "entry " + name + " is not a matrix");
        return Eigen::Map<const Eigen::MatrixXd>(t.f64.data(), static_cast<Eigen::Index>(t.dims[0]),
                                                 static_cast<Eigen::Index>(t.dims[1]));
    }
    Eigen::VectorXd vector(const std::string& name) const {
        const auto& t = at(name, 0);
        return Eigen::Map<const Eigen::VectorXd>(t.f64.data(), static_cast<Eigen::Index>(t.f64.size()));
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::map<std::string, Tensor> tensors_;
};

inline void write_adam(TensorWriter& w, const std::string& prefix, const AdamState& a) {
    w.array(prefix + ".m", a.m);
    w.array(prefix + ".v", a.v);
    w.u64(prefix + ".step", {static_cast<std::uint64_t>(a.step)});
}

inline AdamState read_adam(const TensorReader& r, const std::string& prefix) {
    AdamState a;
    a.m = r.vector(prefix + ".m").array();
    a.v = r.vector(prefix + ".v").array();
    a.step = static_cast<long>(r.u64(prefix + ".step").at(0));
    return a;
}

} // namespace detail

/// key=value description of a network shape.
inline std::string network_config_text(const NetworkConfig& net) {
    std::string s;
    s += "layers=" + std::to_string(net.layers.size()) + "\n";
    s += "hidden=" + std::to_string(net.hidden) + "\n";
    s += "num_classes=" + std::to_string(net.num_classes) + "\n";
    s += "activation=" + to_string(net.activation) + "\n";
    for (std::size_t l = 0; l < net.layers.size(); ++l)
        for (std::size_t b = 0; b < net.layers[l].size(); ++b) {
            const auto& c = net.layers[l][b];
            const std::string p = "layer." + std::to_string(l) + ".bank." + std::to_string(b) + ".";
            s += p + "masks=" + std::to_string(c.num_masks) + "\n";
            s += p + "mask_nodes=" + std::to_string(c.max_mask_nodes) + "\n";
            s += p + "radius=" + std::to_string(c.radius) + "\n";
            s += p + "kernel=" + to_string(c.kernel.kind) + "\n";
            s += p + "wl_iters=" + std::to_string(c.kernel.wl_iterations) + "\n";
            s += p + "normalized=" + std::string(c.kernel.normalized ? "true" : "false") + "\n";
            s += p + "dictionary=" + std::to_string(c.input_dictionary.size) + "\n";
        }
    for (std::size_t j = 0; j < net.quantizer_k.size(); ++j)
        s += "quantizer." + std::to_string(j) + ".k=" + std::to_string(net.quantizer_k[j]) + "\n";
    return s;
}

/// Writes the binary checkpoint to `path` and a config sidecar to `path.cfg`.
/// `extra_config` is appended to the sidecar verbatim.
inline void save_checkpoint(const ModelParams& p, const std::filesystem::path& path,
                            const std::string& extra_config = {}) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    detail::TensorWriter w;
    const auto& net = p.net;
    std::vector<std::uint64_t> shape{net.layers.size(), net.hidden, net.num_classes,
                                     static_cast<std::uint64_t>(net.activation)};
    for (const auto& layer : net.layers) {
        shape.push_back(layer.size());
        for (const auto& c : layer)
            shape.insert(shape.end(), {c.num_masks, c.max_mask_nodes, c.radius, static_cast<std::uint64_t>(c.kernel.kind),
                                       c.kernel.wl_iterations, c.kernel.normalized ? 1u : 0u,
                                       c.input_dictionary.size});
    }
    w.u64("net.shape", shape);
    w.u64("net.quantizer_k", {net.quantizer_k.begin(), net.quantizer_k.end()});
    for (std::size_t l = 0; l < p.banks.size(); ++l)
        for (std::size_t b = 0; b < p.banks[l].size(); ++b)
            for (std::size_t i = 0; i < p.banks[l][b].masks.size(); ++i) {
                const auto& m = p.banks[l][b].masks[i];
                const std::string pre =
                    "mask." + std::to_string(l) + "." + std::to_string(b) + "." + std::to_string(i) + ".";
                std::vector<std::uint64_t> labels, edges;
                for (NodeId s = 0; s < m.max_nodes(); ++s) labels.push_back(m.slot_label(s));
                for (auto [u, v] : m.slot_graph().edges()) edges.insert(edges.end(), {u, v});
                w.u64(pre + "slot_labels", labels);
                w.u64(pre + "slot_edges", edges);
                w.vector(pre + "edge_logits", m.probs.edge_logits);
                w.matrix(pre + "label_logits", m.probs.label_logits);
                detail::write_adam(w, pre + "edge_adam", m.probs.edge_adam);
                detail::write_adam(w, pre + "label_adam", m.probs.label_adam);
            }
    for (std::size_t j = 0; j < p.codebooks.size(); ++j) {
        const auto& cb = p.codebooks[j];
        const std::string pre = "codebook." + std::to_string(j) + ".";
        w.matrix(pre + "centroids", cb.centroids);
        w.u64(pre + "flags", {cb.initialized ? 1u : 0u, cb.degenerate ? 1u : 0u});
        w.f64(pre + "last_displacement", &cb.last_displacement, {1});
    }
    w.matrix("mlp.w1", p.mlp.w1);
    w.vector("mlp.b1", p.mlp.b1);
    w.matrix("mlp.w2", p.mlp.w2);
    w.vector("mlp.b2", p.mlp.b2);
    detail::write_adam(w, "mlp.adam_w1", p.mlp.adam_w1);
    detail::write_adam(w, "mlp.adam_b1", p.mlp.adam_b1);
    detail::write_adam(w, "mlp.adam_w2", p.mlp.adam_w2);
    detail::write_adam(w, "mlp.adam_b2", p.mlp.adam_b2);
    w.save(path);

    std::ofstream cfg(path.string() + ".cfg");
    cfg << "format=gkc-checkpoint\nversion=" << kCheckpointVersion << '\n' << network_config_text(net) << extra_config;
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
    detail::TensorReader r(path);
    auto bad = [&](const std::string& what) { return LoadError(r.path(), 0, what); };
    const auto shape = r.u64("net.shape");
    std::size_t pos = 0;
    auto next = [&] {
        if (pos >= shape.size()) throw bad("net.shape too short");
        return shape[pos++];
    };
    ModelParams p;
    auto& net = p.net;
    const auto depth = next();
    net.hidden = next();
    net.num_classes = next();
    const auto act = next();
    if (act > 1) throw bad("unknown activation id");
    net.activation = static_cast<Activation>(act);
    for (std::uint64_t l = 0; l < depth; ++l) {
        std::vector<LayerConfig> layer(next());
        for (auto& c : layer) {
            c.num_masks = next();
            c.max_mask_nodes = next();
            c.radius = next();
            const auto kind = next();
            if (kind > 1) throw bad("unknown kernel id");
            c.kernel.kind = static_cast<KernelKind>(kind);
            c.kernel.wl_iterations = next();
            c.kernel.normalized = next() != 0;
            c.input_dictionary.size = next();
        }
        net.layers.push_back(std::move(layer));
    }
    for (auto k : r.u64("net.quantizer_k")) net.quantizer_k.push_back(k);
    try {
        net.validate();
    } catch (const InputError& e) {
        throw bad(std::string("invalid network: ") + e.what());
    }
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        std::vector<MaskBank> banks;
        for (std::size_t b = 0; b < net.layers[l].size(); ++b) {
            MaskBank bank;
            const auto& cfg = net.layers[l][b];
            for (std::size_t i = 0; i < cfg.num_masks; ++i) {
                const std::string pre =
                    "mask." + std::to_string(l) + "." + std::to_string(b) + "." + std::to_string(i) + ".";
                std::vector<Label> labels;
                for (auto x : r.u64(pre + "slot_labels")) labels.push_back(static_cast<Label>(x));
                const auto flat = r.u64(pre + "slot_edges");
                if (flat.size() % 2) throw bad(pre + "slot_edges has odd length");
                std::vector<Edge> edges;
                for (std::size_t k = 0; k < flat.size(); k += 2)
                    edges.emplace_back(static_cast<NodeId>(flat[k]), static_cast<NodeId>(flat[k + 1]));
                StructuralMask m(std::move(labels), edges, cfg.input_dictionary.size);
                Eigen::VectorXd el = r.vector(pre + "edge_logits");
                Eigen::MatrixXd ll = r.matrix(pre + "label_logits");
                if (el.size() != m.probs.edge_logits.size() || ll.rows() != m.probs.label_logits.rows() ||
                    ll.cols() != m.probs.label_logits.cols())
                    throw bad(pre + "logit shapes do not match the mask");
                m.probs.edge_logits = std::move(el);
                m.probs.label_logits = std::move(ll);
                m.probs.edge_adam = detail::read_adam(r, pre + "edge_adam");
                m.probs.label_adam = detail::read_adam(r, pre + "label_adam");
                bank.masks.push_back(std::move(m));
            }
            banks.push_back(std::move(bank));
        }
        p.banks.push_back(std::move(banks));
    }
    for (std::size_t j = 0; j < net.quantizer_k.size(); ++j) {
        const std::string pre = "codebook." + std::to_string(j) + ".";
        Codebook cb(net.quantizer_k[j]);
        cb.centroids = r.matrix(pre + "centroids");
        const auto flags = r.u64(pre + "flags");
        if (flags.size() != 2) throw bad(pre + "flags malformed");
        cb.initialized = flags[0] != 0;
        cb.degenerate = flags[1] != 0;
        cb.last_displacement = r.vector(pre + "last_displacement")(0);
        if (cb.initialized && static_cast<std::size_t>(cb.centroids.rows()) != cb.k)
            throw bad(pre + "centroid count differs from k");
        p.codebooks.push_back(std::move(cb));
    }
    p.mlp.activation = net.activation;
    p.mlp.w1 = r.matrix("mlp.w1");
    p.mlp.b1 = r.vector("mlp.b1");
    p.mlp.w2 = r.matrix("mlp.w2");
    p.mlp.b2 = r.vector("mlp.b2");
    if (p.mlp.input_dim() != net.total_masks() || p.mlp.hidden_dim() != net.hidden ||
        p.mlp.num_classes() != net.num_classes || static_cast<std::size_t>(p.mlp.b1.size()) != net.hidden ||
        static_cast<std::size_t>(p.mlp.b2.size()) != net.num_classes)
        throw bad("MLP shapes do not match the network");
    p.mlp.adam_w1 = detail::read_adam(r, "mlp.adam_w1");
    p.mlp.adam_b1 = detail::read_adam(r, "mlp.adam_b1");
    p.mlp.adam_w2 = detail::read_adam(r, "mlp.adam_w2");
    p.mlp.adam_b2 = detail::read_adam(r, "mlp.adam_b2");
    return p;
}

} // namespace gkc

#endif // GKC_CHECKPOINT_HPP
